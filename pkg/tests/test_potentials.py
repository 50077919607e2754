import math
from fractions import Fraction

import numpy as np
import pytest

from hydroswarm import (
    ConfinementSpec,
    Grid,
    KernelSpec,
    admissible_q_windows,
    check_hypotheses,
    eval_gradient,
    eval_potential,
    theta_exponent,
)
from hydroswarm.potentials import load_tabulated_confinement, power_law_gradient_integrable


class TestThetaExponent:
    def test_m2_exact(self):
        assert theta_exponent(Fraction(2)) == Fraction(1, 4)
        assert theta_exponent(2.0) == 0.25

    def test_m_1p8(self):
        # 2*1.8/3 - 1 = 1/5 < 1/4
        assert theta_exponent(Fraction(9, 5)) == Fraction(1, 5)
        assert theta_exponent(1.8) == pytest.approx(0.2, abs=1e-15)

    def test_limit_toward_three_halves(self):
        for m in (1.51, 1.501, 1.5001):
            th = theta_exponent(m)
            assert 0.0 < th < 0.01
        assert theta_exponent(1.5001) < theta_exponent(1.501)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="3/2"):
            theta_exponent(1.5)

    def test_monotone_and_saturates(self):
        ms = np.linspace(1.51, 3.0, 40)
        ths = [theta_exponent(m) for m in ms]
        assert all(b >= a for a, b in zip(ths, ths[1:]))
        # constant 1/4 from m = 15/8 on
        assert theta_exponent(Fraction(15, 8)) == Fraction(1, 4)
        assert theta_exponent(2.5) == 0.25


class TestQWindows:
    def test_m2(self):
        wk, wg = admissible_q_windows(Fraction(2))
        assert wk.lower == 1
        # max(m / (2(m-1)+theta), 1) = max(8/9, 1) = 1
        assert wg.lower == 1
        assert not wk.empty and not wg.empty
        assert wk.upper == math.inf

    def test_m_1p6(self):
        wk, _ = admissible_q_windows(Fraction(8, 5))
        assert wk.lower == Fraction(5, 3)

    def test_gradk_limit(self):
        # q lower bound tends to 3/2 as m -> 3/2+
        _, wg = admissible_q_windows(1.501)
        assert abs(float(wg.lower) - 1.5) < 1e-2

    def test_exact_formula_rational(self):
        m = Fraction(9, 5)
        _, wg = admissible_q_windows(m)
        theta = Fraction(1, 5)
        assert wg.lower == m / (2 * (m - 1) + theta)


class TestEvaluation:
    def test_quadratic_confinement_point(self):
        c = ConfinementSpec("quadratic")
        pts = np.array([[2.0]])
        assert eval_potential(c, pts)[0] == pytest.approx(2.0)
        assert eval_gradient(c, pts)[0, 0] == pytest.approx(2.0)

    def test_kai_at_origin(self):
        k = KernelSpec("gaussian-kai")
        assert eval_potential(k, np.array([[0.0]]))[0] == 0.0

    def test_gaussian_attractive_values(self):
        k = KernelSpec("gaussian-attractive")
        pts = np.array([[1.0]])
        assert eval_potential(k, pts)[0] == pytest.approx(-math.exp(-1.0))
        assert eval_gradient(k, pts)[0, 0] == pytest.approx(2.0 * math.exp(-1.0))

    def test_symmetry(self):
        pts = np.array([[0.3, 1.1, 2.7]])
        for k in (
            KernelSpec("gaussian-attractive"),
            KernelSpec("gaussian-kai"),
            KernelSpec("power-law", b=1.0, cutoff_radius=5.0),
            KernelSpec("gaussian-bump"),
        ):
            np.testing.assert_array_equal(eval_potential(k, pts), eval_potential(k, -pts))

    @pytest.mark.parametrize(
        "spec",
        [
            KernelSpec("gaussian-attractive", amplitude=1.3),
            KernelSpec("gaussian-kai"),
            KernelSpec("power-law", b=1.5, mollify_radius=0.05, cutoff_radius=4.0),
            KernelSpec("power-law", b=-0.5, mollify_radius=0.05, cutoff_radius=4.0),
            ConfinementSpec("quadratic", amplitude=2.0),
        ],
        ids=["gauss", "kai", "pow+", "pow-", "quad"],
    )
    def test_gradient_matches_finite_differences(self, spec):
        # centered differences converge at second order away from kinks
        pts = np.array([[0.4, 0.9, 1.7, 2.4]])
        errs = []
        for h in (1e-3, 5e-4):
            fd = (eval_potential(spec, pts + h) - eval_potential(spec, pts - h)) / (2 * h)
            errs.append(np.abs(fd - eval_gradient(spec, pts)[0]).max())
        assert errs[0] < 5e-5
        if errs[1] > 1e-11:
            ratio = errs[0] / errs[1]
            assert 3.0 < ratio < 5.0
        else:
            # polynomial potentials: centered differences are exact, errors
            # sit at rounding level for both h
            assert errs[0] < 1e-10

    def test_power_law_mollified_at_origin(self):
        k = KernelSpec("power-law", b=-1.0, mollify_radius=0.1, cutoff_radius=5.0)
        origin = np.array([[0.0]])
        v = eval_potential(k, origin)[0]
        assert np.isfinite(v)
        # cap matches value and slope at the mollification radius
        r0 = 0.1
        inner = eval_potential(k, np.array([[r0 * (1 - 1e-8)]]))[0]
        outer = eval_potential(k, np.array([[r0 * (1 + 1e-8)]]))[0]
        assert inner == pytest.approx(outer, rel=1e-6)

    def test_power_law_rejects_bad_exponent(self):
        with pytest.raises(ValueError, match="b > -2"):
            KernelSpec("power-law", b=-2.5)

    def test_tabulated_roundtrip(self, tmp_path):
        r = np.linspace(0, 5, 51)
        path = tmp_path / "phi.txt"
        np.savetxt(path, np.column_stack([r, r**2 / 2]))
        c = load_tabulated_confinement(path, nu=0.5)
        pts = np.array([[1.5]])
        assert eval_potential(c, pts)[0] == pytest.approx(1.125, rel=1e-3)
        assert eval_gradient(c, pts)[0, 0] == pytest.approx(1.5, rel=1e-2)


class TestCheckHypotheses:
    def test_gaussian_kernel_admissible(self):
        g = Grid(1, (128,), (8.0,))
        rep = check_hypotheses(
            KernelSpec("gaussian-attractive"), ConfinementSpec("quadratic"), 2.0, g
        )
        assert rep.theta == pytest.approx(0.25)
        assert rep.kernel_norms_finite is True
        assert rep.grad_norms_finite is True
        assert not rep.q_window_K.empty and not rep.q_window_gradK.empty
        for q, val in rep.kernel_norms.items():
            assert np.isfinite(val) and val > 0

    def test_quadratic_confinement_hc(self):
        g = Grid(1, (128,), (8.0,))
        rep = check_hypotheses(
            KernelSpec("zero"), ConfinementSpec("quadratic", nu=0.5), 2.0, g
        )
        # |grad Phi| / Phi = 2/|x| -> finite max beyond R_o; growth holds
        assert rep.hc_growth_ok is True
        assert np.isfinite(rep.hc_ratio_max)
        assert rep.hc_ratio_max == pytest.approx(1.0, rel=0.05)  # 2/(L/4) at L=8

    def test_power_law_integrability_matches_analytic_criterion(self):
        # |grad K| ~ r^(b-1): numeric refinement verdict vs q(1-b) < d
        g = Grid(1, (256,), (2.0,))
        for b, q in [(-1.0, 1.1), (-0.5, 1.5)]:  # q(1-b) = 2.2, 2.25 >= 1
            assert not power_law_gradient_integrable(b, q, 1)
        assert power_law_gradient_integrable(0.5, 1.6, 1)  # q(1-b) = 0.8 < 1
        rep = check_hypotheses(
            KernelSpec("power-law", b=-1.0, cutoff_radius=1.5),
            ConfinementSpec("zero"),
            2.0,
            g,
        )
        # window samples start at q = 1.1 where q(1-b) = 2.2 > 1: divergent
        assert rep.grad_norms_finite is False

    def test_power_law_integrable_case(self):
        g = Grid(1, (256,), (2.0,))
        rep = check_hypotheses(
            KernelSpec("power-law", b=0.9, cutoff_radius=1.5),
            ConfinementSpec("zero"),
            2.0,
            g,
        )
        # q(1-b) = 0.11 q < 1 for all sampled q <= 4: integrable
        assert power_law_gradient_integrable(0.9, 4.0, 1)
        assert rep.grad_norms_finite is True

    def test_unresolved_tail_is_indeterminate(self):
        g = Grid(1, (64,), (2.0,))
        rep = check_hypotheses(
            KernelSpec("power-law", b=1.0, cutoff_radius=None),
            ConfinementSpec("quadratic"),
            2.0,
            g,
        )
        assert rep.kernel_norms_finite is None
        assert rep.indeterminate
        assert any("tail" in n for n in rep.notes)
