import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hydroswarm import (
    Grid,
    ScalarField,
    State,
    VectorField,
    first_moment,
    lp_norm,
    read_field,
    total_mass,
    write_field,
)

from conftest import gaussian_state


class TestGrid:
    def test_spacing(self):
        g = Grid(1, (8,), (1.0,))
        assert g.h == (0.25,)
        assert g.cell_volume == 0.25
        np.testing.assert_allclose(g.axis_centers(0), -1 + 0.25 * (np.arange(8) + 0.5))

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError, match="dimension"):
            Grid(3, (8, 8, 8), (1.0, 1.0, 1.0))

    def test_rejects_tiny_grid(self):
        with pytest.raises(ValueError, match="at least 4"):
            Grid(1, (2,), (1.0,))

    def test_ball_needs_radius(self):
        with pytest.raises(ValueError, match="ball_radius"):
            Grid(1, (8,), (1.0,), domain_kind="ball")

    def test_ball_mask(self):
        g = Grid(2, (16, 16), (2.0, 2.0), domain_kind="ball", ball_radius=1.5)
        mask = g.interior_mask()
        assert mask[8, 8]
        assert not mask[0, 0]
        np.testing.assert_array_equal(mask, g.radii() < 1.5)

    def test_2d_broadcast(self):
        g = Grid(2, (16,), (2.0,))
        assert g.n == (16, 16)
        assert g.extent == (2.0, 2.0)


class TestStateInvariants:
    def test_rejects_negative_density(self, grid1d):
        rho = -np.ones(grid1d.shape)
        with pytest.raises(ValueError, match="nonnegative"):
            State(0.0, ScalarField(grid1d, rho), VectorField.zeros(grid1d))

    def test_rejects_momentum_on_vacuum(self, grid1d):
        rho = np.zeros(grid1d.shape)
        mom = np.ones((1,) + grid1d.shape)
        with pytest.raises(ValueError, match="vacuum"):
            State(0.0, ScalarField(grid1d, rho), VectorField(grid1d, mom))

    def test_rejects_nonfinite(self, grid1d):
        rho = np.ones(grid1d.shape)
        rho[3] = np.nan
        with pytest.raises(ValueError, match="finite"):
            ScalarField(grid1d, rho)

    def test_velocity_floor(self, grid1d):
        rho = np.ones(grid1d.shape)
        rho[:10] = 0.0
        mom = np.ones((1,) + grid1d.shape)
        mom[:, :10] = 0.0
        s = State(0.0, ScalarField(grid1d, rho), VectorField(grid1d, mom))
        u = s.velocity(floor=1e-12)
        assert np.all(u[0, :10] == 0.0)
        np.testing.assert_allclose(u[0, 10:], 1.0)


class TestTotalMass:
    def test_zero_field(self, grid1d):
        s = State(0.0, ScalarField(grid1d, np.zeros(grid1d.shape)), VectorField.zeros(grid1d))
        assert total_mass(s) == 0.0

    def test_uniform_exact(self):
        g = Grid(1, (8,), (1.0,))
        s = State(0.0, ScalarField(g, np.ones(8)), VectorField.zeros(g))
        assert total_mass(s) == pytest.approx(2.0, abs=1e-15)

    def test_gaussian_against_quadrature(self):
        # oracle: adaptive quadrature of the continuum integral
        oracle, _ = quad(lambda x: np.exp(-(x**2)), -8.0, 8.0, epsabs=1e-14)
        assert oracle == pytest.approx(np.sqrt(np.pi), abs=1e-12)  # oracle sanity
        g = Grid(1, (512,), (8.0,))
        x = g.centers()[0]
        s = State(0.0, ScalarField(g, np.exp(-(x**2))), VectorField.zeros(g))
        assert total_mass(s) == pytest.approx(oracle, abs=1e-8)
        assert total_mass(s) == pytest.approx(np.sqrt(np.pi), abs=1e-8)

    def test_additive_and_homogeneous(self, grid1d):
        x = grid1d.centers()[0]
        f = ScalarField(grid1d, np.exp(-(x**2)))
        gfield = ScalarField(grid1d, np.cos(x) ** 2)
        zero_mom = VectorField.zeros(grid1d)
        m_sum = total_mass(State(0.0, f + gfield, zero_mom))
        m_f = total_mass(State(0.0, f, zero_mom))
        m_g = total_mass(State(0.0, gfield, zero_mom))
        assert m_sum == pytest.approx(m_f + m_g, rel=1e-14)
        assert total_mass(State(0.0, 3.0 * f, zero_mom)) == pytest.approx(3.0 * m_f, rel=1e-14)


class TestFirstMoment:
    def test_symmetric_density(self, grid1d):
        s = gaussian_state(grid1d)
        assert abs(first_moment(s)[0]) < 1e-14

    def test_indicator_half_interval(self):
        # oracle: int_0^1 x dx = 1/2
        g = Grid(1, (512,), (2.0,))
        x = g.centers()[0]
        rho = ((x > 0) & (x < 1)).astype(float)
        s = State(0.0, ScalarField(g, rho), VectorField.zeros(g))
        assert first_moment(s)[0] == pytest.approx(0.5, abs=g.h[0])

    def test_translation_covariance(self, grid1d):
        s = gaussian_state(grid1d, width=0.4)
        shift_cells = 5
        c = shift_cells * grid1d.h[0]
        rho2 = np.roll(s.rho.values, shift_cells)
        s2 = State(0.0, ScalarField(grid1d, rho2), VectorField.zeros(grid1d))
        lhs = first_moment(s2)[0] - first_moment(s)[0]
        assert lhs == pytest.approx(c * total_mass(s), rel=1e-12)


class TestLpNorm:
    def test_uniform(self):
        g = Grid(1, (8,), (1.0,))
        assert lp_norm(ScalarField(g, np.ones(8)), 2) == pytest.approx(np.sqrt(2.0))

    def test_zero(self, grid1d):
        assert lp_norm(ScalarField(grid1d, np.zeros(grid1d.shape)), 3) == 0.0

    def test_gaussian_l2_against_quadrature(self):
        oracle, _ = quad(lambda x: np.exp(-(x**2)) ** 2, -8.0, 8.0, epsabs=1e-14)
        oracle = oracle**0.5
        g = Grid(1, (512,), (8.0,))
        x = g.centers()[0]
        f = ScalarField(g, np.exp(-(x**2)))
        assert lp_norm(f, 2) == pytest.approx(oracle, abs=1e-6)
        assert lp_norm(f, 2) == pytest.approx(np.sqrt(np.pi / 2) ** 0.5, abs=1e-6)

    def test_rejects_p_below_one(self, grid1d):
        with pytest.raises(ValueError, match="p >= 1"):
            lp_norm(ScalarField(grid1d, np.ones(grid1d.shape)), 0.5)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), p=st.sampled_from([1.0, 1.5, 2.0, 2.25]))
    def test_triangle_inequality(self, seed, p):
        g = Grid(1, (32,), (2.0,))
        rng = np.random.default_rng(seed)
        a = ScalarField(g, rng.normal(size=32))
        b = ScalarField(g, rng.normal(size=32))
        lhs = lp_norm(a + b, p)
        assert lhs <= lp_norm(a, p) + lp_norm(b, p) + 1e-12


class TestSnapshotIO:
    def test_scalar_roundtrip(self, tmp_path, grid1d):
        x = grid1d.centers()[0]
        f = ScalarField(grid1d, np.sin(x))
        path = tmp_path / "rho.field"
        write_field(path, f, time=1.25)
        g, t = read_field(path)
        assert t == 1.25
        assert g.grid.compatible(grid1d)
        np.testing.assert_array_equal(g.values, f.values)

    def test_vector_roundtrip_2d(self, tmp_path):
        grid = Grid(2, (8, 12), (1.0, 2.0), domain_kind="ball", ball_radius=0.9)
        vals = np.arange(2 * 8 * 12, dtype=float).reshape(2, 8, 12)
        path = tmp_path / "mom.field"
        write_field(path, VectorField(grid, vals), time=0.5)
        g, t = read_field(path)
        assert isinstance(g, VectorField)
        assert g.grid.compatible(grid)
        np.testing.assert_array_equal(g.values, vals)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.field"
        path.write_bytes(b"not a field\n")
        with pytest.raises(ValueError, match="magic"):
            read_field(path)
