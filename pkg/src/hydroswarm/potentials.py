"""Interaction kernels K, confinement potentials Phi, and hypothesis checks.

Catalog (all radial, K(x) = k(|x|)):

* ``gaussian-attractive``  k(r) = -A exp(-r^2)
* ``gaussian-kai``         k(r) = A (1 - exp(-r^2/2))
* ``power-law``            k(r) = A r^b / b with b > -2, b != 0, mollified by a
  quadratic cap inside a small radius (value and slope matched) and tapered
  smoothly to zero beyond a cutoff radius, so the modified kernel is bounded
  with integrable gradient; hypothesis checks act on the modified kernel.
* ``zero``                 k = 0

Confinement: ``quadratic`` Phi = A |x|^2 / 2, ``zero``, or ``tabulated``
(radial two-column table, linear interpolation).

The admissibility checks mirror the structural hypotheses of the model:
the confinement must grow superlinearly with |grad Phi| <= C Phi far out,
and K, grad K must lie in L^q for q above explicit m-dependent thresholds
involving theta = min(2m/3 - 1, 1/4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

__all__ = [
    "KernelSpec",
    "ConfinementSpec",
    "QWindow",
    "HypothesisReport",
    "theta_exponent",
    "admissible_q_windows",
    "check_hypotheses",
    "eval_potential",
    "eval_gradient",
    "load_tabulated_confinement",
    "power_law_gradient_integrable",
]

KERNEL_KINDS = (
    "gaussian-attractive",
    "gaussian-kai",
    "power-law",
    "zero",
    "gaussian-bump",  # A exp(-|x|^2) >= 0; the alignment kernel of choice
)
CONFINEMENT_KINDS = ("quadratic", "zero", "tabulated")


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric interaction potential selected by name.

    ``b`` is the power-law exponent (must exceed -2), ``mollify_radius`` the
    quadratic-cap radius near the origin (defaults to half the working grid
    spacing at evaluation sites; callers building convolution plans pass h/2),
    ``cutoff_radius`` where the smooth far-field taper begins (power-law only).
    """

    kind: str
    amplitude: float = 1.0
    b: float | None = None
    mollify_radius: float = 1e-3
    cutoff_radius: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "power-law":
            if self.b is None or self.b <= -2 or self.b == 0:
                raise ValueError("power-law kernel needs exponent b > -2, b != 0")
            if self.mollify_radius <= 0:
                raise ValueError("power-law kernel needs mollify_radius > 0")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    def profile(self, r: np.ndarray) -> np.ndarray:
        """k(r) for r >= 0."""
        r = np.asarray(r, dtype=float)
        A = self.amplitude
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "gaussian-attractive":
            return -A * np.exp(-(r**2))
        if self.kind == "gaussian-bump":
            return A * np.exp(-(r**2))
        if self.kind == "gaussian-kai":
            return A * (1.0 - np.exp(-(r**2) / 2.0))
        return self._power_profile(r)

    def profile_slope(self, r: np.ndarray) -> np.ndarray:
        """k'(r) for r >= 0; the gradient is k'(r) x / r."""
        r = np.asarray(r, dtype=float)
        A = self.amplitude
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "gaussian-attractive":
            return 2.0 * A * r * np.exp(-(r**2))
        if self.kind == "gaussian-bump":
            return -2.0 * A * r * np.exp(-(r**2))
        if self.kind == "gaussian-kai":
            return A * r * np.exp(-(r**2) / 2.0)
        return self._power_slope(r)

    # Power-law pieces: quadratic cap k = alpha + beta r^2 inside r0 matching
    # value and slope, cos^2 taper multiplying k on [Rc, Rc + w].
    def _power_parts(self):
        r0 = self.mollify_radius
        A = self.amplitude
        b = float(self.b)
        beta = A * r0 ** (b - 2) / 2.0
        alpha = A * r0**b * (1.0 / b - 0.5)
        Rc = self.cutoff_radius if self.cutoff_radius is not None else math.inf
        w = Rc / 4.0 if math.isfinite(Rc) else math.inf
        return r0, alpha, beta, Rc, w

    def _taper(self, r):
        _, _, _, Rc, w = self._power_parts()
        if not math.isfinite(Rc):
            return np.ones_like(r), np.zeros_like(r)
        theta = np.clip((r - Rc) / w, 0.0, 1.0) * (math.pi / 2.0)
        chi = np.cos(theta) ** 2
        dchi = np.where(
            (r > Rc) & (r < Rc + w), -np.sin(2.0 * theta) * (math.pi / (2.0 * w)), 0.0
        )
        return chi, dchi

    def _power_profile(self, r):
        r0, alpha, beta, _, _ = self._power_parts()
        A, b = self.amplitude, float(self.b)
        rs = np.maximum(r, 1e-300)
        raw = np.where(r < r0, alpha + beta * r**2, A * rs**b / b)
        chi, _ = self._taper(r)
        return raw * chi

    def _power_slope(self, r):
        r0, alpha, beta, _, _ = self._power_parts()
        A, b = self.amplitude, float(self.b)
        rs = np.maximum(r, 1e-300)
        raw = np.where(r < r0, alpha + beta * r**2, A * rs**b / b)
        draw = np.where(r < r0, 2.0 * beta * r, A * rs ** (b - 1))
        chi, dchi = self._taper(r)
        return draw * chi + raw * dchi


@dataclass(frozen=True)
class ConfinementSpec:
    kind: str
    amplitude: float = 1.0
    nu: float = 0.5
    table: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in CONFINEMENT_KINDS:
            raise ValueError(f"unknown confinement kind {self.kind!r}")
        if self.nu <= 0:
            raise ValueError("growth exponent nu must be positive")
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated confinement needs a (radius, value) table")
            r, v = self.table
            if len(r) < 2 or np.any(np.diff(r) <= 0):
                raise ValueError("tabulated radii must be strictly increasing")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    def profile(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "quadratic":
            return self.amplitude * r**2 / 2.0
        rt, vt = self.table
        return self.amplitude * np.interp(r, rt, vt)

    def profile_slope(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "quadratic":
            return self.amplitude * r
        rt, vt = self.table
        # centered differences of the interpolant, one-sided at the ends
        dr = max(1e-6, 0.5 * float(np.min(np.diff(rt))))
        lo = np.maximum(r - dr, rt[0])
        hi = r + dr
        return self.amplitude * (np.interp(hi, rt, vt) - np.interp(lo, rt, vt)) / (hi - lo)


def load_tabulated_confinement(path, nu: float = 0.5, amplitude: float = 1.0) -> ConfinementSpec:
    """Two-column text file: radius, value (whitespace separated, # comments)."""
    data = np.loadtxt(path)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (radius, value)")
    return ConfinementSpec(
        "tabulated", amplitude=amplitude, nu=nu, table=(data[:, 0], data[:, 1])
    )


def _radius(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None]
    return np.sqrt((points**2).sum(axis=0)), points


def eval_potential(spec: KernelSpec | ConfinementSpec, points: np.ndarray) -> np.ndarray:
    """Pointwise values; points have the axis-index leading (shape (d, ...))."""
    r, _ = _radius(points)
    return spec.profile(r)


def eval_gradient(spec: KernelSpec | ConfinementSpec, points: np.ndarray) -> np.ndarray:
    """Analytic radial gradient k'(r) x/r, zero at the origin by symmetry."""
    r, pts = _radius(points)
    slope = spec.profile_slope(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r > 0, pts / np.maximum(r, 1e-300), 0.0)
    return slope * unit


# --- admissibility formulas -------------------------------------------------


def _as_number(m):
    if isinstance(m, Rational) and not isinstance(m, float):
        return Fraction(m)
    return float(m)


def theta_exponent(m):
    """min(2m/3 - 1, 1/4); exact when m is given as a Fraction or int.

    Only defined for pressure exponents m > 3/2.
    """
    mv = _as_number(m)
    if mv <= Fraction(3, 2):
        raise ValueError(f"pressure exponent must exceed 3/2, got {m}")
    if isinstance(mv, Fraction):
        return min(Fraction(2, 3) * mv - 1, Fraction(1, 4))
    return min(2.0 * mv / 3.0 - 1.0, 0.25)


@dataclass(frozen=True)
class QWindow:
    """Open interval (lower, upper) of admissible integrability exponents."""

    lower: float | Fraction
    upper: float = math.inf

    @property
    def empty(self) -> bool:
        return not (self.lower < self.upper)

    def contains(self, q) -> bool:
        return self.lower < q < self.upper


def admissible_q_windows(m) -> tuple[QWindow, QWindow]:
    """Integrability windows for K and grad K.

    K:      q in (max(1/(m-1), 1), inf)
    grad K: q in (max(m/(2(m-1) + theta), 1), inf)
    """
    mv = _as_number(m)
    theta = theta_exponent(mv)
    one = Fraction(1) if isinstance(mv, Fraction) else 1.0
    lo_k = max(one / (mv - 1), one)
    lo_g = max(mv / (2 * (mv - 1) + theta), one)
    return QWindow(lo_k), QWindow(lo_g)


@dataclass(frozen=True)
class HypothesisReport:
    theta: float
    q_window_K: QWindow
    q_window_gradK: QWindow
    kernel_norms: dict = field(default_factory=dict)  # q -> ||K||_q estimate
    grad_norms: dict = field(default_factory=dict)  # q -> ||grad K||_q estimate
    kernel_norms_finite: bool | None = None
    grad_norms_finite: bool | None = None
    hc_ratio_max: float = math.nan
    hc_growth_ok: bool | None = None
    notes: tuple[str, ...] = ()

    @property
    def indeterminate(self) -> bool:
        return self.kernel_norms_finite is None or self.hc_growth_ok is None


def _lq_norm_on_grid(spec: KernelSpec, grid, q: float, gradient: bool) -> float:
    pts = grid.centers()
    if gradient:
        vals = np.sqrt((eval_gradient(spec, pts) ** 2).sum(axis=0))
    else:
        vals = np.abs(eval_potential(spec, pts))
    return float((vals**q).sum() * grid.cell_volume) ** (1.0 / q)


def _tail_note(spec: KernelSpec, grid) -> tuple[bool | None, str | None]:
    """Can the far field beyond the box be bounded analytically?"""
    L = min(grid.extent)
    if spec.kind in ("gaussian-attractive", "gaussian-bump", "zero"):
        return True, None
    if spec.kind == "gaussian-kai":
        # K tends to a nonzero constant: not in any L^q globally.
        return False, "gaussian-kai tends to a constant; K itself is not L^q on the whole space (gradient is)"
    if spec.cutoff_radius is not None and spec.cutoff_radius * 1.25 <= L:
        return True, None
    return None, "power-law tail not resolved by the truncation box; increase cutoff or box"


def check_hypotheses(kernel: KernelSpec, confinement: ConfinementSpec, m, grid,
                     r_o: float | None = None, q_samples: int = 3) -> HypothesisReport:
    """Numeric audit of the structural hypotheses on (K, Phi) for exponent m.

    Lq norms of K and grad K are estimated by midpoint quadrature on the grid
    and a 2x refinement at a few q sampled inside the admissible windows; the
    verdict is "finite" when refinement leaves the estimate stable and the far
    field is controlled analytically, "divergent" when refinement grows the
    estimate, and indeterminate otherwise.  The confinement is checked for
    |grad Phi| <= C Phi beyond r_o and for superlinear growth of
    Phi / |x|^(1+nu) along the largest sampled radii.
    """
    theta = theta_exponent(m)
    win_k, win_g = admissible_q_windows(m)
    notes: list[str] = []

    fine = grid.refined(2)
    qs_k = _sample_qs(win_k, q_samples)
    qs_g = _sample_qs(win_g, q_samples)

    kernel_norms, grad_norms = {}, {}
    k_finite: bool | None = True
    g_finite: bool | None = True
    if kernel.is_zero:
        for q in qs_k:
            kernel_norms[q] = 0.0
        for q in qs_g:
            grad_norms[q] = 0.0
    else:
        tail_ok, tail_msg = _tail_note(kernel, grid)
        if tail_msg:
            notes.append(tail_msg)
        for q in qs_k:
            coarse = _lq_norm_on_grid(_on_grid(kernel, grid), grid, q, gradient=False)
            refined = _lq_norm_on_grid(_on_grid(kernel, fine), fine, q, gradient=False)
            kernel_norms[q] = refined
            if _diverging(coarse, refined):
                k_finite = False
        for q in qs_g:
            coarse = _lq_norm_on_grid(_on_grid(kernel, grid), grid, q, gradient=True)
            refined = _lq_norm_on_grid(_on_grid(kernel, fine), fine, q, gradient=True)
            grad_norms[q] = refined
            if _diverging(coarse, refined):
                g_finite = False
        if tail_ok is False and kernel.kind == "gaussian-kai":
            k_finite = False
        elif tail_ok is None:
            k_finite = None if k_finite else False
            g_finite = None if g_finite else False

    hc_ratio = math.nan
    growth_ok: bool | None = None
    if confinement.is_zero:
        growth_ok = False
        notes.append("zero confinement fails superlinear growth (fine on bounded domains)")
    else:
        L = min(grid.extent)
        ro = L / 4.0 if r_o is None else float(r_o)
        r = np.linspace(ro, L, 256)[1:]
        phi = confinement.profile(r)
        dphi = np.abs(confinement.profile_slope(r))
        pos = phi > 0
        hc_ratio = float(np.max(dphi[pos] / phi[pos])) if pos.any() else math.inf
        ratio = confinement.profile(r) / r ** (1.0 + confinement.nu)
        tail = ratio[len(ratio) // 2 :]
        growth_ok = bool(np.all(np.diff(tail) > -1e-12 * np.abs(tail[:-1]).max()))
        if confinement.kind == "tabulated" and r[-1] >= confinement.table[0][-1]:
            growth_ok = None
            notes.append("tabulated confinement does not cover the sampled radii")

    return HypothesisReport(
        theta=theta if isinstance(theta, float) else float(theta),
        q_window_K=win_k,
        q_window_gradK=win_g,
        kernel_norms=kernel_norms,
        grad_norms=grad_norms,
        kernel_norms_finite=k_finite,
        grad_norms_finite=g_finite,
        hc_ratio_max=hc_ratio,
        hc_growth_ok=growth_ok,
        notes=tuple(notes),
    )


def _sample_qs(win: QWindow, count: int) -> list[float]:
    lo = float(win.lower)
    qs = [lo + 0.1, lo + 1.0, 2.0 * lo + 2.0]
    return sorted(set(round(q, 6) for q in qs[:count]))


def _on_grid(kernel: KernelSpec, grid) -> KernelSpec:
    """Power-law kernels are mollified inside half the local grid spacing, so
    refining the grid probes the origin singularity."""
    if kernel.kind != "power-law":
        return kernel
    from dataclasses import replace

    return replace(kernel, mollify_radius=min(grid.h) / 2.0)


def _diverging(coarse: float, refined: float) -> bool:
    if coarse == 0.0:
        return refined > 1e-12
    return refined / coarse > 1.5


def power_law_gradient_integrable(b: float, q: float, d: int) -> bool:
    """Analytic local criterion at the origin: |grad K| ~ r^(b-1) lies in L^q
    near zero iff q (1 - b) < d."""
    return q * (1.0 - b) < d
