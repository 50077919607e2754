"""Stationary densities: fixed-point and gradient-flow solvers, comparators.

A steady density with zero velocity balances pressure against the nonlocal
and confinement forces,

    a grad(rho^m) + rho grad(K * rho) + rho grad(Phi) = 0 ,

whose first integral on each connected support component is the obstacle-type
level condition

    (a m / (m-1)) rho^(m-1) + K * rho + Phi = C      on the support,
    K * rho + Phi >= C                               off the support.

Two independent routes solve it with prescribed mass M0 and center c0:

* a damped mass-constrained fixed point on the level condition (the level C
  re-bisected at every iterate so the update carries mass M0 exactly), and
* the aggregation-diffusion gradient flow
  d rho/dt = div(rho grad((a m/(m-1)) rho^(m-1) + K * rho + Phi)),
  integrated by a positivity-preserving upwind scheme until the free energy
  stalls.

Their mutual L1 distance is the laboratory's cross-method oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from . import operators
from .convolution import ConvolutionPlan, conv_scalar
from .energy import free_energy
from .fields import Grid, ScalarField, State, VectorField, first_moment, lp_norm, total_mass
from .model import ModelParams
from .potentials import ConfinementSpec, KernelSpec, eval_potential

__all__ = [
    "SteadyProblem",
    "SteadySolution",
    "solve_fixed_point",
    "solve_gradient_flow",
    "omega_limit_distance",
    "com_trajectory",
    "flock_frame",
    "FlockFrameResult",
]


@dataclass(frozen=True)
class SteadyProblem:
    kernel: KernelSpec
    confinement: ConfinementSpec
    a: float
    m: float
    mass: float
    center: tuple[float, ...] = (0.0,)
    grid: Grid = None

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("target mass must be positive")
        if self.m <= 1.5:
            raise ValueError(f"m = {self.m} violates m > 3/2")
        if self.grid is None:
            raise ValueError("steady problem needs a grid")
        if len(self.center) != self.grid.d:
            raise ValueError("center dimension mismatch")

    def model(self) -> ModelParams:
        return ModelParams(
            a=self.a, m=self.m, kernel=self.kernel, confinement=self.confinement,
            damping="none",
        )


@dataclass
class SteadySolution:
    rho_s: ScalarField
    C: float
    mass: float
    support: np.ndarray
    n_components: int
    residual_l1: float
    level_residual_on: float
    level_residual_off: float
    method: str
    converged: bool
    iterations: int
    free_energy: float
    notes: tuple[str, ...] = ()

    def as_state(self, t: float = 0.0) -> State:
        return State(t, self.rho_s, VectorField.zeros(self.rho_s.grid))


def _initial_guess(prob: SteadyProblem) -> np.ndarray:
    grid = prob.grid
    x = grid.centers()
    width = min(grid.extent) / 3.0
    r2 = sum((x[k] - prob.center[k]) ** 2 for k in range(grid.d))
    g = np.exp(-r2 / (2.0 * width**2))
    return g * (prob.mass / (g.sum() * grid.cell_volume))


def _level_inverse(prob: SteadyProblem, W: np.ndarray, C: float) -> np.ndarray:
    """rho = ((m-1)/(a m) (C - W))_+ ^ (1/(m-1))."""
    m, a = prob.m, prob.a
    base = np.maximum((m - 1.0) / (a * m) * (C - W), 0.0)
    return base ** (1.0 / (m - 1.0))


def _mass_of_level(prob: SteadyProblem, W: np.ndarray, C: float) -> float:
    return float(_level_inverse(prob, W, C).sum()) * prob.grid.cell_volume


def _solve_level(prob: SteadyProblem, W: np.ndarray) -> float:
    """Bisection level C such that the inverse carries exactly mass M0."""
    lo = float(W.min())
    hi = lo + 1.0
    for _ in range(200):
        if _mass_of_level(prob, W, hi) >= prob.mass:
            break
        hi = lo + 2.0 * (hi - lo)
    else:
        raise RuntimeError(
            "steady: level bisection bracket failure; mass(C) stayed below "
            f"M0 = {prob.mass} up to C = {hi:.3e}"
        )
    return float(
        brentq(lambda c: _mass_of_level(prob, W, c) - prob.mass, lo, hi,
               xtol=1e-14, rtol=8.9e-16, maxiter=200)
    )


def _interaction_field(prob: SteadyProblem, plan: ConvolutionPlan, rho: np.ndarray) -> np.ndarray:
    W = np.zeros(prob.grid.shape)
    if plan.has("K"):
        W += conv_scalar(plan, ScalarField(prob.grid, rho), "K").values
    if not prob.confinement.is_zero:
        W += eval_potential(prob.confinement, prob.grid.centers())
    return W


def _recenter(prob: SteadyProblem, rho: np.ndarray) -> tuple[np.ndarray, tuple[str, ...]]:
    grid = prob.grid
    notes: tuple[str, ...] = ()
    x = grid.centers()
    mass = rho.sum() * grid.cell_volume
    com = np.array(
        [(x[k] * rho).sum() * grid.cell_volume / mass for k in range(grid.d)]
    )
    shift = [int(round((prob.center[k] - com[k]) / grid.h[k])) for k in range(grid.d)]
    if any(shift):
        edge = _touches_edge(rho)
        if edge:
            notes = ("recentering skipped: support touches the domain boundary",)
        else:
            for k, sft in enumerate(shift):
                rho = np.roll(rho, sft, axis=k)
    return rho, notes


def _touches_edge(rho: np.ndarray) -> bool:
    for axis in range(rho.ndim):
        first = np.take(rho, 0, axis=axis)
        last = np.take(rho, -1, axis=axis)
        if np.any(first > 0) or np.any(last > 0):
            return True
    return False


def _balance_residual_l1(prob: SteadyProblem, plan: ConvolutionPlan, rho: np.ndarray) -> float:
    """L1 norm of a grad_h(rho^m) + rho grad(K*rho) + rho grad(Phi)."""
    grid = prob.grid
    p_cells = prob.a * rho**prob.m
    res = operators.pressure_gradient(grid, p_cells)
    if plan.has("K"):
        from .convolution import conv_force

        res = res + rho * conv_force(plan, ScalarField(grid, rho)).values
    if not prob.confinement.is_zero:
        from .potentials import eval_gradient

        res = res + rho * eval_gradient(prob.confinement, grid.centers())
    return float(np.abs(res).sum()) * grid.cell_volume


def _finish(prob: SteadyProblem, plan: ConvolutionPlan, rho: np.ndarray, C: float,
            method: str, converged: bool, iterations: int,
            notes: tuple[str, ...] = ()) -> SteadySolution:
    grid = prob.grid
    rho, recenter_notes = _recenter(prob, rho)
    notes = notes + recenter_notes
    W = _interaction_field(prob, plan, rho)
    # the damped iteration leaves an O(tol) residue off the true support;
    # classify support well above it (values kept: mass stays exact)
    support = rho > 1e-7 * max(float(rho.max()), 1e-300)
    labels, n_comp = ndimage.label(support)
    if n_comp > 1:
        notes = notes + (f"support has {n_comp} connected components; single level reported",)
    level = prob.a * prob.m / (prob.m - 1.0) * rho ** (prob.m - 1.0) + W
    on_res = float(np.abs(level[support] - C).max()) if support.any() else 0.0
    off = ~support
    off_res = float(np.maximum(C - W[off], 0.0).max()) if off.any() else 0.0
    f_energy = free_energy(
        State(0.0, ScalarField(grid, rho), VectorField.zeros(grid)),
        prob.model(), plan,
    ).total
    return SteadySolution(
        rho_s=ScalarField(grid, rho),
        C=C,
        mass=float(rho.sum()) * grid.cell_volume,
        support=support,
        n_components=int(n_comp),
        residual_l1=_balance_residual_l1(prob, plan, rho),
        level_residual_on=on_res,
        level_residual_off=off_res,
        method=method,
        converged=converged,
        iterations=iterations,
        free_energy=f_energy,
        notes=notes,
    )


def solve_fixed_point(prob: SteadyProblem, omega: float = 0.5, tol: float = 1e-10,
                      max_iter: int = 500, plan: ConvolutionPlan | None = None,
                      rho0: np.ndarray | None = None) -> SteadySolution:
    """Damped fixed point rho <- (1-w) rho + w * level_inverse(C, K*rho + Phi)
    with C re-bisected each iterate so every update carries mass M0.

    The damping factor is halved whenever the L1 change grows twice in a row.
    Non-convergence returns the best iterate flagged converged=False.
    """
    grid = prob.grid
    if plan is None:
        plan = ConvolutionPlan.build(grid, prob.kernel)
    rho = _initial_guess(prob) if rho0 is None else rho0.copy()
    hv = grid.cell_volume
    last_change = math.inf
    grew = 0
    C = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W = _interaction_field(prob, plan, rho)
        C = _solve_level(prob, W)
        target = _level_inverse(prob, W, C)
        new = (1.0 - omega) * rho + omega * target
        change = float(np.abs(new - rho).sum()) * hv
        rho = new
        if change < tol * prob.mass:
            converged = True
            break
        if change > last_change:
            grew += 1
            if grew >= 2:
                omega = max(omega / 2.0, 1.0 / 64.0)
                grew = 0
        else:
            grew = 0
        last_change = change
    notes = () if converged else (f"fixed point not converged after {it} iterations",)
    return _finish(prob, plan, rho, C, "fixed-point", converged, it, notes)


def solve_gradient_flow(prob: SteadyProblem, tol: float = 1e-9, cfl: float = 0.4,
                        diff_safety: float = 0.4, max_steps: int = 2_000_000,
                        check_every: int = 50, plan: ConvolutionPlan | None = None,
                        rho0: np.ndarray | None = None) -> SteadySolution:
    """Aggregation-diffusion flow d rho/dt = div(rho grad xi) with
    xi = (a m/(m-1)) rho^(m-1) + K*rho + Phi, by positivity-preserving upwind
    finite volumes, until the free energy stalls (relative change per unit
    time below tol).

    Raises on dt underflow and on any accepted step that increases the free
    energy beyond round-off (scheme-bug sentinel).
    """
    grid = prob.grid
    if plan is None:
        plan = ConvolutionPlan.build(grid, prob.kernel)
    rho = _initial_guess(prob) if rho0 is None else rho0.copy()
    model = prob.model()
    hv = grid.cell_volume
    am = prob.a * prob.m
    expo = prob.m - 1.0

    def energy_of(r):
        return free_energy(
            State(0.0, ScalarField(grid, r), VectorField.zeros(grid)), model, plan
        ).total

    f_prev = energy_of(rho)
    f_scale = max(abs(f_prev), 1e-12)
    t_accum = 0.0
    t_last_check = 0.0
    converged = False
    steps = 0
    while steps < max_steps:
        xi = am / expo * rho**expo + _interaction_field(prob, plan, rho)
        div = np.zeros(grid.shape)
        vmax = 0.0
        for axis in range(grid.d):
            h = grid.h[axis]
            lo = [slice(None)] * grid.d
            hi = [slice(None)] * grid.d
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            vf = -(xi[hi] - xi[lo]) / h
            up = np.where(vf > 0.0, rho[lo], rho[hi])
            flux = vf * up
            div[lo] += flux / h
            div[hi] -= flux / h
            vmax = max(vmax, float(np.abs(vf).max()))
        diff = am * float(rho.max()) ** expo
        dt_candidates = [1.0]
        if vmax > 0:
            dt_candidates.append(cfl * min(grid.h) / vmax)
        if diff > 0:
            dt_candidates.append(diff_safety * min(grid.h) ** 2 / (2.0 * grid.d * diff))
        dt = min(dt_candidates)
        if dt < 1e-16:
            raise RuntimeError(f"steady: gradient-flow dt underflow ({dt:.3e})")
        rho = rho - dt * div
        np.clip(rho, 0.0, None, out=rho)
        t_accum += dt
        steps += 1
        if steps % check_every == 0:
            f_now = energy_of(rho)
            if f_now > f_prev + 1e-9 * f_scale:
                raise RuntimeError(
                    f"steady: free energy increased by {f_now - f_prev:.3e} "
                    "along the gradient flow (scheme bug sentinel)"
                )
            window = t_accum - t_last_check
            if window > 0 and abs(f_now - f_prev) < tol * f_scale * window:
                converged = True
                f_prev = f_now
                break
            f_prev = f_now
            t_last_check = t_accum
    W = _interaction_field(prob, plan, rho)
    C = _solve_level(prob, W)
    notes = () if converged else ("gradient flow hit max_steps before stalling",)
    return _finish(prob, plan, rho, C, "gradient-flow", converged, steps, notes)


def omega_limit_distance(traj, sol: SteadySolution, c0=None, p: float | None = None) -> np.ndarray:
    """|rho(t_n) - rho_s(. - c0)|_{L^m} per snapshot (whole-cell translation)."""
    grid = sol.rho_s.grid
    if not traj.states:
        raise ValueError("trajectory has no recorded states")
    if not traj.states[0].grid.compatible(grid):
        raise ValueError("trajectory and steady solution live on different grids")
    if c0 is None:
        last = traj.states[-1]
        c0 = first_moment(last) / total_mass(last)
    c0 = np.atleast_1d(np.asarray(c0, dtype=float))
    rho_ref = sol.rho_s.values
    com_ref = first_moment(sol.as_state()) / max(sol.mass, 1e-300)
    for k in range(grid.d):
        cells = int(round((c0[k] - com_ref[k]) / grid.h[k]))
        if cells:
            rho_ref = np.roll(rho_ref, cells, axis=k)
    m = p if p is not None else traj.params.m
    out = np.empty(len(traj.states))
    for i, s in enumerate(traj.states):
        diff = ScalarField(grid, s.rho.values - rho_ref)
        out[i] = lp_norm(diff, m)
    return out


_COM_CASES = ("quadratic-confinement", "no-confinement-symmetric", "alignment-no-confinement")


def com_trajectory(case: str, X0, P0, M0: float, t) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form first moment X(t) and total momentum P(t).

    quadratic-confinement:      X'' + X' + X = 0 (unit quadratic well),
    no-confinement-symmetric:   P = e^{-t} P0, X = X0 + (1 - e^{-t}) P0,
    alignment-no-confinement:   P constant, X = X0 + t P0.

    X0, P0 broadcast against t; M0 is accepted for interface symmetry (the
    moment ODEs are mass-independent).
    """
    del M0
    t = np.asarray(t, dtype=float)
    X0 = np.asarray(X0, dtype=float)
    P0 = np.asarray(P0, dtype=float)
    if case == "quadratic-confinement":
        w = math.sqrt(3.0) / 2.0
        envelope = np.exp(-t / 2.0)
        coef = (P0 + X0 / 2.0) / w
        X = envelope * (X0 * np.cos(w * t) + coef * np.sin(w * t))
        P = envelope * (P0 * np.cos(w * t) - (P0 + 2.0 * X0) / math.sqrt(3.0) * np.sin(w * t))
        return X, P
    if case == "no-confinement-symmetric":
        decay = np.exp(-t)
        return X0 + (1.0 - decay) * P0, decay * P0
    if case == "alignment-no-confinement":
        ones = np.ones_like(t)
        return X0 + t * P0, P0 * ones
    raise ValueError(f"unknown center-of-mass case {case!r}; expected one of {_COM_CASES}")


@dataclass
class FlockFrameResult:
    trajectory: object
    u_infinity: np.ndarray
    cells_per_frame: tuple[int, ...]
    rounding_error: np.ndarray  # u_infinity minus the realized shift velocity


def flock_frame(traj, M0: float | None = None) -> FlockFrameResult:
    """Co-moving frame resample rho~(t, y) = rho(t, y + t u_inf).

    u_inf = P0 / M0 from the initial momentum; density frames shift by whole
    cells (per-frame shift rounded, rounding reported), momenta are boosted by
    the exact u_inf so the transformed total momentum vanishes whenever the
    run conserves momentum.  Requires an alignment run without confinement.
    """
    if traj.params.damping != "alignment":
        raise ValueError("flock frame applies to alignment runs")
    if not traj.params.confinement.is_zero:
        raise ValueError("flock frame requires zero confinement")
    states = traj.states
    if not states:
        raise ValueError("trajectory has no recorded states")
    grid = states[0].grid
    first = states[0]
    mass = total_mass(first) if M0 is None else M0
    P0 = first.mom.values.reshape(grid.d, -1).sum(axis=1) * grid.cell_volume
    u_inf = P0 / mass
    t0 = first.t

    frames = []
    cadence = None
    if len(states) > 1:
        cadence = states[1].t - states[0].t
    cells_per_frame = tuple(
        int(round(u_inf[k] * cadence / grid.h[k])) if cadence else 0
        for k in range(grid.d)
    )
    for s in states:
        tau = s.t - t0
        rho = s.rho.values
        mom = s.mom.values.copy()
        shifted_rho = rho
        shifted_mom = mom
        for k in range(grid.d):
            cells = int(round(u_inf[k] * tau / grid.h[k]))
            if cells:
                shifted_rho = np.roll(shifted_rho, -cells, axis=k)
                shifted_mom = np.roll(shifted_mom, -cells, axis=k)
        boosted = shifted_mom - shifted_rho * u_inf.reshape((grid.d,) + (1,) * grid.d)
        frames.append(
            State(s.t, ScalarField(grid, shifted_rho), VectorField(grid, boosted))
        )
    from .dynamics import Trajectory

    out = Trajectory(params=traj.params, opts=traj.opts, status="transformed")
    out.times = [s.t for s in frames]
    out.states = frames
    realized = np.array(
        [cells_per_frame[k] * grid.h[k] / cadence if cadence else 0.0 for k in range(grid.d)]
    )
    return FlockFrameResult(
        trajectory=out,
        u_infinity=u_inf,
        cells_per_frame=cells_per_frame,
        rounding_error=u_inf - realized,
    )
