"""IMEX finite-volume integrator for the damped/aligned hydrodynamic system.

One step advances

    d rho/dt + div(rho u)            = eps Lap rho
    d (rho u)/dt + div(rho u x u)
        + grad(a rho^m + delta rho^beta)
        = mu Lap u + (lam + mu) grad div u - damping - rho grad(K * rho)
          - rho grad Phi

with explicit conservative upwind transport, explicit face-form pressure
gradient, explicit nonlocal/confinement/alignment forces, and implicit
(backward Euler) viscosity, linear damping, and continuity diffusion.  Walls
(box faces, or the ball surface) carry zero normal mass flux and no-slip
velocity, which makes the cell-summed mass change vanish identically.

Velocities are reconstructed as u = m / rho above a vacuum floor
(factor * M0 / |box|) and set to zero below it; the implicit viscous operator
only couples fluid cells (stress-free fluid-vacuum interface), so an isolated
blob conserves total momentum exactly when all forces are momentum-neutral.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import operators
from .convolution import ConvolutionPlan, conv_alignment, conv_force
from .energy import EnergyLedger, ledger_row, vacuum_floor
from .fields import Grid, ScalarField, State, VectorField, total_mass
from .model import ModelParams, SolverOptions, StepReport
from .potentials import eval_gradient

__all__ = ["stable_dt", "step", "run", "Trajectory", "StepError"]

log = logging.getLogger(__name__)


class StepError(RuntimeError):
    """The integrator violated one of its contracts (named in the message)."""


def stable_dt(s: State, p: ModelParams, grid: Grid | None = None,
              opts: SolverOptions = SolverOptions()) -> float:
    """Explicit-part CFL limit: cfl_safety / max over cells of
    sum_axes (|u_k| + c_s)/h_k with c_s^2 = a m rho^(m-1) + delta beta rho^(beta-1).

    Clamped to [dt_min, dt_max]; a vacuum state has no wave speed and returns
    dt_max.  Diffusion is integrated implicitly and imposes no h^2 cap (an
    explicit-diffusion mode would cap at h^2 / (2 d max(eps, nu))).
    """
    grid = s.grid if grid is None else grid
    floor = vacuum_floor(s, opts.vacuum_factor)
    u = s.velocity(floor)
    cs = np.sqrt(p.sound_speed_sq(s.rho.values))
    rate = np.zeros(grid.shape)
    for k in range(grid.d):
        rate += (np.abs(u[k]) + cs) / grid.h[k]
    fastest = float(rate.max())
    if fastest <= 0.0:
        return opts.dt_max
    dt = opts.cfl_safety / fastest
    if dt < opts.dt_min:
        log.warning("stable_dt %.3e below dt_min %.3e; flooring", dt, opts.dt_min)
        return opts.dt_min
    return min(dt, opts.dt_max)


@dataclass
class _Workspace:
    """Sparse operators cached against the fluid-mask bytes (masks change
    rarely between steps)."""

    grid: Grid
    mask_key: bytes | None = None
    V: sp.csr_matrix | None = None
    G: sp.csr_matrix | None = None
    D: sp.csr_matrix | None = None
    lap_key: bytes | None = None
    lap: sp.csr_matrix | None = None
    open_faces: list | None = None
    domain: np.ndarray | None = None
    conf_grad: np.ndarray | None = None

    def viscous(self, fluid: np.ndarray, mu: float, lam: float):
        key = fluid.tobytes()
        if key != self.mask_key:
            self.V, self.G, self.D = operators.viscous_matrix(self.grid, fluid, mu, lam)
            self.mask_key = key
        return self.V, self.G, self.D

    def laplacian(self, mask: np.ndarray):
        key = mask.tobytes()
        if key != self.lap_key:
            self.lap = operators.neumann_laplacian(self.grid, mask)
            self.lap_key = key
        return self.lap


def _workspace(grid: Grid, p: ModelParams) -> _Workspace:
    ws = _Workspace(grid)
    ws.domain = grid.interior_mask()
    ws.open_faces = operators.transport_open_faces(grid, ws.domain)
    if not p.confinement.is_zero:
        ws.conf_grad = eval_gradient(p.confinement, grid.centers())
    return ws


def step(s: State, p: ModelParams, plan: ConvolutionPlan | None, dt: float,
         opts: SolverOptions = SolverOptions(), ws: _Workspace | None = None
         ) -> tuple[State, StepReport]:
    """One IMEX step of size dt.  Preconditions: dt <= stable_dt, state valid."""
    grid = s.grid
    p.validate_for_dimension(grid.d)
    if ws is None:
        ws = _workspace(grid, p)
    rho = s.rho.values
    mom = s.mom.values
    floor = vacuum_floor(s, opts.vacuum_factor)
    u = s.velocity(floor)
    mass_scale = max(float(rho.max()), 1e-300)

    # -- explicit transport ---------------------------------------------
    div_rho, blocked = operators.upwind_flux_divergence(grid, rho, u, ws.open_faces)
    rho_new = rho - dt * div_rho

    # -- implicit continuity diffusion -----------------------------------
    if p.eps > 0.0:
        lap = ws.laplacian(ws.domain)
        n = grid.n_cells
        A = sp.identity(n, format="csr") - (p.eps * dt) * lap
        rho_new = spla.spsolve(A.tocsc(), rho_new.ravel()).reshape(grid.shape)

    if float(rho_new.min()) < -1e-10 * mass_scale:
        raise StepError(
            f"dynamics: negative density {rho_new.min():.3e} after transport "
            f"(CFL violation at t = {s.t:.6g}, dt = {dt:.3e})"
        )
    np.clip(rho_new, 0.0, None, out=rho_new)
    if grid.domain_kind == "ball":
        rho_new[~ws.domain] = 0.0

    # -- explicit momentum tendencies -------------------------------------
    mom_star = mom.copy()
    for k in range(grid.d):
        div_mk, _ = operators.upwind_flux_divergence(grid, mom[k], u, ws.open_faces)
        mom_star[k] -= dt * div_mk
    p_cells = p.pressure(rho)
    open_for_pressure = ws.open_faces if grid.domain_kind == "ball" else None
    mom_star -= dt * operators.pressure_gradient(grid, p_cells, open_for_pressure)
    if plan is not None and plan.has("K"):
        gk = conv_force(plan, s.rho).values
        mom_star -= dt * rho * gk
    if ws.conf_grad is not None:
        mom_star -= dt * rho * ws.conf_grad
    if p.damping == "alignment":
        mom_star += dt * conv_alignment(plan, s, floor).values

    # -- implicit viscosity + linear damping ------------------------------
    fluid = (rho_new > floor) & ws.domain
    V, G, D = ws.viscous(fluid, p.mu, p.lam)
    damp_flag = 1.0 if p.damping == "linear" else 0.0
    diag = np.where(fluid, rho_new * (1.0 + dt * damp_flag), 1.0)
    diag_stacked = np.tile(diag.ravel(), grid.d)
    A = sp.diags(diag_stacked, format="csr") + dt * V
    b = np.where(fluid[None], mom_star, 0.0).reshape(-1)
    u_new = spla.spsolve(A.tocsc(), b).reshape((grid.d,) + grid.shape)
    if not np.all(np.isfinite(u_new)):
        raise StepError(f"dynamics: implicit viscous solve failed at t = {s.t:.6g}")

    mom_new = rho_new * u_new
    mom_new[:, ~fluid] = 0.0

    cs = math.sqrt(float(p.sound_speed_sq(rho).max())) if rho.max() > 0 else 0.0
    umax = float(np.abs(u).max()) if u.size else 0.0
    hmin = min(grid.h)
    report = StepReport(
        dt=dt,
        max_density=float(rho_new.max()),
        min_density=float(rho_new.min()),
        cfl_advective=dt * (umax + cs) / hmin,
        cfl_diffusive=dt * max(p.eps, p.mu, p.lam + 2.0 * p.mu) / hmin**2,
        boundary_flux=blocked,
    )
    new_state = State(s.t + dt, ScalarField(grid, rho_new), VectorField(grid, mom_new))
    return new_state, report


@dataclass
class Trajectory:
    """Snapshots, ledger rows, and step reports at the output cadence."""

    params: ModelParams
    opts: SolverOptions
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    status: str = "completed"
    steady_time: float | None = None
    n_steps: int = 0

    @property
    def final(self) -> State:
        return self.states[-1]


def run(s0: State, p: ModelParams, t_end: float, plan: ConvolutionPlan | None = None,
        opts: SolverOptions = SolverOptions(), record_states: bool = True,
        dt_override: float | None = None) -> Trajectory:
    """Advance from s0 to t_end with adaptive dt, emitting snapshots and
    ledger rows every opts.output_every time units.

    Terminates early with status "steady-detected" once |grad u|_L2 and
    int rho |u|^2 stay below their thresholds for opts.steady_rows consecutive
    rows.  Step failures propagate as StepError with the failing time.
    """
    grid = s0.grid
    p.validate_for_dimension(grid.d)
    if plan is None:
        plan = ConvolutionPlan.build(grid, p.kernel, p.psi)
    ws = _workspace(grid, p)
    traj = Trajectory(params=p, opts=opts)

    def record(state: State, report: StepReport | None):
        row = ledger_row(state, p, plan, report)
        traj.ledger.append(row)
        traj.times.append(state.t)
        if record_states:
            traj.states.append(state)
        return row

    state = s0
    row = record(state, None)
    if t_end <= s0.t:
        if not record_states:
            traj.states.append(state)
        return traj

    quiet_rows = 0
    next_output = s0.t + opts.output_every
    last_report: StepReport | None = None
    for n in range(opts.max_steps):
        if state.t >= t_end - 1e-14:
            break
        dt = dt_override if dt_override is not None else stable_dt(state, p, grid, opts)
        dt = min(dt, t_end - state.t)
        emit = False
        if state.t + dt >= next_output - 1e-14:
            dt = min(dt, max(next_output - state.t, opts.dt_min))
            emit = True
        try:
            state, last_report = step(state, p, plan, dt, opts, ws)
        except StepError as exc:
            raise StepError(f"{exc} (run aborted at t = {state.t:.6g})") from exc
        traj.n_steps += 1
        if emit or state.t >= t_end - 1e-14:
            row = record(state, last_report)
            next_output = state.t + opts.output_every
            quiet = (
                row.grad_u_l2 < opts.steady_gradu and row.rho_u_sq < opts.steady_rhouu
            )
            quiet_rows = quiet_rows + 1 if quiet else 0
            if quiet_rows >= opts.steady_rows:
                traj.status = "steady-detected"
                traj.steady_time = state.t
                break
    else:
        traj.status = "max-steps"
    if not record_states:
        traj.states.append(state)
    _fill_residuals(traj.ledger)
    return traj


def _fill_residuals(ledger: EnergyLedger) -> None:
    if len(ledger) < 2:
        return
    from .energy import energy_inequality_check

    residuals, _ = energy_inequality_check(ledger)
    for row, res in zip(ledger.rows[1:], residuals):
        row.inequality_residual = float(res)
