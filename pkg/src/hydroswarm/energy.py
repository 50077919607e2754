"""Free-energy bookkeeping: components, dissipation, inequality residuals.

The total energy of a state splits into

    kinetic      1/2 int rho |u|^2
    internal     a/(m-1) int rho^m
    interaction  1/2 int (K * rho) rho
    confinement  int rho Phi
    delta_term   delta/(beta-1) int rho^beta      (artificial-pressure layer)

and along solutions it decays with rate

    visc  int mu |grad u|^2 + (lam + mu) |div u|^2
    damp  int rho |u|^2                            (linear damping)
          1/2 int int psi(x-y) rho(x) rho(y) |u(y)-u(x)|^2   (alignment)

The discrete dissipation reuses the gradient/divergence stencils of the
implicit viscous solve, so ledger residuals

    E(t_{n+1}) - E(t_n) + trapezoid of (visc + damp)

measure pure time/space truncation and shrink under refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from . import operators
from .convolution import ConvolutionPlan, conv_scalar, _convolve_values
from .fields import ScalarField, State, total_mass
from .model import ModelParams, StepReport
from .potentials import ConfinementSpec, eval_potential

__all__ = [
    "EnergyBreakdown",
    "EnergyRow",
    "EnergyLedger",
    "free_energy",
    "dissipation_rate",
    "ledger_row",
    "energy_inequality_check",
    "renormalized_residual",
    "tail_mass_bound",
    "spacetime_norm",
    "vacuum_floor",
    "CSV_COLUMNS",
]


def vacuum_floor(s: State, factor: float = 1e-12) -> float:
    """factor * (total mass / box volume); velocities below it are zeroed."""
    box = np.prod([2.0 * L for L in s.grid.extent])
    return factor * total_mass(s) / float(box)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    internal: float
    interaction: float
    confinement: float
    delta_term: float

    @property
    def total(self) -> float:
        return (
            self.kinetic
            + self.internal
            + self.interaction
            + self.confinement
            + self.delta_term
        )


def free_energy(s: State, p: ModelParams, plan: ConvolutionPlan | None = None) -> EnergyBreakdown:
    """Midpoint quadrature of every energy component."""
    grid = s.grid
    hv = grid.cell_volume
    rho = s.rho.values
    floor = vacuum_floor(s)
    keep = rho > floor
    kin = 0.0
    if keep.any():
        kin = 0.5 * float(
            ((s.mom.values[:, keep] ** 2).sum(axis=0) / rho[keep]).sum()
        ) * hv
    internal = p.a / (p.m - 1.0) * float((rho**p.m).sum()) * hv
    inter = 0.0
    if plan is not None and plan.has("K"):
        inter = 0.5 * float((conv_scalar(plan, s.rho, "K").values * rho).sum()) * hv
    conf = 0.0
    if not p.confinement.is_zero:
        conf = float((eval_potential(p.confinement, grid.centers()) * rho).sum()) * hv
    delta_term = 0.0
    if p.delta > 0:
        delta_term = p.delta / (p.beta - 1.0) * float((rho**p.beta).sum()) * hv
    return EnergyBreakdown(kin, internal, inter, conf, delta_term)


def dissipation_rate(s: State, p: ModelParams, plan: ConvolutionPlan | None = None) -> tuple[float, float]:
    """(viscous, damping) dissipation of the state, with the solver's stencils."""
    grid = s.grid
    floor = vacuum_floor(s)
    u = s.velocity(floor)
    fluid = (s.rho.values > floor) & grid.interior_mask()
    G = operators.gradient_faces(grid, fluid)
    D = operators.divergence_cells(grid, fluid)
    visc = p.mu * operators.velocity_gradient_sq(grid, fluid, u, G)
    visc += (p.lam + p.mu) * operators.divergence_sq(grid, fluid, u, D)
    damp = _damping_dissipation(s, p, plan, u)
    return visc, damp


def _damping_dissipation(s: State, p: ModelParams, plan, u) -> float:
    hv = s.grid.cell_volume
    rho = s.rho.values
    if p.damping == "none":
        return 0.0
    rho_u_sq = float((rho * (u**2).sum(axis=0)).sum()) * hv
    if p.damping == "linear":
        return rho_u_sq
    # alignment: 1/2 double sum psi(x-y) rho(x) rho(y) |u(y)-u(x)|^2, expanded
    # into convolutions: int rho|u|^2 (psi*rho) - int rho u . (psi*(rho u))
    if plan is None or not plan.has("psi"):
        raise ValueError("alignment damping needs a plan with a psi kernel")
    psi_rho = _convolve_values(plan, rho, "psi")
    out = float((rho * (u**2).sum(axis=0) * psi_rho).sum()) * hv
    for k in range(s.grid.d):
        psi_mom = _convolve_values(plan, s.mom.values[k], "psi")
        out -= float((rho * u[k] * psi_mom).sum()) * hv
    return out


@dataclass
class EnergyRow:
    t: float
    kinetic: float
    internal: float
    interaction: float
    confinement: float
    delta_term: float
    dissipation_visc: float
    dissipation_damp: float
    inequality_residual: float = 0.0
    # diagnostics beyond the CSV contract
    mass: float = 0.0
    grad_u_l2: float = 0.0
    rho_u_sq: float = 0.0
    report: StepReport | None = None

    @property
    def total(self) -> float:
        return (
            self.kinetic
            + self.internal
            + self.interaction
            + self.confinement
            + self.delta_term
        )


CSV_COLUMNS = (
    "t",
    "kinetic",
    "internal",
    "interaction",
    "confinement",
    "delta_term",
    "dissipation_visc",
    "dissipation_damp",
    "inequality_residual",
    "dt",
    "max_density",
    "min_density",
    "cfl_advective",
    "cfl_diffusive",
    "boundary_flux",
)


@dataclass
class EnergyLedger:
    rows: list = field(default_factory=list)

    def append(self, row: EnergyRow) -> None:
        if self.rows and row.t <= self.rows[-1].t:
            raise ValueError("ledger rows must be strictly increasing in t")
        for name in ("kinetic", "internal", "delta_term"):
            if getattr(row, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        vals = [getattr(row, f.name) for f in dc_fields(row) if f.name != "report"]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("ledger row contains non-finite entries")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for r in self.rows:
                rep = r.report
                rep_vals = (
                    (rep.dt, rep.max_density, rep.min_density, rep.cfl_advective,
                     rep.cfl_diffusive, rep.boundary_flux)
                    if rep is not None
                    else (0.0,) * 6
                )
                vals = (
                    r.t, r.kinetic, r.internal, r.interaction, r.confinement,
                    r.delta_term, r.dissipation_visc, r.dissipation_damp,
                    r.inequality_residual, *rep_vals,
                )
                fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def ledger_row(s: State, p: ModelParams, plan: ConvolutionPlan | None,
               report: StepReport | None = None) -> EnergyRow:
    grid = s.grid
    e = free_energy(s, p, plan)
    visc, damp = dissipation_rate(s, p, plan)
    floor = vacuum_floor(s)
    u = s.velocity(floor)
    fluid = (s.rho.values > floor) & grid.interior_mask()
    gradu = math.sqrt(operators.velocity_gradient_sq(grid, fluid, u))
    rho_u_sq = float((s.rho.values * (u**2).sum(axis=0)).sum()) * grid.cell_volume
    return EnergyRow(
        t=s.t,
        kinetic=e.kinetic,
        internal=e.internal,
        interaction=e.interaction,
        confinement=e.confinement,
        delta_term=e.delta_term,
        dissipation_visc=visc,
        dissipation_damp=damp,
        mass=total_mass(s),
        grad_u_l2=gradu,
        rho_u_sq=rho_u_sq,
        report=report,
    )


def energy_inequality_check(ledger: EnergyLedger, tol: float = math.inf):
    """residual_n = E(t_{n+1}) - E(t_n) + trapezoid dissipation over the gap.

    Returns (residuals, flagged) where flagged marks residual > tol; for an
    energy-dissipating scheme residuals stay below a small positive tolerance
    that shrinks with refinement.
    """
    if len(ledger) < 2:
        raise ValueError("need at least two ledger rows")
    t = ledger.times()
    E = ledger.totals()
    D = ledger.column("dissipation_visc") + ledger.column("dissipation_damp")
    dt = np.diff(t)
    residuals = np.diff(E) + 0.5 * dt * (D[:-1] + D[1:])
    return residuals, residuals > tol


# --- renormalized continuity residual ---------------------------------------


def _bump(center: float, width: float):
    """C^1 cosine bump supported on [center - width, center + width]."""

    def value(z):
        s = (np.asarray(z) - center) / width
        return np.where(np.abs(s) < 1.0, np.cos(0.5 * np.pi * s) ** 2, 0.0)

    def deriv(z):
        s = (np.asarray(z) - center) / width
        return np.where(
            np.abs(s) < 1.0, -0.5 * np.pi * np.sin(np.pi * s) / width, 0.0
        )

    return value, deriv


def _central_divergence(grid, u) -> np.ndarray:
    div = np.zeros(grid.shape)
    for axis in range(grid.d):
        h = grid.h[axis]
        g = np.gradient(u[axis], h, axis=axis)
        div += g
    return div


def renormalized_residual(traj, b, b_prime, flat_beyond: float | None = None,
                          n_bumps: int = 3, seed: int = 0) -> float:
    """Weak residual of d/dt b(rho) + div(b(rho) u) + (b'(rho) rho - b(rho)) div u.

    Pairs the identity against n_bumps x n_bumps tensor-product space-time
    bumps (fixed seed) and returns the largest |pairing|.  When flat_beyond
    is given, b' is required to vanish numerically beyond it.
    """
    if flat_beyond is not None:
        z = np.linspace(flat_beyond, 4.0 * flat_beyond + 10.0, 64)
        scale = max(1.0, float(np.max(np.abs(b(z)))))
        if np.max(np.abs(b_prime(z))) > 1e-10 * scale:
            raise ValueError("b' does not vanish beyond the declared flatness bound")

    states = traj.states
    if len(states) < 3:
        raise ValueError("need at least three snapshots")
    times = np.array([s.t for s in states])
    grid = states[0].grid
    rng = np.random.default_rng(seed)

    t0, t1 = times[0], times[-1]
    t_span = t1 - t0
    t_centers = t0 + (0.25 + 0.5 * rng.random(n_bumps)) * t_span
    t_width = 0.2 * t_span
    x_bumps = []
    for axis in range(grid.d):
        L = grid.extent[axis]
        centers = (0.5 * rng.random(n_bumps) - 0.25) * L
        x_bumps.append([(c, 0.45 * L) for c in centers])

    # precompute per-snapshot integrands
    floors = [vacuum_floor(s) for s in states]
    coords = grid.centers()
    hv = grid.cell_volume

    worst = 0.0
    for tc in t_centers:
        Tv, Td = _bump(tc, t_width)
        for combo in _space_combos(x_bumps):
            Xv = np.ones(grid.shape)
            Xg = [np.ones(grid.shape) for _ in range(grid.d)]
            for axis, (c, w) in enumerate(combo):
                v, dv = _bump(c, w)
                vals = v(coords[axis])
                dvals = dv(coords[axis])
                for k in range(grid.d):
                    Xg[k] = Xg[k] * (dvals if k == axis else vals)
                Xv = Xv * vals
            samples = np.empty(len(states))
            for i, s in enumerate(states):
                rho = s.rho.values
                u = s.velocity(floors[i])
                brho = b(rho)
                divu = _central_divergence(grid, u)
                term = brho * Td(s.t) * Xv
                for k in range(grid.d):
                    term = term + brho * u[k] * Tv(s.t) * Xg[k]
                term = term - (b_prime(rho) * rho - brho) * divu * Tv(s.t) * Xv
                samples[i] = term.sum() * hv
            pairing = float(np.trapezoid(samples, times))
            worst = max(worst, abs(pairing))
    return worst


def _space_combos(x_bumps):
    if len(x_bumps) == 1:
        for item in x_bumps[0]:
            yield (item,)
    else:
        for a in x_bumps[0]:
            for b_ in x_bumps[1]:
                yield (a, b_)


def tail_mass_bound(s: State, c: ConfinementSpec, R: float) -> tuple[float, float]:
    """Mass beyond radius R against the Chebyshev-style confinement bound
    (1/R^(1+nu)) * int Phi rho; requires Phi >= |x|^(1+nu) on sampled radii
    beyond R and Phi >= 0 inside."""
    grid = s.grid
    r = grid.radii()
    phi = eval_potential(c, grid.centers())
    outside = r > R
    bad = outside & (phi < r ** (1.0 + c.nu))
    if bad.any():
        worst = float(r[bad].min())
        raise ValueError(
            f"confinement fails Phi >= |x|^(1+nu) at radius {worst:.6g} (nu={c.nu})"
        )
    neg = ~outside & (phi < 0)
    if neg.any():
        worst = float(r[neg].min())
        raise ValueError(f"confinement negative at radius {worst:.6g}")
    hv = grid.cell_volume
    tail = float(s.rho.values[outside].sum()) * hv
    bound = float((phi * s.rho.values).sum()) * hv / R ** (1.0 + c.nu)
    if tail > bound * (1.0 + 1e-12) + 1e-300:
        raise ValueError(f"tail mass {tail:.6g} exceeds confinement bound {bound:.6g}")
    return tail, bound


def spacetime_norm(traj, p: float | None = None, window: tuple[float, float] | None = None,
                   box_half: float | None = None) -> float:
    """(int_window int_B rho^p)^(1/p), trapezoid in time, midpoint in space.

    p defaults to m + theta of the trajectory's model; B = [-box_half, box_half]^d
    (whole grid when omitted).
    """
    from .potentials import theta_exponent

    states = traj.states
    times = np.array([s.t for s in states])
    if p is None:
        m = traj.params.m
        p = float(m) + float(theta_exponent(m))
    if window is None:
        window = (times[0], times[-1])
    lo, hi = window
    if lo < times[0] - 1e-12 or hi > times[-1] + 1e-12 or hi <= lo:
        raise ValueError(f"window {window} outside trajectory [{times[0]}, {times[-1]}]")
    sel = (times >= lo - 1e-12) & (times <= hi + 1e-12)
    if sel.sum() < 2:
        raise ValueError("window contains fewer than two snapshots")
    grid = states[0].grid
    if box_half is None:
        inside = np.ones(grid.shape, dtype=bool)
    else:
        coords = grid.centers()
        inside = np.all(np.abs(coords) <= box_half, axis=0)
    hv = grid.cell_volume
    vals = np.array(
        [float((s.rho.values[inside] ** p).sum()) * hv for s, keep in zip(states, sel) if keep]
    )
    return float(np.trapezoid(vals, times[sel])) ** (1.0 / p)
