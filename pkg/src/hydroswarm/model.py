"""Parameter containers shared by the integrator, energy ledger, and solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

from .potentials import ConfinementSpec, KernelSpec

__all__ = ["ModelParams", "SolverOptions", "StepReport", "DAMPING_KINDS"]

DAMPING_KINDS = ("linear", "alignment", "none")


@dataclass(frozen=True)
class ModelParams:
    """Physical constants and force selection.

    mu, lam: Newtonian viscosity pair, mu > 0 and lam + (2/d) mu >= 0.
    a, m: pressure a rho^m with a > 0, m > 3/2.
    eps: artificial viscosity in the continuity equation (>= 0).
    delta, beta: artificial pressure delta rho^beta; beta > max(4, m) when on.
    damping: "linear" (-rho u), "alignment" (velocity exchange via psi), "none".
    """

    mu: float = 1.0
    lam: float = 0.0
    a: float = 1.0
    m: float = 2.0
    eps: float = 0.0
    delta: float = 0.0
    beta: float = 5.0
    damping: str = "linear"
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("zero"))
    confinement: ConfinementSpec = field(default_factory=lambda: ConfinementSpec("zero"))
    psi: KernelSpec | None = None

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu = {self.mu} violates mu > 0")
        if self.a <= 0:
            raise ValueError(f"a = {self.a} violates a > 0")
        if self.m <= 1.5:
            raise ValueError(f"m = {self.m} violates m > 3/2")
        if self.eps < 0:
            raise ValueError(f"eps = {self.eps} must be nonnegative")
        if self.delta < 0:
            raise ValueError(f"delta = {self.delta} must be nonnegative")
        if self.delta > 0 and self.beta <= max(4.0, self.m):
            raise ValueError(
                f"beta = {self.beta} violates beta > max(4, m) = {max(4.0, self.m)}"
            )
        if self.damping not in DAMPING_KINDS:
            raise ValueError(f"unknown damping kind {self.damping!r}")
        if self.damping == "alignment" and (self.psi is None or self.psi.is_zero):
            raise ValueError("alignment damping needs a nonzero psi kernel")

    def validate_for_dimension(self, d: int) -> None:
        if self.lam + (2.0 / d) * self.mu < 0:
            raise ValueError(
                f"lambda = {self.lam} violates lambda + (2/d) mu >= 0 for d = {d}"
            )

    def pressure(self, rho):
        p = self.a * rho**self.m
        if self.delta > 0:
            p = p + self.delta * rho**self.beta
        return p

    def sound_speed_sq(self, rho):
        c2 = self.a * self.m * rho ** (self.m - 1.0)
        if self.delta > 0:
            c2 = c2 + self.delta * self.beta * rho ** (self.beta - 1.0)
        return c2


@dataclass(frozen=True)
class SolverOptions:
    """Numeric knobs; defaults documented in config.DEFAULTS."""

    cfl_safety: float = 0.4
    dt_min: float = 1e-9
    dt_max: float = 0.05
    vacuum_factor: float = 1e-12  # floor = factor * M0 / |box|
    steady_gradu: float = 1e-6
    steady_rhouu: float = 1e-10
    steady_rows: int = 100
    output_every: float = 0.1
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (0 < self.cfl_safety <= 1):
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.dt_min <= 0 or self.dt_max < self.dt_min:
            raise ValueError("need 0 < dt_min <= dt_max")


@dataclass(frozen=True)
class StepReport:
    dt: float
    max_density: float
    min_density: float
    cfl_advective: float
    cfl_diffusive: float
    boundary_flux: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("step report with nonpositive dt")
