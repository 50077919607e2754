"""hydroswarm: a finite-volume laboratory for damped viscous hydrodynamic
swarming with nonlocal interaction forces.

Core objects: Grid / ScalarField / VectorField / State (fields), the kernel
and confinement catalog with hypothesis checks (potentials), zero-padded
convolutions (convolution), the IMEX integrator (dynamics), free-energy
bookkeeping (energy), and stationary solvers plus comparators (steady).
"""

from .convolution import ConvolutionPlan, conv_alignment, conv_force, conv_scalar
from .dynamics import StepError, Trajectory, run, stable_dt, step
from .energy import (
    EnergyLedger,
    dissipation_rate,
    energy_inequality_check,
    free_energy,
    ledger_row,
    renormalized_residual,
    spacetime_norm,
    tail_mass_bound,
)
from .fields import (
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
from .model import ModelParams, SolverOptions, StepReport
from .potentials import (
    ConfinementSpec,
    HypothesisReport,
    KernelSpec,
    QWindow,
    admissible_q_windows,
    check_hypotheses,
    eval_gradient,
    eval_potential,
    theta_exponent,
)
from .steady import (
    FlockFrameResult,
    SteadyProblem,
    SteadySolution,
    com_trajectory,
    flock_frame,
    omega_limit_distance,
    solve_fixed_point,
    solve_gradient_flow,
)

__version__ = "0.1.0"
