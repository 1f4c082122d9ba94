"""Numerical laboratory for Rayleigh-Taylor instability of nonhomogeneous
incompressible viscous flow in a box: growth-rate eigenproblem, linearized
and nonlinear dynamics, and amplitude-scaling experiments."""

__version__ = "0.1.0"

from .grid import (
    Grid,
    GridMismatchError,
    ScalarField,
    VelocityField,
    read_component,
    write_component,
)
from .growth import (
    AlphaResult,
    GrowthRateResult,
    VariationalProblem,
    alpha,
    eigen_checks,
    eigenpair,
    oracle_alpha_dense,
    solve_lambda,
)
from .lab import (
    ErrorScalingResult,
    ErrorScalingRow,
    EscapeRow,
    EscapeTimeResult,
    HeadlineReport,
    SeedData,
    build_seed,
    random_divergence_free,
    run_error_scaling,
    run_escape_time,
    run_headline_case,
)
from .linear import (
    LinearState,
    LinearStepper,
    analytic_mode,
    evolve,
    measured_growth_rate,
)
from .nonlinear import (
    NonlinearStepper,
    State,
    StepReport,
    TrajectorySummary,
    advect_density,
    density_bounds,
    run,
    state_norms,
)
from .operators import (
    buoyancy_field,
    divergence,
    dirichlet_form,
    gradient,
    inner,
    laplacian_dirichlet,
    norm_h1,
    norm_h2,
    norm_l2,
    weighted_inner,
)
from .profiles import (
    DensityProfile,
    PhysicalParams,
    builtin_profile,
    profile_from_csv,
    sample_profile,
)
from .solvers import (
    CompatibilityError,
    ConvergenceError,
    HelmholtzSolver,
    ProjectionSolver,
    leray_project,
    poisson_solve,
)

__all__ = [name for name in dir() if not name.startswith("_")]
