"""Numerical laboratory for the nonlocal p-Laplacian thermistor problem.

    u_t - div(|grad u|^{p-2} grad u) = lam f(u) / (int f(u))^2,  u = 0 on the boundary.
"""

from .analysis import (
    GhidagliaParams,
    ProbeReport,
    absorbing_probe,
    boundedness_probe,
    contraction_probe,
    default_test_functions,
    ghidaglia_bound,
    ghidaglia_suite,
    threshold_probe,
    verify_ghidaglia,
    weak_residual,
    weak_residuals,
)
from .config import RunConfig, parse_config
from .discretization import Grid, GridField, lp_norm, p_laplacian_apply, w1p_seminorm
from .errors import (
    BlowUpError,
    ConfigError,
    DegeneracyError,
    EvaluationError,
    ProbeError,
    RangeError,
    SolverError,
    StepBudgetError,
    ThermistorError,
)
from .galerkin import SineBasis, SpectralState, galerkin_rhs, galerkin_run
from .problem import (
    DomainSpec,
    InitialCondition,
    ProblemSpec,
    SourceFunction,
    Thresholds,
    compute_d0,
    compute_k0,
    nonlocal_source,
    validate_hypotheses,
)
from .runner import run, sweep
from .stepping import StepperConfig, run_to_time, step_explicit, step_imex
from .trajectory import TrajectoryRecord

__version__ = "0.1.0"
