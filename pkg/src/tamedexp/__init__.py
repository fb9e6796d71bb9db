"""Tamed exponential integrators for semi-linear SDEs and MLMC weak-error estimators."""

from .exceptions import (
    ConfigError,
    EstimationFailedError,
    FitUndefinedError,
    InvalidInputError,
    NonCommutingError,
)
from .mlmc import (
    LevelSpec,
    LevelStats,
    WeakErrorCurve,
    estimate_level_difference,
    estimate_single_level,
    fit_rate,
    weak_error_mlmc,
    weak_error_mlmcl0,
    weak_error_mlmcsr,
    weak_error_trad,
)
from .paths import IncrementGrid, SeedSpec, coarsen, generate_batch, generate_increments
from .problems import (
    CubicBenchmark,
    SdeProblem,
    Taming,
    make_cubic_problem,
    make_linear_problem,
    phi_sq_norm,
    tame_drift,
    taming_factor,
)
from .propagator import (
    LinearPart,
    apply_propagator,
    check_commutators,
    deterministic_factor,
    mat_exp,
    propagator_sample,
)
from .schemes import (
    SchemeKind,
    TrajectoryResult,
    integrate,
    integrate_pair,
    step_euler_maruyama,
    step_exp_tamed,
    step_gbm_tamed,
    step_tamed_euler,
)

__version__ = "0.1.0"
