"""Nested particle filtering for joint parameter and state estimation."""

from .diagnostics import (
    NessBoundReport,
    NessRecord,
    RateFit,
    check_ness_bound,
    compute_ness,
    count_distinct,
    fit_inverse_sqrt_rate,
    normalized_abs_error,
)
from .inner_filter import (
    DegenerateWeightsError,
    InnerParticleSet,
    LikelihoodEstimate,
    estimate_likelihood,
    propagate,
    resample_multinomial,
    run_bootstrap,
)
from .jitter import (
    MixtureDiracKernel,
    MomentBoundReport,
    TruncatedGaussianKernel,
    check_moment_bound,
    sample_jitter,
    sample_truncated_normal,
    variance_schedule,
)
from .lorenz63 import (
    DivergenceError,
    GroundTruth,
    LorenzConfig,
    build_lorenz_model,
    euler_step,
    observe,
    simulate_truth,
)
from .model import (
    ModelDefinition,
    SupportBox,
    build_linear_gaussian_model,
    contains,
)
from .nested import (
    DegenerateSystemError,
    FilterRun,
    NestedSystem,
    StepOutput,
    estimate_joint,
    estimate_param,
    initialize,
    run_filter,
    step,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
