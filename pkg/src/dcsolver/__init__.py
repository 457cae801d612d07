"""Diffusion-ODE sampling with dynamic compensation of the output buffer.

Predictor-corrector exponential integrators in the log-SNR domain, a
per-step compensation-ratio search against reference trajectories, and a
cascade polynomial regression that generalizes searched ratios across
guidance scale and step budget.
"""
from .compensation import (
    OPTIMIZERS,
    CompensationSchedule,
    SearchConfig,
    SearchReport,
    StepSearch,
    lagrange_compensate,
    load_schedule,
    save_schedule,
    search_all,
    search_step,
    swap_buffer,
)
from .cpr import (
    DEFAULT_DEGREES,
    CPRCoefficients,
    cpr_fit,
    cpr_predict,
    load_cpr,
    save_cpr,
)
from .errors import (
    ConfigError,
    ConnectionFailure,
    ContractError,
    DCSolverError,
    DimensionMismatch,
    FitError,
    ProtocolError,
    RangeError,
    RemoteError,
    SearchError,
    ServerError,
    VersionMismatch,
    WarmupError,
)
from .evaluation import (
    EvalCell,
    EvalReport,
    ground_truth,
    mse_to_gt,
    order_slope,
    run_experiment,
    seeded_points,
)
from .model import (
    PARAMS,
    DenoisingModel,
    GaussianMixtureModel,
    GuidedModel,
    ModelOutput,
    cfg_combine,
    convert,
    gaussian_ode_solution,
)
from .remote import RemoteDenoiser, remote_evaluate, serve_check
from .schedule import (
    SPACINGS,
    NoiseSchedule,
    TimeGrid,
    VPCosineSchedule,
    VPLinearSchedule,
    alpha_sigma_lambda,
    make_grid,
)
from .solver import (
    DEFAULT_K,
    Buffer,
    SamplerConfig,
    Trajectory,
    corrector_step,
    exp_integrals,
    predictor_step,
    sample,
    step_coefficients,
    trajectory_to_jsonl,
)

__version__ = "0.1.0"

__all__ = [
    "Buffer",
    "CPRCoefficients",
    "CompensationSchedule",
    "ConfigError",
    "ConnectionFailure",
    "ContractError",
    "DCSolverError",
    "DEFAULT_DEGREES",
    "DEFAULT_K",
    "DenoisingModel",
    "DimensionMismatch",
    "EvalCell",
    "EvalReport",
    "FitError",
    "GaussianMixtureModel",
    "GuidedModel",
    "ModelOutput",
    "NoiseSchedule",
    "OPTIMIZERS",
    "PARAMS",
    "ProtocolError",
    "RangeError",
    "RemoteDenoiser",
    "RemoteError",
    "SPACINGS",
    "SamplerConfig",
    "SearchConfig",
    "SearchError",
    "SearchReport",
    "ServerError",
    "StepSearch",
    "TimeGrid",
    "Trajectory",
    "VPCosineSchedule",
    "VPLinearSchedule",
    "VersionMismatch",
    "WarmupError",
    "alpha_sigma_lambda",
    "cfg_combine",
    "convert",
    "corrector_step",
    "cpr_fit",
    "cpr_predict",
    "exp_integrals",
    "gaussian_ode_solution",
    "ground_truth",
    "lagrange_compensate",
    "load_cpr",
    "load_schedule",
    "make_grid",
    "mse_to_gt",
    "order_slope",
    "predictor_step",
    "remote_evaluate",
    "run_experiment",
    "sample",
    "save_cpr",
    "save_schedule",
    "search_all",
    "search_step",
    "seeded_points",
    "serve_check",
    "step_coefficients",
    "swap_buffer",
    "trajectory_to_jsonl",
    "__version__",
]
