"""Denoising-model interface, parameterization conversions, and analytic models.

Model outputs come in three equivalent parameterizations tied together by the
state x at the same time:

    x = alpha * x0 + sigma * eps        eps = sigma * x + alpha * v
    x0 = alpha * x - sigma * v          v = alpha * eps - sigma * x0

Analytic Gaussian-mixture denoisers make exact trajectories computable, which
is what every convergence and compensation test in this package runs against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractError
from .schedule import NoiseSchedule

PARAMS = ("data_pred", "noise_pred", "v_pred")


@dataclass(frozen=True)
class ModelOutput:
    """One denoiser evaluation: `value` has the same shape as the state x."""

    param: str
    value: np.ndarray
    t: float

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ContractError(f"unknown parameterization {self.param!r}")
        object.__setattr__(self, "value", np.asarray(self.value, dtype=np.float64))


class DenoisingModel:
    """Interface: evaluate(x, t, cond) -> ModelOutput.

    `x` may carry leading batch axes; `value` matches its shape.  `cond` is an
    opaque integer id (None = unconditional).  Implementations must be pure
    functions of (x, t, cond) so trajectories are reproducible.
    """

    dim: int

    def evaluate(self, x: np.ndarray, t: float, cond: int | None = None) -> ModelOutput:
        raise NotImplementedError


def convert(output: ModelOutput, x: np.ndarray, schedule: NoiseSchedule, target: str) -> ModelOutput:
    """Re-express a model output in another parameterization at the same (x, t)."""
    if target not in PARAMS:
        raise ContractError(f"unknown parameterization {target!r}")
    if output.param == target:
        return output
    alpha, sigma, _ = schedule.alpha_sigma_lambda(output.t)
    x = np.asarray(x, dtype=np.float64)
    v = output.value
    if output.param == "data_pred":
        x0 = v
        eps = None
    elif output.param == "noise_pred":
        x0 = (x - sigma * v) / alpha
        eps = v
    else:  # v_pred; both identities below are division-free
        x0 = alpha * x - sigma * v
        eps = sigma * x + alpha * v
    if target == "data_pred":
        out = x0
    elif target == "noise_pred":
        out = eps if eps is not None else (x - alpha * x0) / sigma
    else:
        if eps is None:
            eps = (x - alpha * x0) / sigma
        out = alpha * eps - sigma * x0
    return ModelOutput(param=target, value=out, t=output.t)


def cfg_combine(cond: ModelOutput, uncond: ModelOutput, scale: float) -> ModelOutput:
    """Guidance in noise space: scale * eps_cond + (1 - scale) * eps_uncond."""
    if cond.t != uncond.t:
        raise ContractError(f"guidance branches at different times: {cond.t} vs {uncond.t}")
    if cond.param != "noise_pred" or uncond.param != "noise_pred":
        raise ContractError("guidance operates on noise_pred outputs; convert first")
    value = scale * cond.value + (1.0 - scale) * uncond.value
    return ModelOutput(param="noise_pred", value=value, t=cond.t)


class GaussianMixtureModel(DenoisingModel):
    """Exact noise prediction for data drawn from sum_j w_j N(mu_j, s^2 I).

    The marginal at time t is sum_j w_j N(alpha mu_j, (alpha^2 s^2 + sigma^2) I),
    so the ideal denoiser is the posterior-weighted mean pulled through the
    noise parameterization:

        eps*(x, t) = sigma * (x - alpha * E[mu | x]) / (alpha^2 s^2 + sigma^2)
    """

    def __init__(self, schedule: NoiseSchedule, means, weights, scale: float):
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        weights = np.asarray(weights, dtype=np.float64)
        if means.ndim != 2 or len(weights) != len(means):
            raise ContractError("means must be (J, d) with one weight per component")
        if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ContractError("weights must be positive and sum to 1")
        if scale <= 0.0:
            raise ContractError(f"scale must be positive, got {scale}")
        self.schedule = schedule
        self.means = means
        self.weights = weights / weights.sum()
        self.scale = float(scale)
        self.dim = means.shape[1]

    def evaluate(self, x: np.ndarray, t: float, cond: int | None = None) -> ModelOutput:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ContractError(f"x has dim {x.shape[-1]}, model expects {self.dim}")
        alpha, sigma, _ = self.schedule.alpha_sigma_lambda(t)
        c2 = alpha * alpha * self.scale * self.scale + sigma * sigma
        flat = np.ascontiguousarray(x.reshape(-1, self.dim))
        post_mean = _kernels.backend.gmm_posterior_mean(
            flat, self.means, np.log(self.weights), alpha, c2
        )
        eps = sigma * (x - alpha * post_mean.reshape(x.shape)) / c2
        return ModelOutput(param="noise_pred", value=eps, t=t)


class GuidedModel(DenoisingModel):
    """Classifier-free guidance over a conditional and an unconditional branch.

    Both branches are converted to noise prediction at the query state before
    the affine combination, so branches may use different parameterizations.
    """

    def __init__(
        self,
        cond_model: DenoisingModel,
        uncond_model: DenoisingModel,
        scale: float,
        schedule: NoiseSchedule | None = None,
    ):
        if cond_model.dim != uncond_model.dim:
            raise ConfigError("guidance branches must share the data dimension")
        self.cond_model = cond_model
        self.uncond_model = uncond_model
        self.scale = float(scale)
        self.dim = cond_model.dim
        self.schedule = schedule or getattr(cond_model, "schedule", None)
        if self.schedule is None:
            raise ConfigError("guidance needs a schedule for parameterization conversion")

    def evaluate(self, x: np.ndarray, t: float, cond: int | None = None) -> ModelOutput:
        out_c = self.cond_model.evaluate(x, t, cond)
        out_u = self.uncond_model.evaluate(x, t, None)
        out_c = convert(out_c, x, self.schedule, "noise_pred")
        out_u = convert(out_u, x, self.schedule, "noise_pred")
        return cfg_combine(out_c, out_u, self.scale)


def gaussian_ode_solution(
    schedule: NoiseSchedule, mu, scale: float, x_init, t_from: float, t_to: float
) -> np.ndarray:
    """Exact flow map of the sampling ODE for single-Gaussian data N(mu, s^2 I).

    The normalized deviation (x - alpha mu) / c with c^2 = alpha^2 s^2 + sigma^2
    is conserved, so

        x(t_to) = alpha_to mu + (c_to / c_from) (x_init - alpha_from mu)
    """
    mu = np.asarray(mu, dtype=np.float64)
    x_init = np.asarray(x_init, dtype=np.float64)

    def c_of(t):
        alpha, sigma, _ = schedule.alpha_sigma_lambda(t)
        return alpha, np.sqrt(alpha * alpha * scale * scale + sigma * sigma)

    a_from, c_from = c_of(t_from)
    a_to, c_to = c_of(t_to)
    return a_to * mu + (c_to / c_from) * (x_init - a_from * mu)
