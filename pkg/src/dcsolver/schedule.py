"""Noise schedules and timestep grids.

A schedule maps diffusion time t to the signal/noise pair (alpha_t, sigma_t)
with alpha_t^2 + sigma_t^2 = 1 and the log signal-to-noise ratio
lambda_t = ln(alpha_t / sigma_t).  Sampling runs from t_start down to t_end,
so lambda increases along a trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RangeError

# slack for float fuzz when validating t against [t_end, t_start]
_RANGE_TOL = 1e-12

SPACINGS = ("uniform_t", "uniform_logsnr", "quadratic_t")


@dataclass(frozen=True)
class NoiseSchedule:
    """Base class; subclasses provide log_alpha(t) on [t_end, t_start]."""

    t_start: float = 1.0
    t_end: float = 1e-3

    def __post_init__(self):
        if not (0.0 < self.t_end < self.t_start <= 1.0):
            raise ConfigError(
                f"need 0 < t_end < t_start <= 1, got [{self.t_end}, {self.t_start}]"
            )
        lam_start = self.alpha_sigma_lambda(self.t_start)[2]
        lam_end = self.alpha_sigma_lambda(self.t_end)[2]
        if not (math.isfinite(lam_start) and math.isfinite(lam_end)):
            raise ConfigError("lambda must be finite on [t_end, t_start]")

    def log_alpha(self, t):
        raise NotImplementedError

    def _check_range(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < self.t_end - _RANGE_TOL) or np.any(t > self.t_start + _RANGE_TOL):
            raise RangeError(
                f"t outside [{self.t_end}, {self.t_start}]: {np.min(t)}..{np.max(t)}"
            )
        return np.clip(t, self.t_end, self.t_start)

    def alpha_sigma_lambda(self, t):
        """Return (alpha_t, sigma_t, lambda_t); scalars in, scalars out."""
        tt = self._check_range(t)
        la = self.log_alpha(tt)
        alpha = np.exp(la)
        sigma = np.sqrt(-np.expm1(2.0 * la))
        lam = la - np.log(sigma)
        if np.ndim(t) == 0:
            return float(alpha), float(sigma), float(lam)
        return alpha, sigma, lam

    def lambda_of_t(self, t):
        return self.alpha_sigma_lambda(t)[2]

    def t_of_lambda(self, lam: float) -> float:
        """Invert lambda(t) by bisection; lambda is strictly decreasing in t."""
        lo, hi = self.t_end, self.t_start
        f_lo = self.lambda_of_t(lo) - lam
        f_hi = self.lambda_of_t(hi) - lam
        if f_lo < 0.0 or f_hi > 0.0:
            raise RangeError(f"lambda {lam} outside schedule range")
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if self.lambda_of_t(mid) - lam > 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class VPLinearSchedule(NoiseSchedule):
    """Variance-preserving schedule with beta(s) linear in s.

    log alpha_t = -t^2 (beta1 - beta0) / 4 - t beta0 / 2
    """

    beta0: float = 0.1
    beta1: float = 20.0

    def __post_init__(self):
        if not (0.0 < self.beta0 < self.beta1):
            raise ConfigError(f"need 0 < beta0 < beta1, got {self.beta0}, {self.beta1}")
        super().__post_init__()

    def log_alpha(self, t):
        t = np.asarray(t, dtype=np.float64)
        return -0.25 * t * t * (self.beta1 - self.beta0) - 0.5 * t * self.beta0


@dataclass(frozen=True)
class VPCosineSchedule(NoiseSchedule):
    """Cosine schedule alpha_t = cos(pi/2 (t+s)/(1+s)) / cos(pi/2 s/(1+s)).

    alpha(1) = 0 exactly, so t_start must stay strictly below 1 to keep
    lambda finite; the range check in the base class enforces this.
    """

    t_start: float = 0.999
    offset: float = 0.008

    def __post_init__(self):
        if self.offset <= 0.0:
            raise ConfigError(f"offset must be positive, got {self.offset}")
        if self.t_start >= 1.0:
            # alpha(1) = 0 in exact arithmetic; float cos(pi/2) merely rounds
            # to ~6e-17, so the finite-lambda check alone would let this by
            raise ConfigError("cosine schedule needs t_start < 1")
        super().__post_init__()

    def log_alpha(self, t):
        t = np.asarray(t, dtype=np.float64)
        s = self.offset
        norm = math.cos(0.5 * math.pi * s / (1.0 + s))
        return np.log(np.cos(0.5 * math.pi * (t + s) / (1.0 + s)) / norm)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly decreasing times t_0 > t_1 > ... > t_M with cached lambdas."""

    schedule: NoiseSchedule
    times: np.ndarray
    lambdas: np.ndarray = field(init=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or len(times) < 2:
            raise ConfigError("grid needs at least two timesteps")
        if not np.all(np.diff(times) < 0.0):
            raise ConfigError("grid times must be strictly decreasing")
        object.__setattr__(self, "times", times)
        lams = np.array([self.schedule.lambda_of_t(t) for t in times])
        if not np.all(np.diff(lams) > 0.0):
            raise ConfigError("lambda must be strictly increasing along the grid")
        object.__setattr__(self, "lambdas", lams)

    @property
    def nfe(self) -> int:
        return len(self.times) - 1

    def h(self, i: int) -> float:
        """Step size lambda_i - lambda_{i-1} for the step arriving at t_i."""
        if not 1 <= i <= self.nfe:
            raise RangeError(f"step index {i} outside 1..{self.nfe}")
        return float(self.lambdas[i] - self.lambdas[i - 1])


def alpha_sigma_lambda(schedule: NoiseSchedule, t):
    return schedule.alpha_sigma_lambda(t)


def make_grid(schedule: NoiseSchedule, nfe: int, spacing: str = "uniform_t") -> TimeGrid:
    """Build an (nfe+1)-point grid from t_start to t_end under the given spacing."""
    if nfe < 1:
        raise ConfigError(f"nfe must be >= 1, got {nfe}")
    if spacing not in SPACINGS:
        raise ConfigError(f"unknown spacing {spacing!r}, expected one of {SPACINGS}")
    t0, t1 = schedule.t_start, schedule.t_end
    if spacing == "uniform_t":
        times = np.linspace(t0, t1, nfe + 1)
    elif spacing == "quadratic_t":
        times = np.linspace(math.sqrt(t0), math.sqrt(t1), nfe + 1) ** 2
    else:
        lams = np.linspace(schedule.lambda_of_t(t0), schedule.lambda_of_t(t1), nfe + 1)
        times = np.array([schedule.t_of_lambda(lam) for lam in lams])
    # pin endpoints exactly; bisection only reaches them to 1e-12
    times[0], times[-1] = t0, t1
    return TimeGrid(schedule, times)
