"""Exponential-integrator predictor-corrector sampling.

Steps integrate the sampling ODE in the log-SNR variable.  With data
prediction the exact variation-of-constants update from t_s to t_t is

    x_t = (sigma_t / sigma_s) x_s + sigma_t * integral e^lambda P(lambda) dlambda

where P interpolates buffered model outputs; with noise prediction the signal
ratio and a mirrored kernel appear instead.  The integral of the interpolant
is evaluated exactly through the m_k recurrence in `_kernels`, so the order of
the method is the number of interpolation nodes.

The corrector applies the same formula over the same interval with the node
set extended by the output at the newly predicted point; it consumes the next
step's model evaluation, adding no extra calls.  The final grid point gets no
corrector (its output is never evaluated), so an NFE budget of M means
exactly M model calls.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractError, RangeError, WarmupError
from .model import DenoisingModel, ModelOutput, convert
from .schedule import TimeGrid

# compensation history length; buffers keep max(order, K+1) entries so the
# re-estimation window is always available once warm-up is over
DEFAULT_K = 2

WORKING_PARAMS = ("data_pred", "noise_pred")


@dataclass(frozen=True)
class SamplerConfig:
    order: int = 2
    use_corrector: bool = True
    param: str = "data_pred"

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ConfigError(f"order must be 1, 2, or 3, got {self.order}")
        if self.param not in WORKING_PARAMS:
            raise ConfigError(
                f"working parameterization must be one of {WORKING_PARAMS}, got {self.param!r}"
            )


@dataclass(frozen=True)
class Buffer:
    """Recent model outputs, oldest first; times strictly decrease along sampling."""

    entries: tuple[ModelOutput, ...] = ()
    capacity: int = DEFAULT_K + 1

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigError(f"capacity must be >= 1, got {self.capacity}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def newest(self) -> ModelOutput:
        if not self.entries:
            raise WarmupError("buffer is empty")
        return self.entries[-1]

    def push(self, output: ModelOutput) -> "Buffer":
        if self.entries:
            if output.t >= self.entries[-1].t:
                raise ContractError(
                    f"pushed t={output.t} not below newest t={self.entries[-1].t}"
                )
            if output.param != self.entries[-1].param:
                raise ContractError("buffer entries must share one parameterization")
        entries = (self.entries + (output,))[-self.capacity :]
        return Buffer(entries=entries, capacity=self.capacity)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States along the grid; states[i] is the corrected state at times[i]."""

    times: np.ndarray
    states: np.ndarray
    pred_states: np.ndarray
    nfe_used: int
    seed: int | None = None

    def __post_init__(self):
        if len(self.states) != len(self.times) or len(self.pred_states) != len(self.times):
            raise ContractError("one state per grid time expected")

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]

    def records(self):
        for i, t in enumerate(self.times):
            yield {
                "i": i,
                "t": float(t),
                "x": np.asarray(self.pred_states[i]).tolist(),
                "x_corr": np.asarray(self.states[i]).tolist(),
            }


def exp_integrals(h: float, kmax: int) -> np.ndarray:
    """m_k = integral_0^h e^(u-h) u^k du, k = 0..kmax; requires h > 0."""
    if not (h > 0.0) or not np.isfinite(h):
        raise ContractError(f"h must be positive and finite, got {h}")
    if kmax < 0:
        raise ContractError(f"kmax must be >= 0, got {kmax}")
    return _kernels.backend.exp_integrals(float(h), int(kmax))


def _node_lambdas(grid: TimeGrid, ts) -> np.ndarray:
    sched = grid.schedule
    return np.array([sched.alpha_sigma_lambda(t)[2] for t in ts])


def _combine(x_prev, weights, values, grid: TimeGrid, i: int, param: str):
    """Apply one variation-of-constants update arriving at grid index i."""
    sched = grid.schedule
    a_t, s_t, _ = sched.alpha_sigma_lambda(grid.times[i])
    a_s, s_s, _ = sched.alpha_sigma_lambda(grid.times[i - 1])
    acc = weights[0] * values[0]
    for w, v in zip(weights[1:], values[1:]):
        acc = acc + w * v
    if param == "data_pred":
        return (s_t / s_s) * x_prev + a_t * acc
    return (a_t / a_s) * x_prev - s_t * acc


def _check_arrival(grid: TimeGrid, i: int):
    if not 1 <= i <= grid.nfe:
        raise RangeError(f"step index {i} outside 1..{grid.nfe}")


def predictor_step(
    x_prev: np.ndarray,
    buffer: Buffer,
    grid: TimeGrid,
    i: int,
    config: SamplerConfig,
    order: int | None = None,
) -> np.ndarray:
    """Advance the state from t_{i-1} to t_i using buffered outputs only."""
    _check_arrival(grid, i)
    p = config.order if order is None else order
    if len(buffer) < p:
        raise WarmupError(f"order {p} predictor needs {p} buffered outputs, have {len(buffer)}")
    nodes = buffer.entries[-p:][::-1]  # newest first
    if abs(nodes[0].t - grid.times[i - 1]) > 1e-12:
        raise ContractError(
            f"newest buffered output at t={nodes[0].t}, step departs t={grid.times[i - 1]}"
        )
    lam_s = grid.lambdas[i - 1]
    offsets = _node_lambdas(grid, [n.t for n in nodes]) - lam_s
    offsets[0] = 0.0
    h = grid.h(i)
    w = _kernels.backend.integ_weights(offsets, h, config.param == "noise_pred")
    return _combine(x_prev, w, [n.value for n in nodes], grid, i, config.param)


def corrector_step(
    x_prev: np.ndarray,
    new_output: ModelOutput,
    buffer: Buffer,
    grid: TimeGrid,
    i: int,
    config: SamplerConfig,
    order: int | None = None,
) -> np.ndarray:
    """Recompute the step to t_i with the node set extended by new_output at t_i."""
    _check_arrival(grid, i)
    p = config.order if order is None else order
    if len(buffer) < p:
        raise WarmupError(f"order {p} corrector needs {p} buffered outputs, have {len(buffer)}")
    if new_output.param != config.param:
        raise ContractError(
            f"corrector fed {new_output.param} output, working parameterization is {config.param}"
        )
    if abs(new_output.t - grid.times[i]) > 1e-12:
        raise ContractError(f"corrector output at t={new_output.t}, step arrives at t={grid.times[i]}")
    nodes = (new_output,) + buffer.entries[-p:][::-1]
    ts = [n.t for n in nodes]
    if len(set(ts)) != len(ts):
        raise ContractError(f"duplicated interpolation node time in {ts}")
    lam_s = grid.lambdas[i - 1]
    offsets = _node_lambdas(grid, ts) - lam_s
    offsets[1] = 0.0
    h = grid.h(i)
    w = _kernels.backend.integ_weights(offsets, h, config.param == "noise_pred")
    return _combine(x_prev, w, [n.value for n in nodes], grid, i, config.param)


def step_coefficients(
    grid: TimeGrid, i: int, config: SamplerConfig, corrector: bool = False, order: int | None = None
):
    """The update at index i as x_new = A x_prev + sum_j B_j v_j (nodes newest first).

    Exposes the raw multistep coefficients so their scaling against the step
    size h can be checked directly.
    """
    _check_arrival(grid, i)
    p = config.order if order is None else order
    sched = grid.schedule
    idx = list(range(i - 1, max(i - 1 - p, -1), -1))
    if len(idx) < p:
        raise WarmupError(f"grid too short for order {p} at step {i}")
    ts = [grid.times[j] for j in idx]
    if corrector:
        ts = [grid.times[i]] + ts
    lam_s = grid.lambdas[i - 1]
    offsets = _node_lambdas(grid, ts) - lam_s
    h = grid.h(i)
    w = _kernels.backend.integ_weights(offsets, h, config.param == "noise_pred")
    a_t, s_t, _ = sched.alpha_sigma_lambda(grid.times[i])
    a_s, s_s, _ = sched.alpha_sigma_lambda(grid.times[i - 1])
    if config.param == "data_pred":
        return s_t / s_s, a_t * w
    return a_t / a_s, -s_t * w


def _stamp(output: ModelOutput, t: float) -> ModelOutput:
    return ModelOutput(param=output.param, value=output.value, t=t)


def sample(
    model: DenoisingModel,
    x_init: np.ndarray,
    grid: TimeGrid,
    config: SamplerConfig,
    rho_schedule=None,
    cond: int | None = None,
    seed: int | None = None,
) -> Trajectory:
    """Run the sampler over the grid; rho_schedule enables buffer compensation.

    `rho_schedule` may be a CompensationSchedule or a plain length-M vector
    (then the default history length K applies).  Ratios for warm-up steps
    must be 1.0; compensation starts at step K.
    """
    from .compensation import CompensationSchedule, lagrange_compensate, swap_buffer

    sched = grid.schedule
    times = grid.times
    M = grid.nfe
    K = DEFAULT_K
    rho = None
    if rho_schedule is not None:
        if isinstance(rho_schedule, CompensationSchedule):
            if rho_schedule.nfe != M:
                raise ConfigError(
                    f"compensation schedule for nfe={rho_schedule.nfe}, grid has nfe={M}"
                )
            K = rho_schedule.K
            rho = np.asarray(rho_schedule.rho, dtype=np.float64)
        else:
            rho = np.asarray(rho_schedule, dtype=np.float64)
        if rho.shape != (M,):
            raise ConfigError(f"rho schedule must have length {M}, got shape {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise ConfigError("rho schedule must be finite")
        if np.any(rho[:K] != 1.0):
            raise ConfigError(f"first {K} compensation ratios must be 1.0")

    x = np.asarray(x_init, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ContractError(f"x_init has dim {x.shape[-1]}, model expects {model.dim}")
    capacity = max(config.order, K + 1)
    buf = Buffer(entries=(), capacity=capacity)
    nfe = 0

    out = model.evaluate(x, times[0], cond)
    nfe += 1
    buf = buf.push(_stamp(convert(out, x, sched, config.param), times[0]))

    states = [x]
    preds = [x]
    for i in range(M):
        if rho is not None and i >= K:
            est = lagrange_compensate(buf, float(rho[i]), K)
            buf = swap_buffer(buf, est)
        p_eff = min(config.order, len(buf))
        x_pred = predictor_step(states[-1], buf, grid, i + 1, config, order=p_eff)
        if i + 1 < M:
            out = model.evaluate(x_pred, times[i + 1], cond)
            nfe += 1
            out_w = _stamp(convert(out, x_pred, sched, config.param), times[i + 1])
            if config.use_corrector:
                x_corr = corrector_step(states[-1], out_w, buf, grid, i + 1, config, order=p_eff)
            else:
                x_corr = x_pred
            buf = buf.push(out_w)
        else:
            x_corr = x_pred
        preds.append(x_pred)
        states.append(x_corr)
    return Trajectory(
        times=times.copy(),
        states=np.stack(states),
        pred_states=np.stack(preds),
        nfe_used=nfe,
        seed=seed,
    )


def trajectory_to_jsonl(traj: Trajectory, config: dict | None = None) -> str:
    """Serialize a trajectory, one step per line, preceded by a header record."""
    header = {"version": 1, "kind": "trajectory", "nfe_used": traj.nfe_used, "seed": traj.seed}
    if config is not None:
        header["config"] = config
    lines = [json.dumps(header)]
    lines.extend(json.dumps(rec) for rec in traj.records())
    return "\n".join(lines) + "\n"
