"""Dynamic compensation of the model-output buffer and the per-step ratio search.

Multistep predictors consume buffered outputs that were evaluated at earlier,
uncorrected states, which misaligns them with the trajectory actually being
integrated.  Compensation re-estimates the newest buffered output by evaluating
the Lagrange polynomial through the K+1 newest buffered outputs (in raw t) at

    t' = rho * t_i + (1 - rho) * t_{i-1}

and swaps that estimate into the newest slot before the step is taken.
rho = 1 reproduces the buffered output exactly, so a ratio schedule of ones is
the identity.  The search picks rho per step by minimizing the mean squared
distance between the rolled-out next state and a ground-truth trajectory; the
returned ratio is the best candidate ever evaluated, rho = 1 included, so the
searched loss can never exceed the baseline loss.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractError, SearchError, WarmupError
from .model import DenoisingModel, ModelOutput, convert
from .schedule import TimeGrid
from .solver import Buffer, SamplerConfig, corrector_step, predictor_step

SCHEDULE_VERSION = 1

OPTIMIZERS = ("adam_fd", "golden_section", "grid_refine")


@dataclass(frozen=True)
class SearchConfig:
    K: int = 2
    n_datapoints: int = 10
    iterations: int = 40
    lr: float = 0.1
    optimizer: str = "adam_fd"
    box: tuple[float, float] = (0.0, 2.0)
    fd_eps: float = 1e-3

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.n_datapoints < 1 or self.iterations < 1:
            raise ConfigError("n_datapoints and iterations must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not (self.box[0] <= 1.0 <= self.box[1]):
            raise ConfigError(f"search box {self.box} must contain 1.0")
        if self.lr <= 0.0 or self.fd_eps <= 0.0:
            raise ConfigError("lr and fd_eps must be positive")


@dataclass(frozen=True)
class CompensationSchedule:
    sampler_order: int
    use_corrector: bool
    K: int
    nfe: int
    cfg: float
    spacing: str
    rho: tuple[float, ...]
    version: int = SCHEDULE_VERSION

    def __post_init__(self):
        if len(self.rho) != self.nfe:
            raise ConfigError(f"need {self.nfe} ratios, got {len(self.rho)}")
        if not all(math.isfinite(r) for r in self.rho):
            raise ConfigError("ratios must be finite")
        if any(r != 1.0 for r in self.rho[: self.K]):
            raise ConfigError(f"ratios below step K={self.K} must be 1.0")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "kind": "compensation_schedule",
            "sampler_order": self.sampler_order,
            "use_corrector": self.use_corrector,
            "K": self.K,
            "nfe": self.nfe,
            "cfg": self.cfg,
            "spacing": self.spacing,
            "rho": list(self.rho),
        }


def save_schedule(schedule: CompensationSchedule, path, config: dict | None = None):
    payload = schedule.to_dict()
    if config is not None:
        payload["config"] = config
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def load_schedule(path) -> CompensationSchedule:
    with open(path) as f:
        payload = json.load(f)
    version = payload.get("version")
    if version != SCHEDULE_VERSION:
        raise ConfigError(f"schedule format version {version}, expected {SCHEDULE_VERSION}")
    try:
        return CompensationSchedule(
            sampler_order=payload["sampler_order"],
            use_corrector=payload["use_corrector"],
            K=payload["K"],
            nfe=payload["nfe"],
            cfg=payload["cfg"],
            spacing=payload["spacing"],
            rho=tuple(float(r) for r in payload["rho"]),
        )
    except KeyError as e:
        raise ConfigError(f"schedule file missing key {e}") from e


def lagrange_compensate(buffer: Buffer, rho: float, K: int) -> ModelOutput:
    """Estimate the newest buffered output at t' = rho t_i + (1-rho) t_{i-1}.

    Interpolates the K+1 newest buffered outputs in raw t.  rho = 1 returns
    the newest output bit-for-bit (interpolation reproduces its node).
    """
    if not math.isfinite(rho):
        raise ContractError(f"rho must be finite, got {rho}")
    if K < 1:
        raise ContractError(f"K must be >= 1, got {K}")
    if len(buffer) < K + 1:
        raise WarmupError(f"compensation needs {K + 1} buffered outputs, have {len(buffer)}")
    nodes = buffer.entries[-(K + 1) :]
    ts = np.array([n.t for n in nodes])
    t_prime = rho * ts[-1] + (1.0 - rho) * ts[-2]
    w = _kernels.backend.lagrange_weights(ts, t_prime)
    acc = w[0] * nodes[0].value
    for wj, node in zip(w[1:], nodes[1:]):
        acc = acc + wj * node.value
    return ModelOutput(param=nodes[-1].param, value=acc, t=float(t_prime))


def swap_buffer(buffer: Buffer, compensated: ModelOutput) -> Buffer:
    """Replace the newest entry's value; node times and the rest stay put."""
    if len(buffer) == 0:
        raise WarmupError("cannot swap into an empty buffer")
    newest = buffer.entries[-1]
    if compensated.param != newest.param:
        raise ContractError("compensated output must keep the buffer's parameterization")
    replaced = ModelOutput(param=newest.param, value=compensated.value, t=newest.t)
    return Buffer(entries=buffer.entries[:-1] + (replaced,), capacity=buffer.capacity)


@dataclass(frozen=True)
class StepSearch:
    """Outcome of the ratio search at one step."""

    i: int
    rho_star: float
    loss_at_one: float
    loss_at_star: float
    n_rollouts: int
    buffer: Buffer


@dataclass(frozen=True)
class SearchReport:
    steps: tuple[StepSearch, ...]
    endpoint_loss: float

    def to_dict(self) -> dict:
        return {
            "endpoint_loss": self.endpoint_loss,
            "steps": [
                {
                    "i": s.i,
                    "rho_star": s.rho_star,
                    "loss_at_one": s.loss_at_one,
                    "loss_at_star": s.loss_at_star,
                    "n_rollouts": s.n_rollouts,
                }
                for s in self.steps
            ],
        }


def _rollout(model, x, buffer, grid, i, config, rho, K, gt_next, cond):
    """Swap with the given rho, take one full step, return (loss, state, output, buffer)."""
    est = lagrange_compensate(buffer, rho, K)
    buf = swap_buffer(buffer, est)
    p_eff = min(config.order, len(buf))
    x_pred = predictor_step(x, buf, grid, i + 1, config, order=p_eff)
    out_w = None
    if i + 1 < grid.nfe:
        out = model.evaluate(x_pred, grid.times[i + 1], cond)
        out_w = convert(out, x_pred, grid.schedule, config.param)
        out_w = ModelOutput(param=out_w.param, value=out_w.value, t=float(grid.times[i + 1]))
        if config.use_corrector:
            x_next = corrector_step(x, out_w, buf, grid, i + 1, config, order=p_eff)
        else:
            x_next = x_pred
    else:
        x_next = x_pred
    loss = float(np.mean((x_next - gt_next) ** 2))
    return loss, x_next, out_w, buf


def search_step(
    model: DenoisingModel,
    x: np.ndarray,
    buffer: Buffer,
    grid: TimeGrid,
    i: int,
    config: SamplerConfig,
    search: SearchConfig,
    gt_next: np.ndarray,
    cond: int | None = None,
) -> StepSearch:
    """Pick rho for the step leaving t_i by minimizing rollout MSE to gt_next.

    Every candidate rollout is recorded and the best one wins, with rho = 1.0
    always among the candidates, so loss(rho*) <= loss(1.0) holds exactly.
    """
    if i < search.K:
        raise ContractError(f"search starts at step K={search.K}, got i={i}")
    lo, hi = search.box
    evals = 0

    def f(rho_val: float) -> float:
        nonlocal evals
        evals += 1
        loss, _, _, _ = _rollout(model, x, buffer, grid, i, config, rho_val, search.K, gt_next, cond)
        return loss

    seen: dict[float, float] = {}

    def probe(rho_val: float) -> float:
        rho_val = min(max(float(rho_val), lo), hi)
        if rho_val not in seen:
            loss = f(rho_val)
            seen[rho_val] = loss if math.isfinite(loss) else math.inf
        return seen[rho_val]

    loss_one = probe(1.0)
    if not math.isfinite(loss_one):
        raise SearchError(f"loss at rho=1 is not finite at step {i}")

    if search.optimizer == "adam_fd":
        _adam_fd(probe, search)
    elif search.optimizer == "golden_section":
        _golden_section(probe, search)
    else:
        _grid_refine(probe, search)

    rho_star, loss_star = min(seen.items(), key=lambda kv: (kv[1], abs(kv[0] - 1.0)))
    _, _, _, buf_star = _rollout(model, x, buffer, grid, i, config, rho_star, search.K, gt_next, cond)
    return StepSearch(
        i=i,
        rho_star=rho_star,
        loss_at_one=loss_one,
        loss_at_star=loss_star,
        n_rollouts=evals + 1,
        buffer=buf_star,
    )


def _adam_fd(probe, search: SearchConfig):
    """Adam on a central finite-difference gradient of the rollout loss."""
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lo, hi = search.box
    d = search.fd_eps
    rho = 1.0
    m = v = 0.0
    for it in range(1, search.iterations + 1):
        up = min(rho + d, hi)
        dn = max(rho - d, lo)
        if up == dn:
            break
        g = (probe(up) - probe(dn)) / (up - dn)
        if not math.isfinite(g):
            break
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**it)
        v_hat = v / (1.0 - beta2**it)
        rho = min(max(rho - search.lr * m_hat / (math.sqrt(v_hat) + eps), lo), hi)
        probe(rho)


def _golden_section(probe, search: SearchConfig):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = search.box
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = probe(c), probe(d)
    for _ in range(search.iterations):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = probe(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = probe(d)


def _grid_refine(probe, search: SearchConfig):
    lo, hi = search.box
    points = max(5, search.iterations // 4)
    center, width = 1.0, hi - lo
    for _ in range(3):
        cand = np.linspace(max(lo, center - width / 2), min(hi, center + width / 2), points)
        losses = [probe(c) for c in cand]
        center = float(cand[int(np.argmin(losses))])
        width /= points / 2.0


def search_all(
    model: DenoisingModel,
    x_init: np.ndarray,
    grid: TimeGrid,
    config: SamplerConfig,
    search: SearchConfig,
    gt_states: np.ndarray,
    cond: int | None = None,
    cfg_scale: float = 1.0,
    spacing: str = "uniform_t",
) -> tuple[CompensationSchedule, SearchReport]:
    """Search ratios for every step i >= K over a batch of datapoints.

    `x_init` has shape (N, d) and `gt_states` (M+1, N, d): ground-truth states
    of the same datapoints at every grid time, which the rollout losses and the
    sequential buffer hand-off both consume.
    """
    sched = grid.schedule
    times = grid.times
    M = grid.nfe
    K = search.K
    x_init = np.asarray(x_init, dtype=np.float64)
    gt_states = np.asarray(gt_states, dtype=np.float64)
    if gt_states.shape != (M + 1,) + x_init.shape:
        raise ContractError(
            f"gt_states shape {gt_states.shape}, expected {(M + 1,) + x_init.shape}"
        )

    capacity = max(config.order, K + 1)
    buf = Buffer(entries=(), capacity=capacity)
    x = x_init
    out = model.evaluate(x, times[0], cond)
    out_w = convert(out, x, sched, config.param)
    buf = buf.push(ModelOutput(param=out_w.param, value=out_w.value, t=float(times[0])))

    rho = np.ones(M)
    steps: list[StepSearch] = []
    for i in range(M):
        if i >= K:
            res = search_step(model, x, buf, grid, i, config, search, gt_states[i + 1], cond)
            rho[i] = res.rho_star
            buf = res.buffer
            steps.append(res)
        p_eff = min(config.order, len(buf))
        x_pred = predictor_step(x, buf, grid, i + 1, config, order=p_eff)
        if i + 1 < M:
            out = model.evaluate(x_pred, times[i + 1], cond)
            out_w = convert(out, x_pred, sched, config.param)
            out_w = ModelOutput(param=out_w.param, value=out_w.value, t=float(times[i + 1]))
            if config.use_corrector:
                x = corrector_step(x, out_w, buf, grid, i + 1, config, order=p_eff)
            else:
                x = x_pred
            buf = buf.push(out_w)
        else:
            x = x_pred

    schedule = CompensationSchedule(
        sampler_order=config.order,
        use_corrector=config.use_corrector,
        K=K,
        nfe=M,
        cfg=float(cfg_scale),
        spacing=spacing,
        rho=tuple(float(r) for r in rho),
    )
    report = SearchReport(
        steps=tuple(steps),
        endpoint_loss=float(np.mean((x - gt_states[-1]) ** 2)),
    )
    return schedule, report
