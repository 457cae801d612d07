"""Ground-truth trajectories, error metrics, and the experiment runner.

Ground truth comes from a first-order run on a fine grid that contains every
coarse grid time, so reference states are available exactly where the coarse
sampler and the ratio search need them.  All randomness is drawn from numpy's
seeded default generator; the seed split is fixed: datapoint seeds [0, N) feed the
search, seeds [eval_seed_base, eval_seed_base + E) are held out for evaluation.
"""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .compensation import CompensationSchedule, SearchConfig, search_all
from .errors import ConfigError, ContractError
from .model import DenoisingModel
from .schedule import TimeGrid, make_grid
from .solver import SamplerConfig, sample
from .cpr import load_cpr, cpr_predict

RNG_NAME = "pcg64"  # numpy default_rng
SEARCH_SEED_BASE = 0
EVAL_SEED_BASE = 1000


def seeded_points(dim: int, seeds) -> np.ndarray:
    """Standard-normal initial states, one row per seed, reproducible by name."""
    return np.stack([np.random.default_rng(int(s)).standard_normal(dim) for s in seeds])


def ground_truth(
    model: DenoisingModel,
    x_init: np.ndarray,
    grid: TimeGrid,
    gt_nfe: int = 200,
    spacing: str = "uniform_t",
    cond: int | None = None,
) -> np.ndarray:
    """First-order reference states at the coarse grid times, shape (M+1, ..., d).

    The fine grid is the union of a uniform gt_nfe-point grid and the coarse
    times (duplicates within 1e-12 collapse onto the coarse value), so every
    coarse time appears exactly and no zero-length steps arise.
    """
    if gt_nfe < grid.nfe:
        raise ConfigError(f"gt_nfe {gt_nfe} below the coarse nfe {grid.nfe}")
    sched = grid.schedule
    fine = make_grid(sched, gt_nfe, spacing)
    times = list(grid.times)
    for t in fine.times:
        if np.min(np.abs(np.asarray(times) - t)) > 1e-12:
            times.append(float(t))
    times = np.array(sorted(times, reverse=True))
    union = TimeGrid(sched, times)
    cfg = SamplerConfig(order=1, use_corrector=False, param="data_pred")
    traj = sample(model, x_init, union, cfg, cond=cond)
    idx = [int(np.argmin(np.abs(union.times - t))) for t in grid.times]
    return traj.states[idx]


def mse_to_gt(endpoint: np.ndarray, gt_endpoint: np.ndarray) -> float:
    """Squared error averaged over dimensions and any batch axes."""
    endpoint = np.asarray(endpoint, dtype=np.float64)
    gt_endpoint = np.asarray(gt_endpoint, dtype=np.float64)
    if endpoint.shape != gt_endpoint.shape:
        raise ContractError(f"shape mismatch {endpoint.shape} vs {gt_endpoint.shape}")
    return float(np.mean((endpoint - gt_endpoint) ** 2))


def order_slope(nfes, errors) -> float:
    """Least-squares slope of log(error) against log(1/NFE); order ~ slope."""
    nfes = np.asarray(nfes, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if len(nfes) != len(errors) or len(nfes) < 2:
        raise ContractError("need at least two (nfe, error) pairs")
    if np.any(errors <= 0.0):
        raise ContractError("errors must be positive for a log-log fit")
    slope = np.polyfit(np.log(1.0 / nfes), np.log(errors), 1)[0]
    return float(slope)


@dataclass(frozen=True)
class EvalCell:
    order: int
    use_corrector: bool
    nfe: int
    cfg: float
    dc_mode: str

    @property
    def sampler(self) -> str:
        return "pc" if self.use_corrector else "p"

    def key(self):
        return (self.sampler, self.order, self.nfe, self.cfg, self.dc_mode)


@dataclass(frozen=True, eq=False)
class EvalReport:
    rows: list
    detail: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["sampler", "order", "nfe", "cfg", "dc_mode", "mse", "slope", "seconds"])
        for row in self.rows:
            writer.writerow(
                [
                    row["sampler"],
                    row["order"],
                    row["nfe"],
                    repr(float(row["cfg"])),
                    row["dc_mode"],
                    repr(float(row["mse"])),
                    "" if row["slope"] is None else repr(float(row["slope"])),
                    "" if row["seconds"] is None else repr(float(row["seconds"])),
                ]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.detail, indent=2, sort_keys=True) + "\n"


def _cell_cells(eval_cfg: dict) -> list[EvalCell]:
    cells = []
    for order in eval_cfg["orders"]:
        for corr in eval_cfg["correctors"]:
            for nfe in eval_cfg["nfes"]:
                for cfg in eval_cfg["cfgs"]:
                    for mode in eval_cfg["dc_modes"]:
                        cells.append(EvalCell(order, bool(corr), int(nfe), float(cfg), mode))
    return cells


def run_cell(config: dict, cell: EvalCell, build_model_fn) -> dict:
    """Evaluate one (sampler, nfe, cfg, dc_mode) cell on held-out seeds."""
    from .config import build_schedule  # local import keeps module layering simple

    eval_cfg = config["eval"]
    spacing = config.get("spacing", "uniform_t")
    t_begin = time.perf_counter()
    sched = build_schedule(config.get("schedule"))
    grid = make_grid(sched, cell.nfe, spacing)
    model = build_model_fn(config["model"], sched, cell.cfg)
    scfg = SamplerConfig(
        order=cell.order,
        use_corrector=cell.use_corrector,
        param=config.get("sampler", {}).get("param", "data_pred"),
    )
    gt_nfe = int(eval_cfg.get("gt_nfe", 200))
    n_eval = int(eval_cfg.get("n_eval", 50))
    seed_base = int(eval_cfg.get("eval_seed_base", EVAL_SEED_BASE))
    seeds = list(range(seed_base, seed_base + n_eval))
    x_eval = seeded_points(model.dim, seeds)
    gt = ground_truth(model, x_eval, grid, gt_nfe, spacing)

    rho = None
    if cell.dc_mode == "searched":
        dc_cfg = config.get("dc", {})
        search = SearchConfig(
            K=int(dc_cfg.get("K", 2)),
            n_datapoints=int(dc_cfg.get("n_datapoints", 10)),
            iterations=int(dc_cfg.get("iterations", 40)),
            lr=float(dc_cfg.get("lr", 0.1)),
            optimizer=dc_cfg.get("optimizer", "adam_fd"),
            box=tuple(dc_cfg.get("box", (0.0, 2.0))),
            fd_eps=float(dc_cfg.get("fd_eps", 1e-3)),
        )
        x_search = seeded_points(model.dim, range(SEARCH_SEED_BASE, SEARCH_SEED_BASE + search.n_datapoints))
        gt_search = ground_truth(model, x_search, grid, gt_nfe, spacing)
        rho, _ = search_all(
            model, x_search, grid, scfg, search, gt_search, cfg_scale=cell.cfg, spacing=spacing
        )
    elif cell.dc_mode == "cpr":
        cpr_file = eval_cfg.get("cpr_file")
        if not cpr_file:
            raise ConfigError("dc_mode 'cpr' needs eval.cpr_file")
        coeffs = load_cpr(cpr_file)
        K = int(config.get("dc", {}).get("K", 2))
        box = tuple(config.get("dc", {}).get("box", (0.0, 2.0)))
        vec = cpr_predict(coeffs, cell.nfe, cell.cfg, K=K, box=box)
        rho = CompensationSchedule(
            sampler_order=cell.order,
            use_corrector=cell.use_corrector,
            K=K,
            nfe=cell.nfe,
            cfg=cell.cfg,
            spacing=spacing,
            rho=tuple(float(r) for r in vec),
        )
    elif cell.dc_mode != "off":
        raise ConfigError(f"unknown dc_mode {cell.dc_mode!r}")

    traj = sample(model, x_eval, grid, scfg, rho_schedule=rho)
    seed_mse = np.mean((traj.endpoint - gt[-1]) ** 2, axis=-1)
    seconds = time.perf_counter() - t_begin
    return {
        "sampler": cell.sampler,
        "order": cell.order,
        "nfe": cell.nfe,
        "cfg": cell.cfg,
        "dc_mode": cell.dc_mode,
        "mse": float(np.mean(seed_mse)),
        "seed_mse": {str(s): float(v) for s, v in zip(seeds, seed_mse)},
        "rho": None if rho is None else [float(r) for r in rho.rho],
        "seconds": seconds if eval_cfg.get("timing", False) else None,
        "slope": None,
    }


def run_experiment(config: dict, jobs: int = 1, build_model_fn=None) -> EvalReport:
    """Run the full cell grid from a resolved config; see run_cell for one cell."""
    if build_model_fn is None:
        from .config import build_model as build_model_fn
    cells = _cell_cells(config["eval"])
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda c: run_cell(config, c, build_model_fn), cells))
    else:
        rows = [run_cell(config, c, build_model_fn) for c in cells]
    rows.sort(key=lambda r: (r["sampler"], r["order"], r["nfe"], r["cfg"], r["dc_mode"]))

    # slope per (sampler, order, cfg, dc_mode) group across its NFE values
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["sampler"], row["order"], row["cfg"], row["dc_mode"]), []).append(row)
    for members in groups.values():
        if len(members) >= 2 and all(m["mse"] > 0.0 for m in members):
            slope = order_slope([m["nfe"] for m in members], [np.sqrt(m["mse"]) for m in members])
            for m in members:
                m["slope"] = slope

    detail = {
        "version": 1,
        "kind": "eval_report",
        "rng": RNG_NAME,
        "config": config,
        "cells": rows,
    }
    return EvalReport(rows=rows, detail=detail)
