"""Command-line entry point.

Every command takes --config (JSON) plus dotted-path overrides such as
`--dc.lr 0.1`; DC_SOLVER_JOBS overrides --jobs when set.  Outputs embed the
resolved config and a format version so runs can be reproduced from their
artifacts alone.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .compensation import SearchConfig, load_schedule, save_schedule, search_all
from .config import (
    apply_overrides,
    build_model,
    build_schedule,
    load_config,
    resolve_spacing,
)
from .cpr import DEFAULT_DEGREES, cpr_fit, load_cpr, cpr_predict, save_cpr
from .errors import DCSolverError
from .evaluation import (
    EVAL_SEED_BASE,
    SEARCH_SEED_BASE,
    ground_truth,
    mse_to_gt,
    order_slope,
    run_experiment,
    seeded_points,
)
from .model import gaussian_ode_solution
from .schedule import make_grid
from .solver import SamplerConfig, sample, trajectory_to_jsonl
from .compensation import CompensationSchedule


def _parse_dotted(tokens: list[str]) -> list[tuple[str, str]]:
    overrides = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or "." not in token:
            raise SystemExit(f"unrecognized argument: {token}")
        if "=" in token:
            path, value = token[2:].split("=", 1)
            overrides.append((path, value))
            i += 1
            continue
        if i + 1 >= len(tokens):
            raise SystemExit(f"override {token} is missing a value")
        overrides.append((token[2:], tokens[i + 1]))
        i += 2
    return overrides


def _load(args) -> dict:
    config = load_config(args.config)
    return apply_overrides(config, args.overrides)


def _jobs(args) -> int:
    env = os.environ.get("DC_SOLVER_JOBS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise SystemExit(f"DC_SOLVER_JOBS must be an integer, got {env!r}")
    return max(1, args.jobs)


def _sampler_config(config: dict) -> SamplerConfig:
    section = config.get("sampler", {})
    return SamplerConfig(
        order=int(section.get("order", 2)),
        use_corrector=bool(section.get("use_corrector", True)),
        param=section.get("param", "data_pred"),
    )


def _search_config(config: dict) -> SearchConfig:
    section = config.get("dc", {})
    return SearchConfig(
        K=int(section.get("K", 2)),
        n_datapoints=int(section.get("n_datapoints", 10)),
        iterations=int(section.get("iterations", 40)),
        lr=float(section.get("lr", 0.1)),
        optimizer=section.get("optimizer", "adam_fd"),
        box=tuple(section.get("box", (0.0, 2.0))),
        fd_eps=float(section.get("fd_eps", 1e-3)),
    )


def cmd_search(args) -> int:
    config = _load(args)
    sample_cfg = config.get("sample", {})
    nfe = int(sample_cfg.get("nfe", 10))
    cfg_scale = float(sample_cfg.get("cfg", 1.0))
    spacing = resolve_spacing(config)
    schedule = build_schedule(config.get("schedule"))
    grid = make_grid(schedule, nfe, spacing)
    model = build_model(config["model"], schedule, cfg_scale)
    scfg = _sampler_config(config)
    search = _search_config(config)
    gt_nfe = int(config.get("eval", {}).get("gt_nfe", 200))
    x_init = seeded_points(model.dim, range(SEARCH_SEED_BASE, SEARCH_SEED_BASE + search.n_datapoints))
    gt = ground_truth(model, x_init, grid, gt_nfe, spacing)
    comp, report = search_all(
        model, x_init, grid, scfg, search, gt, cfg_scale=cfg_scale, spacing=spacing
    )
    save_schedule(comp, args.out, config=config)
    for step in report.steps:
        print(
            f"step {step.i}: rho*={step.rho_star:.6f} "
            f"loss {step.loss_at_one:.3e} -> {step.loss_at_star:.3e}"
        )
    print(f"endpoint loss {report.endpoint_loss:.6e}; wrote {args.out}")
    return 0


def cmd_sample(args) -> int:
    config = _load(args)
    sample_cfg = config.get("sample", {})
    nfe = int(sample_cfg.get("nfe", 10))
    seed = sample_cfg.get("seed", 0)
    cfg_scale = float(sample_cfg.get("cfg", 1.0))
    cond = sample_cfg.get("cond")
    spacing = resolve_spacing(config)
    schedule = build_schedule(config.get("schedule"))
    grid = make_grid(schedule, nfe, spacing)
    model = build_model(config["model"], schedule, cfg_scale)
    scfg = _sampler_config(config)
    rho = None
    if args.schedule and args.cpr:
        raise SystemExit("pass --schedule or --cpr, not both")
    if args.schedule:
        rho = load_schedule(args.schedule)
    elif args.cpr:
        coeffs = load_cpr(args.cpr)
        search = _search_config(config)
        vec = cpr_predict(coeffs, nfe, cfg_scale, K=search.K, box=search.box)
        rho = CompensationSchedule(
            sampler_order=scfg.order,
            use_corrector=scfg.use_corrector,
            K=search.K,
            nfe=nfe,
            cfg=cfg_scale,
            spacing=spacing,
            rho=tuple(float(r) for r in vec),
        )
    x_init = seeded_points(model.dim, [seed])[0]
    traj = sample(model, x_init, grid, scfg, rho_schedule=rho, cond=cond, seed=int(seed))
    if args.out:
        Path(args.out).write_text(trajectory_to_jsonl(traj, config=config))
    print(json.dumps({"endpoint": traj.endpoint.tolist(), "nfe_used": traj.nfe_used}))
    return 0


def cmd_fit_cpr(args) -> int:
    config = _load(args) if args.config else {}
    degrees = config.get("cpr", {}).get("degrees", DEFAULT_DEGREES)
    schedules = [load_schedule(path) for path in args.schedules]
    coeffs = cpr_fit(schedules, degrees=tuple(degrees))
    save_cpr(coeffs, args.out, config=config or None)
    print(f"fitted degrees {tuple(degrees)} from {len(schedules)} schedules; wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    config = _load(args)
    report = run_experiment(config, jobs=_jobs(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval.csv").write_text(report.to_csv())
    (out_dir / "eval.json").write_text(report.to_json())
    print(report.to_csv(), end="")
    return 0


def cmd_order_check(args) -> int:
    config = _load(args)
    spacing = resolve_spacing(config)
    schedule = build_schedule(config.get("schedule"))
    eval_cfg = config.get("eval", {})
    nfes = [int(n) for n in eval_cfg.get("nfes", (8, 16, 32, 64))]
    orders = [int(o) for o in eval_cfg.get("orders", (1, 2, 3))]
    model_spec = config["model"]
    model = build_model(model_spec, schedule, 1.0)
    n_eval = int(eval_cfg.get("n_eval", 8))
    seed_base = int(eval_cfg.get("eval_seed_base", EVAL_SEED_BASE))
    x_init = seeded_points(model.dim, range(seed_base, seed_base + n_eval))
    single_gaussian = (
        model_spec.get("kind", "gmm") == "gmm"
        and len(model_spec["means"]) == 1
        and model_spec.get("uncond") is None
    )
    failures = 0
    for order in orders:
        scfg = SamplerConfig(order=order, use_corrector=bool(
            config.get("sampler", {}).get("use_corrector", True)))
        errors = []
        for nfe in nfes:
            grid = make_grid(schedule, nfe, spacing)
            if single_gaussian:
                gt_end = gaussian_ode_solution(
                    schedule,
                    np.asarray(model_spec["means"][0], dtype=np.float64),
                    float(model_spec["scale"]),
                    x_init,
                    grid.times[0],
                    grid.times[-1],
                )
            else:
                gt_end = ground_truth(
                    model, x_init, grid, int(eval_cfg.get("gt_nfe", 500)), spacing
                )[-1]
            traj = sample(model, x_init, grid, scfg)
            errors.append(np.sqrt(mse_to_gt(traj.endpoint, gt_end)))
        slope = order_slope(nfes, errors)
        line = f"order {order}: slope {slope:.3f} errors " + " ".join(f"{e:.3e}" for e in errors)
        print(line)
    return failures


def cmd_serve_check(args) -> int:
    from .remote import serve_check

    try:
        result = serve_check(args.endpoint, dim=args.dim, t=args.t)
    except DCSolverError as e:
        print(f"serve-check failed: {e}", file=sys.stderr)
        return 1
    print(json.dumps(result))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dcsolver", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="search compensation ratios against ground truth")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("sample", help="run the sampler for one seed")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="trajectory JSONL path")
    p.add_argument("--schedule", default=None, help="compensation schedule JSON")
    p.add_argument("--cpr", default=None, help="regression coefficients JSON")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("fit-cpr", help="fit ratio regression from searched schedules")
    p.add_argument("--config", default=None)
    p.add_argument("--schedules", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fit_cpr)

    p = sub.add_parser("eval", help="run the experiment grid; writes CSV and JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("order-check", help="empirical convergence-order table")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_order_check)

    p = sub.add_parser("serve-check", help="ping a remote denoiser endpoint")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--t", type=float, default=0.5)
    p.set_defaults(fn=cmd_serve_check)

    args, unknown = parser.parse_known_args(argv)
    args.overrides = _parse_dotted(unknown) if hasattr(args, "config") else []
    try:
        return args.fn(args)
    except DCSolverError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
