import numpy as np
import pytest

from dcsolver import (
    CompensationSchedule,
    ConfigError,
    ContractError,
    EvalCell,
    GaussianMixtureModel,
    VPLinearSchedule,
    cpr_fit,
    gaussian_ode_solution,
    ground_truth,
    make_grid,
    mse_to_gt,
    order_slope,
    run_experiment,
    save_cpr,
    seeded_points,
)

SCHED = VPLinearSchedule()
MODEL_SPEC = {"kind": "gmm", "means": [[-1.0], [1.5]], "weights": [0.4, 0.6], "scale": 0.3}
# unimodal fixture for runner tests: no basin-boundary seeds, so errors
# shrink monotonically with NFE even at very coarse grids
RUNNER_SPEC = {"kind": "gmm", "means": [[0.7]], "weights": [1.0], "scale": 0.5}


def base_config(**eval_overrides):
    eval_cfg = {
        "orders": [2],
        "correctors": [True],
        # asymptotic regime: below NFE ~12 on uniform_t the signed truncation
        # terms still cancel and the error is not monotone in NFE
        "nfes": [12, 24],
        "cfgs": [1.0],
        "dc_modes": ["off"],
        "n_eval": 3,
        "gt_nfe": 200,
    }
    eval_cfg.update(eval_overrides)
    return {"model": dict(RUNNER_SPEC), "spacing": "uniform_t", "eval": eval_cfg}


def test_seeded_points_reproducible():
    a = seeded_points(3, [0, 1, 7])
    b = seeded_points(3, [0, 1, 7])
    np.testing.assert_array_equal(a, b)
    assert a.shape == (3, 3)
    assert not np.array_equal(a[0], a[1])


def test_ground_truth_contains_coarse_times_exactly():
    model = GaussianMixtureModel(SCHED, **{k: MODEL_SPEC[k] for k in ("means", "weights", "scale")})
    grid = make_grid(SCHED, 5, "uniform_t")
    x = seeded_points(1, [0, 1])
    gt = ground_truth(model, x, grid, gt_nfe=50)
    assert gt.shape == (6, 2, 1)
    np.testing.assert_array_equal(gt[0], x)
    with pytest.raises(ConfigError):
        ground_truth(model, x, grid, gt_nfe=4)


def test_ground_truth_accuracy_on_single_gaussian():
    model = GaussianMixtureModel(SCHED, np.array([[0.7]]), np.array([1.0]), 0.5)
    grid = make_grid(SCHED, 5, "uniform_t")
    x = np.array([[1.3]])
    gt = ground_truth(model, x, grid, gt_nfe=400)
    exact = gaussian_ode_solution(SCHED, np.array([0.7]), 0.5, x[0], 1.0, SCHED.t_end)
    assert abs(gt[-1, 0, 0] - exact[0]) < 5e-3


def test_mse_to_gt():
    assert mse_to_gt(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == pytest.approx(2.5)
    with pytest.raises(ContractError):
        mse_to_gt(np.zeros(2), np.zeros(3))


def test_order_slope():
    nfes = [8, 16, 32]
    errors = [1.0 / n**2 for n in nfes]
    assert order_slope(nfes, errors) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ContractError):
        order_slope([8], [0.1])
    with pytest.raises(ContractError):
        order_slope([8, 16], [0.1, 0.0])
    with pytest.raises(ContractError):
        order_slope([8, 16], [0.1])


def test_eval_cell_sampler_label():
    assert EvalCell(2, True, 8, 1.0, "off").sampler == "pc"
    assert EvalCell(2, False, 8, 1.0, "off").sampler == "p"


def test_run_experiment_deterministic_csv():
    config = base_config()
    r1 = run_experiment(config)
    r2 = run_experiment(config)
    assert r1.to_csv() == r2.to_csv()
    lines = r1.to_csv().strip().split("\n")
    assert lines[0] == "sampler,order,nfe,cfg,dc_mode,mse,slope,seconds"
    assert len(lines) == 3
    # timing off leaves the seconds column empty
    assert all(line.endswith(",") for line in lines[1:])
    # both NFE rows of the group share one slope, and errors shrink with NFE
    rows = r1.rows
    assert rows[0]["slope"] == rows[1]["slope"] is not None
    assert rows[0]["slope"] > 1.0
    assert rows[0]["nfe"] < rows[1]["nfe"]
    assert rows[0]["mse"] > rows[1]["mse"] > 0.0
    import json

    detail = json.loads(r1.to_json())
    assert detail["kind"] == "eval_report"
    assert len(detail["cells"]) == 2


def test_run_experiment_parallel_matches_serial():
    config = base_config()
    serial = run_experiment(config, jobs=1)
    parallel = run_experiment(config, jobs=2)
    assert serial.to_csv() == parallel.to_csv()


def test_run_experiment_searched_mode():
    config = base_config(nfes=[5], dc_modes=["off", "searched"])
    config["dc"] = {"K": 2, "n_datapoints": 3, "iterations": 8}
    report = run_experiment(config)
    by_mode = {row["dc_mode"]: row for row in report.rows}
    assert by_mode["off"]["rho"] is None
    assert len(by_mode["searched"]["rho"]) == 5
    assert by_mode["searched"]["rho"][:2] == [1.0, 1.0]
    assert by_mode["searched"]["mse"] <= by_mode["off"]["mse"] * 1.5


def test_run_experiment_cpr_mode(tmp_path):
    rho = lambda i, cfg, nfe: 1.0 + 0.002 * i
    scheds = [
        CompensationSchedule(sampler_order=2, use_corrector=True, K=2, nfe=nfe, cfg=cfg,
                             spacing="uniform_t",
                             rho=tuple(1.0 if i < 2 else rho(i, cfg, nfe) for i in range(nfe)))
        for cfg in (1.0, 2.0, 3.0)
        for nfe in (4, 5, 6)
    ]
    path = tmp_path / "cpr.json"
    save_cpr(cpr_fit(scheds, degrees=(1, 1, 2)), path)
    config = base_config(nfes=[5], dc_modes=["cpr"], cpr_file=str(path))
    report = run_experiment(config)
    assert len(report.rows[0]["rho"]) == 5
    assert report.rows[0]["rho"][2] == pytest.approx(1.004, abs=1e-6)

    missing = base_config(nfes=[5], dc_modes=["cpr"])
    with pytest.raises(ConfigError, match="cpr_file"):
        run_experiment(missing)
    with pytest.raises(ConfigError, match="unknown dc_mode"):
        run_experiment(base_config(dc_modes=["on"]))


def test_run_experiment_timing_column():
    config = base_config(nfes=[4], timing=True)
    report = run_experiment(config)
    assert report.rows[0]["seconds"] > 0.0
    line = report.to_csv().strip().split("\n")[1]
    assert not line.endswith(",")
