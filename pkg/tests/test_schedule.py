import math

import numpy as np
import pytest

from dcsolver import (
    ConfigError,
    NoiseSchedule,
    RangeError,
    SPACINGS,
    TimeGrid,
    VPCosineSchedule,
    VPLinearSchedule,
    make_grid,
)

# closed forms evaluated independently before the implementation existed:
# log alpha(t) = -t^2 (beta1 - beta0)/4 - t beta0/2 with beta0=0.1, beta1=20
ALPHA_1 = 0.0065715864949296154  # exp(-5.025)
SIGMA_1 = 0.9999784068923386
LAMBDA_1 = -5.024978406659204
ALPHA_T_END = 0.9999450265110976
SIGMA_T_END = 0.010485416335094895
LAMBDA_T_END = 4.557714932729898
ALPHA_HALF = 0.28118288079675235
SIGMA_HALF = 0.9596542020680362
LAMBDA_HALF = -1.2275677344107874


def test_vp_linear_frozen_values():
    sched = VPLinearSchedule()
    for t, expected in ((1.0, (ALPHA_1, SIGMA_1, LAMBDA_1)),
                        (1e-3, (ALPHA_T_END, SIGMA_T_END, LAMBDA_T_END)),
                        (0.5, (ALPHA_HALF, SIGMA_HALF, LAMBDA_HALF))):
        alpha, sigma, lam = sched.alpha_sigma_lambda(t)
        assert alpha == pytest.approx(expected[0], rel=1e-14)
        assert sigma == pytest.approx(expected[1], rel=1e-14)
        assert lam == pytest.approx(expected[2], rel=1e-13)


def test_alpha_sigma_identity():
    for sched in (VPLinearSchedule(), VPCosineSchedule()):
        ts = np.linspace(sched.t_end, sched.t_start, 257)
        alpha, sigma, lam = sched.alpha_sigma_lambda(ts)
        np.testing.assert_allclose(alpha**2 + sigma**2, 1.0, atol=1e-14)
        np.testing.assert_allclose(lam, np.log(alpha / sigma), atol=1e-12)
        # lambda strictly decreasing in t
        assert np.all(np.diff(lam) < 0.0)


def test_scalar_in_scalar_out():
    out = VPLinearSchedule().alpha_sigma_lambda(0.5)
    assert all(isinstance(v, float) for v in out)


def test_range_check():
    sched = VPLinearSchedule()
    with pytest.raises(RangeError):
        sched.alpha_sigma_lambda(1.5)
    with pytest.raises(RangeError):
        sched.alpha_sigma_lambda(1e-6)
    # fuzz within tolerance clips instead of raising
    alpha, _, _ = sched.alpha_sigma_lambda(1.0 + 1e-13)
    assert alpha == pytest.approx(ALPHA_1, rel=1e-12)


def test_t_of_lambda_inverts():
    sched = VPLinearSchedule()
    for t in (0.9, 0.5, 0.123, 0.002):
        lam = sched.lambda_of_t(t)
        assert sched.t_of_lambda(lam) == pytest.approx(t, abs=2e-12)
    with pytest.raises(RangeError):
        sched.t_of_lambda(LAMBDA_T_END + 1.0)


def test_bad_schedule_params():
    with pytest.raises(ConfigError):
        VPLinearSchedule(t_end=0.0)
    with pytest.raises(ConfigError):
        VPLinearSchedule(t_end=0.5, t_start=0.5)
    with pytest.raises(ConfigError):
        VPLinearSchedule(beta0=20.0, beta1=0.1)
    with pytest.raises(ConfigError):
        VPCosineSchedule(offset=0.0)
    # cosine alpha(1) = 0 exactly, lambda diverges
    with pytest.raises(ConfigError):
        VPCosineSchedule(t_start=1.0)


def test_make_grid_endpoints_and_monotonicity():
    sched = VPLinearSchedule()
    for spacing in SPACINGS:
        grid = make_grid(sched, 13, spacing)
        assert grid.nfe == 13
        assert grid.times[0] == sched.t_start
        assert grid.times[-1] == sched.t_end
        assert np.all(np.diff(grid.times) < 0.0)
        assert np.all(np.diff(grid.lambdas) > 0.0)
        for i in range(1, grid.nfe + 1):
            assert grid.h(i) > 0.0


def test_uniform_logsnr_spacing_is_uniform_in_lambda():
    grid = make_grid(VPLinearSchedule(), 10, "uniform_logsnr")
    np.testing.assert_allclose(np.diff(grid.lambdas), grid.h(1), rtol=1e-6)


def test_quadratic_spacing_is_uniform_in_sqrt_t():
    grid = make_grid(VPLinearSchedule(), 10, "quadratic_t")
    steps = np.diff(np.sqrt(grid.times))
    np.testing.assert_allclose(steps, steps[0], rtol=1e-9)


def test_make_grid_rejects_bad_args():
    sched = VPLinearSchedule()
    with pytest.raises(ConfigError):
        make_grid(sched, 0)
    with pytest.raises(ConfigError):
        make_grid(sched, 8, "geometric")


def test_time_grid_validation():
    sched = VPLinearSchedule()
    with pytest.raises(ConfigError):
        TimeGrid(sched, np.array([0.5]))
    with pytest.raises(ConfigError):
        TimeGrid(sched, np.array([0.5, 0.5]))
    with pytest.raises(ConfigError):
        TimeGrid(sched, np.array([0.2, 0.9]))
    grid = TimeGrid(sched, np.array([0.9, 0.2]))
    assert grid.nfe == 1
    with pytest.raises(RangeError):
        grid.h(0)
    with pytest.raises(RangeError):
        grid.h(2)


def test_base_schedule_is_abstract():
    with pytest.raises(NotImplementedError):
        NoiseSchedule().alpha_sigma_lambda(0.5)
