import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp

from dcsolver import (
    ConfigError,
    ContractError,
    GaussianMixtureModel,
    GuidedModel,
    ModelOutput,
    PARAMS,
    VPLinearSchedule,
    cfg_combine,
    convert,
    gaussian_ode_solution,
)

SCHED = VPLinearSchedule()

# frozen before implementing: exact flow map for N(0.7, 0.5^2), x(1.0) = 1.3,
# integrated to t = 1e-3; cross-checked against an RK45 run at rtol 1e-12
GAUSSIAN_ENDPOINT = 1.3477787617815167


def test_model_output_validation():
    with pytest.raises(ContractError):
        ModelOutput(param="score", value=np.zeros(2), t=0.5)
    out = ModelOutput(param="data_pred", value=[1, 2], t=0.5)
    assert out.value.dtype == np.float64


finite = st.floats(-5.0, 5.0, allow_nan=False)


@given(x=finite, val=finite, t=st.floats(0.01, 0.99))
@settings(max_examples=200, deadline=None)
def test_conversion_round_trips(x, val, t):
    x = np.array([x])
    for src in PARAMS:
        out = ModelOutput(param=src, value=np.array([val]), t=t)
        for mid in PARAMS:
            back = convert(convert(out, x, SCHED, mid), x, SCHED, src)
            np.testing.assert_allclose(back.value, out.value, atol=1e-12, rtol=1e-12)


def test_conversion_identities_consistent():
    # all three parameterizations of one state agree after pairwise conversion
    t = 0.37
    x = np.array([0.8, -0.3])
    alpha, sigma, _ = SCHED.alpha_sigma_lambda(t)
    x0 = np.array([0.25, 0.1])
    eps = (x - alpha * x0) / sigma
    v = alpha * eps - sigma * x0
    out_x0 = ModelOutput("data_pred", x0, t)
    np.testing.assert_allclose(convert(out_x0, x, SCHED, "noise_pred").value, eps, atol=1e-12)
    np.testing.assert_allclose(convert(out_x0, x, SCHED, "v_pred").value, v, atol=1e-12)
    out_v = ModelOutput("v_pred", v, t)
    np.testing.assert_allclose(convert(out_v, x, SCHED, "data_pred").value, x0, atol=1e-12)
    np.testing.assert_allclose(convert(out_v, x, SCHED, "noise_pred").value, eps, atol=1e-12)


def test_convert_rejects_unknown_target():
    out = ModelOutput("data_pred", np.zeros(1), 0.5)
    with pytest.raises(ContractError):
        convert(out, np.zeros(1), SCHED, "score")


def test_cfg_combine():
    a = ModelOutput("noise_pred", np.array([1.0]), 0.5)
    b = ModelOutput("noise_pred", np.array([0.5]), 0.5)
    assert cfg_combine(a, b, 7.5).value[0] == pytest.approx(7.5 * 1.0 - 6.5 * 0.5)
    assert cfg_combine(a, b, 1.0).value[0] == pytest.approx(1.0)
    with pytest.raises(ContractError):
        cfg_combine(a, ModelOutput("noise_pred", np.array([0.5]), 0.4), 2.0)
    with pytest.raises(ContractError):
        cfg_combine(ModelOutput("data_pred", np.array([1.0]), 0.5), b, 2.0)


def test_gmm_validation():
    with pytest.raises(ContractError):
        GaussianMixtureModel(SCHED, np.zeros((2, 1)), np.array([0.5, 0.6]), 0.5)
    with pytest.raises(ContractError):
        GaussianMixtureModel(SCHED, np.zeros((2, 1)), np.array([1.0]), 0.5)
    with pytest.raises(ContractError):
        GaussianMixtureModel(SCHED, np.zeros((2, 1)), np.array([0.5, 0.5]), 0.0)


def test_gmm_noise_prediction_matches_quadrature():
    # independent oracle: eps* = -sigma * d/dx log q_t(x) with q_t integrated
    # numerically over the data variable
    model = GaussianMixtureModel(
        SCHED, means=np.array([[-1.0], [1.5]]), weights=np.array([0.4, 0.6]), scale=0.3
    )
    t = 0.42
    alpha, sigma, _ = SCHED.alpha_sigma_lambda(t)

    def q_t(x):
        def integrand(x0):
            prior = 0.4 * np.exp(-0.5 * ((x0 + 1.0) / 0.3) ** 2) + 0.6 * np.exp(
                -0.5 * ((x0 - 1.5) / 0.3) ** 2
            )
            return prior * np.exp(-0.5 * ((x - alpha * x0) / sigma) ** 2)

        val, _ = quad(integrand, -4.0, 5.0, limit=200)
        return val

    for x in (-0.8, 0.1, 0.9):
        eps_fd = -sigma * (np.log(q_t(x + 1e-6)) - np.log(q_t(x - 1e-6))) / 2e-6
        out = model.evaluate(np.array([x]), t)
        assert out.param == "noise_pred"
        assert out.value[0] == pytest.approx(eps_fd, abs=1e-7)


def test_gmm_batched_shapes():
    model = GaussianMixtureModel(
        SCHED, means=np.array([[0.0, 1.0], [1.0, -1.0]]), weights=np.array([0.5, 0.5]), scale=0.4
    )
    x = np.random.default_rng(0).standard_normal((3, 5, 2))
    out = model.evaluate(x, 0.5)
    assert out.value.shape == x.shape
    single = model.evaluate(x[1, 3], 0.5)
    np.testing.assert_array_equal(single.value, out.value[1, 3])
    with pytest.raises(ContractError):
        model.evaluate(np.zeros(3), 0.5)


def test_gaussian_ode_solution_frozen_endpoint():
    x = gaussian_ode_solution(SCHED, np.array([0.7]), 0.5, np.array([1.3]), 1.0, 1e-3)
    assert x[0] == pytest.approx(GAUSSIAN_ENDPOINT, rel=1e-13)


def test_gaussian_ode_solution_matches_rk45():
    # the sampling ODE dx/dt = f(t) x + g2(t)/(2 sigma) eps*(x, t) for the
    # single-Gaussian denoiser, integrated tightly with solve_ivp
    mu, ss = 0.7, 0.5
    model = GaussianMixtureModel(SCHED, np.array([[mu]]), np.array([1.0]), ss)
    beta0, beta1 = 0.1, 20.0

    def rhs(t, x):
        alpha, sigma, _ = SCHED.alpha_sigma_lambda(t)
        beta = beta0 + t * (beta1 - beta0)
        eps = model.evaluate(x, t).value
        return -0.5 * beta * x + 0.5 * beta / sigma * eps

    sol = solve_ivp(rhs, (1.0, 1e-3), [1.3], rtol=1e-11, atol=1e-13, dense_output=False)
    closed = gaussian_ode_solution(SCHED, np.array([mu]), ss, np.array([1.3]), 1.0, 1e-3)
    assert sol.y[0, -1] == pytest.approx(closed[0], abs=1e-9)


def test_gaussian_ode_solution_flow_property():
    # flow maps compose: 1.0 -> 0.3 -> 1e-3 equals 1.0 -> 1e-3
    mu = np.array([0.2, -0.4])
    x0 = np.array([1.1, 0.6])
    direct = gaussian_ode_solution(SCHED, mu, 0.7, x0, 1.0, 1e-3)
    mid = gaussian_ode_solution(SCHED, mu, 0.7, x0, 1.0, 0.3)
    chained = gaussian_ode_solution(SCHED, mu, 0.7, mid, 0.3, 1e-3)
    np.testing.assert_allclose(chained, direct, atol=1e-14)


def test_guided_model_reduces_to_cond_at_scale_one():
    cond = GaussianMixtureModel(SCHED, np.array([[1.0]]), np.array([1.0]), 0.3)
    uncond = GaussianMixtureModel(SCHED, np.array([[-1.0]]), np.array([1.0]), 0.5)
    guided = GuidedModel(cond, uncond, 1.0)
    x = np.array([0.4])
    np.testing.assert_allclose(
        guided.evaluate(x, 0.5).value, cond.evaluate(x, 0.5).value, atol=1e-15
    )


def test_guided_model_combination():
    cond = GaussianMixtureModel(SCHED, np.array([[1.0]]), np.array([1.0]), 0.3)
    uncond = GaussianMixtureModel(SCHED, np.array([[-1.0]]), np.array([1.0]), 0.5)
    guided = GuidedModel(cond, uncond, 3.0)
    x = np.array([0.4])
    expected = 3.0 * cond.evaluate(x, 0.5).value - 2.0 * uncond.evaluate(x, 0.5).value
    np.testing.assert_allclose(guided.evaluate(x, 0.5).value, expected, atol=1e-15)


def test_guided_model_needs_schedule():
    class Bare(GaussianMixtureModel):
        pass

    cond = Bare(SCHED, np.array([[1.0]]), np.array([1.0]), 0.3)
    del cond.schedule
    uncond = GaussianMixtureModel(SCHED, np.array([[-1.0]]), np.array([1.0]), 0.5)
    with pytest.raises(ConfigError):
        GuidedModel(cond, uncond, 2.0)
    with pytest.raises(ConfigError):
        GuidedModel(
            cond,
            GaussianMixtureModel(SCHED, np.array([[0.0, 0.0]]), np.array([1.0]), 0.5),
            2.0,
            schedule=SCHED,
        )
