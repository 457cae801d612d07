"""Shared tests for the pure-numpy and compiled kernel backends."""
import numpy as np
import pytest
from scipy.integrate import quad

from dcsolver import _kernels

pure = _kernels.get_backend("pure")
try:
    fast = _kernels.get_backend("fast")
    BACKENDS = [pure, fast]
except Exception:  # compiled extension not built
    fast = None
    BACKENDS = [pure]

IDS = ["pure", "fast"][: len(BACKENDS)]

# m_k(h) = int_0^h e^(u-h) u^k du at h=1, evaluated by hand:
# m_0 = 1 - 1/e, m_1 = 1 - m_0 = 1/e
M0_AT_1 = 0.6321205588285577
M1_AT_1 = 0.36787944117144233


@pytest.mark.parametrize("kern", BACKENDS, ids=IDS)
def test_exp_integrals_frozen_values(kern):
    m = kern.exp_integrals(1.0, 1)
    assert m[0] == pytest.approx(M0_AT_1, rel=1e-15)
    assert m[1] == pytest.approx(M1_AT_1, rel=1e-15)


@pytest.mark.parametrize("kern", BACKENDS, ids=IDS)
@pytest.mark.parametrize("h", [0.05, 0.3, 1.0, 2.4, 3.7])
def test_exp_integrals_match_quadrature(kern, h):
    m = kern.exp_integrals(h, 4)
    mm = kern.exp_integrals_mirror(h, 4)
    for k in range(5):
        ref, _ = quad(lambda u: np.exp(u - h) * u**k, 0.0, h)
        assert m[k] == pytest.approx(ref, abs=1e-12)
        ref, _ = quad(lambda u: np.exp(h - u) * u**k, 0.0, h)
        assert mm[k] == pytest.approx(ref, abs=1e-12 * max(1.0, np.exp(h)))


@pytest.mark.parametrize("kern", BACKENDS, ids=IDS)
@pytest.mark.parametrize("mirror", [False, True])
def test_integ_weights_match_quadrature(kern, mirror):
    # weights applied to polynomial node values must reproduce the integral
    # of kern(u) * P(u) for any polynomial P up to the node count
    h = 0.8
    offsets = np.array([0.0, -0.45, -1.1])
    w = kern.integ_weights(offsets, h, mirror)
    for c in ([1.0], [0.3, -1.2], [0.5, 2.0, -0.7]):
        poly = np.polynomial.Polynomial(c)
        vals = poly(offsets)
        if mirror:
            ref, _ = quad(lambda u: np.exp(h - u) * poly(u), 0.0, h)
        else:
            ref, _ = quad(lambda u: np.exp(u - h) * poly(u), 0.0, h)
        assert w @ vals == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("kern", BACKENDS, ids=IDS)
def test_integ_weights_single_node(kern):
    # one node reduces to m_0 times the (constant) value
    h = 1.3
    w = kern.integ_weights(np.array([0.0]), h, False)
    assert w[0] == pytest.approx(-np.expm1(-h), rel=1e-15)
    w = kern.integ_weights(np.array([0.0]), h, True)
    assert w[0] == pytest.approx(np.expm1(h), rel=1e-15)


@pytest.mark.parametrize("kern", BACKENDS, ids=IDS)
def test_lagrange_weights_node_reproduction(kern):
    nodes = np.array([0.83, 0.61, 0.44, 0.21])
    for j, node in enumerate(nodes):
        w = kern.lagrange_weights(nodes, float(node))
        expected = np.zeros(len(nodes))
        expected[j] = 1.0
        np.testing.assert_array_equal(w, expected)


@pytest.mark.parametrize("kern", BACKENDS, ids=IDS)
def test_lagrange_weights_sum_to_one(kern):
    nodes = np.array([0.9, 0.7, 0.2])
    for t in (0.85, 0.5, 0.05):
        w = kern.lagrange_weights(nodes, t)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kern", BACKENDS, ids=IDS)
def test_lagrange_weights_quadratic_exact(kern):
    # three nodes reproduce any quadratic
    nodes = np.array([0.8, 0.55, 0.37])
    poly = np.polynomial.Polynomial([0.4, -1.3, 2.2])
    for t in (0.7, 0.45, 0.1, 1.0):
        w = kern.lagrange_weights(nodes, t)
        assert w @ poly(nodes) == pytest.approx(poly(t), abs=1e-10)


@pytest.mark.parametrize("kern", BACKENDS, ids=IDS)
def test_lagrange_midpoint_two_nodes(kern):
    w = kern.lagrange_weights(np.array([0.6, 0.4]), 0.5)
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("kern", BACKENDS, ids=IDS)
def test_gmm_posterior_mean_limits(kern):
    means = np.array([[-1.0, 0.0], [2.0, 1.0]])
    logw = np.log(np.array([0.3, 0.7]))
    x = np.array([[0.4, -0.2]])
    # huge variance: posterior ~ prior weights
    post = kern.gmm_posterior_mean(x, means, logw, 1.0, 1e12)
    np.testing.assert_allclose(post[0], 0.3 * means[0] + 0.7 * means[1], atol=1e-6)
    # tiny variance at a component: posterior collapses onto it
    post = kern.gmm_posterior_mean(means[1][None, :], means, logw, 1.0, 1e-4)
    np.testing.assert_allclose(post[0], means[1], atol=1e-12)


@pytest.mark.skipif(fast is None, reason="compiled backend not built")
def test_backends_agree():
    rng = np.random.default_rng(3)
    for _ in range(20):
        h = float(rng.uniform(0.05, 3.0))
        q = int(rng.integers(1, 5))
        offsets = np.concatenate([[0.0], -np.sort(rng.uniform(0.1, 2.0, q - 1))])
        for mirror in (False, True):
            # numpy and libm expm1 may differ in the last ulp
            np.testing.assert_allclose(
                pure.integ_weights(offsets, h, mirror),
                fast.integ_weights(offsets, h, mirror),
                rtol=1e-14,
            )
        nodes = np.sort(rng.uniform(0.1, 1.0, q))[::-1].copy()
        t_prime = float(rng.uniform(0.0, 1.0))
        # plain +-*/ in identical order: bitwise equal
        np.testing.assert_array_equal(
            pure.lagrange_weights(nodes, t_prime), fast.lagrange_weights(nodes, t_prime)
        )
    x = rng.standard_normal((7, 3))
    means = rng.standard_normal((4, 3))
    logw = np.log(np.full(4, 0.25))
    np.testing.assert_allclose(
        pure.gmm_posterior_mean(x, means, logw, 0.4, 0.53),
        fast.gmm_posterior_mean(x, means, logw, 0.4, 0.53),
        rtol=1e-15,
        atol=1e-15,
    )


def test_backend_selection_env(monkeypatch):
    from dcsolver.errors import ConfigError

    with pytest.raises(ConfigError):
        _kernels.get_backend("vectorized")
    monkeypatch.setenv("DC_SOLVER_KERNELS", "nonsense")
    with pytest.raises(ConfigError):
        _kernels._select()
    monkeypatch.setenv("DC_SOLVER_KERNELS", "pure")
    backend, name = _kernels._select()
    assert name == "pure"
