"""Reference numpy implementations of the per-step kernels.

The compiled module `_fast` mirrors these signatures exactly; either backend
can serve the solver.  Keep the arithmetic order identical when editing so the
two stay numerically interchangeable.
"""
from __future__ import annotations

import numpy as np


def exp_integrals(h: float, kmax: int) -> np.ndarray:
    """m_k = integral_0^h e^(u-h) u^k du for k = 0..kmax.

    m_0 = 1 - e^-h and m_k = h^k - k m_{k-1}.
    """
    m = np.empty(kmax + 1)
    m[0] = -np.expm1(-h)
    for k in range(1, kmax + 1):
        m[k] = h**k - k * m[k - 1]
    return m


def exp_integrals_mirror(h: float, kmax: int) -> np.ndarray:
    """m~_k = integral_0^h e^(h-u) u^k du; m~_0 = e^h - 1, m~_k = -h^k + k m~_{k-1}."""
    m = np.empty(kmax + 1)
    m[0] = np.expm1(h)
    for k in range(1, kmax + 1):
        m[k] = -(h**k) + k * m[k - 1]
    return m


def integ_weights(offsets: np.ndarray, h: float, mirror: bool = False) -> np.ndarray:
    """Per-node weights w with  integral_0^h kern(u) P(u) du = sum_j w_j v_j.

    P is the Lagrange interpolant of values v_j at node offsets u_j (relative
    to the step's left endpoint in lambda); kern is e^(u-h), or e^(h-u) when
    `mirror` is set.  Computed in the Newton basis: monic products expand to
    monomials, each integrated by exp_integrals, then divided-difference
    coefficients are redistributed onto the nodes.  No linear solve involved.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    q = len(offsets)
    m = exp_integrals_mirror(h, q - 1) if mirror else exp_integrals(h, q - 1)
    # I[k] = integral of prod_{j<k}(u - u_j), coefficients kept low-to-high
    coeffs = np.zeros(q)
    coeffs[0] = 1.0
    newton = np.empty(q)
    newton[0] = m[0]
    for k in range(1, q):
        shifted = np.zeros(q)
        shifted[1 : k + 1] = coeffs[:k]
        shifted[:k] -= offsets[k - 1] * coeffs[:k]
        coeffs = shifted
        newton[k] = coeffs[: k + 1] @ m[: k + 1]
    w = np.zeros(q)
    for j in range(q):
        for k in range(j, q):
            denom = 1.0
            for l in range(k + 1):
                if l != j:
                    denom *= offsets[j] - offsets[l]
            w[j] += newton[k] / denom
    return w


def lagrange_weights(nodes: np.ndarray, t_prime: float) -> np.ndarray:
    """Interpolation weights at t_prime for values given at distinct nodes."""
    nodes = np.asarray(nodes, dtype=np.float64)
    q = len(nodes)
    w = np.empty(q)
    for j in range(q):
        acc = 1.0
        for m in range(q):
            if m != j:
                acc *= (t_prime - nodes[m]) / (nodes[j] - nodes[m])
        w[j] = acc
    return w


def gmm_posterior_mean(
    x: np.ndarray, means: np.ndarray, log_weights: np.ndarray, alpha: float, c2: float
) -> np.ndarray:
    """Posterior mixture-mean E[mu | x] under components N(alpha mu_j, c2 I)."""
    diff = x[:, None, :] - alpha * means[None, :, :]
    logp = log_weights[None, :] - 0.5 * np.einsum("bjd,bjd->bj", diff, diff) / c2
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    p /= p.sum(axis=1, keepdims=True)
    return p @ means
