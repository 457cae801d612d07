# Compiled twins of the kernels in pure.py; same signatures, same arithmetic
# order, C loops instead of numpy dispatch.
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expm1

cnp.import_array()


def exp_integrals(double h, int kmax):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] m = np.empty(kmax + 1)
    cdef int k
    m[0] = -expm1(-h)
    for k in range(1, kmax + 1):
        m[k] = h**k - k * m[k - 1]
    return m


def exp_integrals_mirror(double h, int kmax):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] m = np.empty(kmax + 1)
    cdef int k
    m[0] = expm1(h)
    for k in range(1, kmax + 1):
        m[k] = -(h**k) + k * m[k - 1]
    return m


def integ_weights(offsets, double h, bint mirror=False):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef int q = u.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] m
    if mirror:
        m = exp_integrals_mirror(h, q - 1)
    else:
        m = exp_integrals(h, q - 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] coeffs = np.zeros(q)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] shifted = np.zeros(q)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] newton = np.empty(q)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.zeros(q)
    cdef int j, k, l
    cdef double acc, denom
    coeffs[0] = 1.0
    newton[0] = m[0]
    for k in range(1, q):
        for j in range(q):
            shifted[j] = 0.0
        for j in range(k):
            shifted[j + 1] += coeffs[j]
            shifted[j] -= u[k - 1] * coeffs[j]
        for j in range(q):
            coeffs[j] = shifted[j]
        acc = 0.0
        for j in range(k + 1):
            acc += coeffs[j] * m[j]
        newton[k] = acc
    for j in range(q):
        for k in range(j, q):
            denom = 1.0
            for l in range(k + 1):
                if l != j:
                    denom *= u[j] - u[l]
            w[j] += newton[k] / denom
    return w


def lagrange_weights(nodes, double t_prime):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tn = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef int q = tn.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.empty(q)
    cdef int j, m
    cdef double acc
    for j in range(q):
        acc = 1.0
        for m in range(q):
            if m != j:
                acc *= (t_prime - tn[m]) / (tn[j] - tn[m])
        w[j] = acc
    return w


def gmm_posterior_mean(x, means, log_weights, double alpha, double c2):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] mu = np.ascontiguousarray(means, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lw = np.ascontiguousarray(log_weights, dtype=np.float64)
    cdef int B = xv.shape[0], d = xv.shape[1], J = mu.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((B, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logp = np.empty(J)
    cdef int b, j, k
    cdef double diff, acc, top, norm, p
    for b in range(B):
        top = -1e300
        for j in range(J):
            acc = 0.0
            for k in range(d):
                diff = xv[b, k] - alpha * mu[j, k]
                acc += diff * diff
            logp[j] = lw[j] - 0.5 * acc / c2
            if logp[j] > top:
                top = logp[j]
        norm = 0.0
        for j in range(J):
            logp[j] = exp(logp[j] - top)
            norm += logp[j]
        for j in range(J):
            p = logp[j] / norm
            for k in range(d):
                out[b, k] += p * mu[j, k]
    return out
