# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: operator assembly and the chain simulation loop.

Arithmetic mirrors ``_fallback.py`` operation by operation so both backends
produce bit-identical results.
"""
import numpy as np

from libc.math cimport cosh, exp


def toeplitz_assemble(const double[::1] left, const double[::1] right,
                      const double[::1] alpha, const double[::1] beta):
    """``out[j, i] = alpha[i] * left[j - i + n - 2] + beta[i] * right[j - i + n - 1]``."""
    cdef Py_ssize_t n = alpha.shape[0]
    cdef Py_ssize_t last = 2 * n - 3
    cdef Py_ssize_t i, j, a, b
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for j in range(n):
            for i in range(n):
                a = j - i + n - 2
                b = j - i + n - 1
                if a < 0:
                    a = 0
                if b > last:
                    b = last
                o[j, i] = alpha[i] * left[a] + beta[i] * right[b]
    return out


def simulate_path(double x0, double mu, double sigma, double lo, double hi,
                  double p, double q, double jump_mean, double jump_std,
                  const double[::1] eps, const double[::1] u_arrive,
                  const double[::1] u_jump, const double[::1] jump_draws,
                  double[::1] states, double[::1] profit, double[::1] volume):
    """Advance the clamped chain through one chunk; see the fallback docstring."""
    cdef double x = x0
    cdef double e_hi = exp(0.5 * hi)
    cdef double e_lo = exp(-0.5 * lo)
    cdef double pk, vk
    cdef Py_ssize_t n = eps.shape[0]
    cdef Py_ssize_t k
    cdef Py_ssize_t bad = -1
    with nogil:
        for k in range(n):
            pk = 0.0
            vk = 0.0
            if u_arrive[k] < p:
                if x > hi:
                    pk = e_hi * (cosh(0.5 * (x - hi)) - 1.0)
                    vk = e_hi - exp(hi - 0.5 * x)
                    x = hi
                elif x < lo:
                    pk = exp(0.5 * lo) * (cosh(0.5 * (x - lo)) - 1.0)
                    vk = e_lo - exp(0.5 * x - lo)
                    x = lo
            x = x + mu + sigma * eps[k]
            if u_jump[k] < q:
                x = x + (jump_mean + jump_std * jump_draws[k])
            states[k] = x
            profit[k] = pk
            volume[k] = vk
            if x > 1.0 or x < -1.0:
                bad = k
                break
    return x, bad
