"""Pure NumPy/Python versions of the compiled kernels in ``_core.pyx``.

Both implementations follow the same arithmetic so results agree to the last
bit on identical inputs (no fused or reordered floating point in either).
"""
from __future__ import annotations

import math

import numpy as np


def toeplitz_assemble(left, right, alpha, beta):
    """``out[j, i] = alpha[i] * left[j - i + n - 2] + beta[i] * right[j - i + n - 1]``.

    ``left``/``right`` hold per-lag cell weights for lags ``m = j - c`` in
    ``[-(n - 2), n - 1]`` (length ``2n - 2``).
    """
    n = alpha.size
    j = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    lag = j - i
    out = alpha[None, :] * left[np.clip(lag + n - 2, 0, 2 * n - 3)]
    out += beta[None, :] * right[np.clip(lag + n - 1, 0, 2 * n - 3)]
    return out


def simulate_path(x0, mu, sigma, lo, hi, p, q, jump_mean, jump_std,
                  eps, u_arrive, u_jump, jump_draws, states, profit, volume):
    """Advance the clamped chain through one chunk of pre-drawn randomness.

    Fills ``states`` (state after each step), ``profit`` and ``volume``
    (closed-form arbitrage gain/trade size in TVL units, zero when no trade).
    Returns ``(final_state, overflow_index)``; ``overflow_index`` is -1 unless
    the state left ``[-1, 1]``.
    """
    x = float(x0)
    e_hi = math.exp(0.5 * hi)
    e_lo = math.exp(-0.5 * lo)
    n = eps.shape[0]
    for k in range(n):
        pk = 0.0
        vk = 0.0
        if u_arrive[k] < p:
            if x > hi:
                pk = e_hi * (math.cosh(0.5 * (x - hi)) - 1.0)
                vk = e_hi - math.exp(hi - 0.5 * x)
                x = hi
            elif x < lo:
                pk = math.exp(0.5 * lo) * (math.cosh(0.5 * (x - lo)) - 1.0)
                vk = e_lo - math.exp(0.5 * x - lo)
                x = lo
        x = x + mu + sigma * eps[k]
        if u_jump[k] < q:
            x = x + (jump_mean + jump_std * jump_draws[k])
        states[k] = x
        profit[k] = pk
        volume[k] = vk
        if x > 1.0 or x < -1.0:
            return x, k
    return x, -1
