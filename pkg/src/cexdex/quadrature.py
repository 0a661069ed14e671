"""15-point Gauss-Kronrod rule (the Kronrod extension of 7-point Gauss-Legendre)."""
from __future__ import annotations

import numpy as np

# abscissae and weights on [-1, 1], as tabulated in QUADPACK's qk15
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss-7 weights aligned with NODES (zero on the Kronrod-only abscissae)
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])

# the same rule mapped to [0, 1]
UNIT_NODES = 0.5 * (NODES + 1.0)
UNIT_WEIGHTS = 0.5 * WEIGHTS


def gk15(func, a: float, b: float) -> tuple[float, float]:
    """Integrate ``func`` over [a, b]; returns (Kronrod value, |Kronrod - Gauss|)."""
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * NODES
    fx = np.asarray(func(x), dtype=float)
    k = half * np.dot(WEIGHTS, fx)
    g = half * np.dot(GAUSS_WEIGHTS, fx)
    return float(k), float(abs(k - g))


def gk15_panels(lo, hi, n_panels: int):
    """Nodes and weights of a composite rule with ``n_panels`` equal panels.

    ``lo`` and ``hi`` may be arrays of shape ``(..., k)``; the returned arrays
    have shape ``(..., k * n_panels * 15)`` so that ``(f(nodes) * weights).sum(-1)``
    integrates over the union of the ``k`` intervals.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    edges = lo[..., None] + (hi - lo)[..., None] * np.linspace(0.0, 1.0, n_panels + 1)
    a = edges[..., :-1, None]
    width = (edges[..., 1:] - edges[..., :-1])[..., None]
    nodes = a + width * UNIT_NODES
    weights = width * UNIT_WEIGHTS
    shape = nodes.shape[:-3] + (-1,) if lo.ndim else (-1,)
    return nodes.reshape(shape), np.broadcast_to(weights, nodes.shape).reshape(shape)
