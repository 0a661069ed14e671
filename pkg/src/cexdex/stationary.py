"""Stationary density of the clamped mispricing chain by function iteration.

Each iteration evaluates ``f_{k+1}(x_j) = sum_cells GK15[q(., x_j) f_k]`` with
``f_k`` linearly interpolated inside each grid cell.  That map is linear in the
node values of ``f_k``, so it is assembled once as an ``N x N`` matrix and
reused.  On a uniform grid the free (unclamped) part depends only on the node
offset ``j - c``, which keeps the number of density evaluations at ``O(N)``.
"""
from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .kernel import DensityGrid, FeeBand, ModelParams, increment_density
from .quadrature import UNIT_NODES, UNIT_WEIGHTS


class SolverError(RuntimeError):
    """Raised when an iterate contains non-finite values."""


@dataclass(frozen=True)
class SolveSettings:
    """Grid and stopping rule for :func:`solve_stationary`.

    ``grid_halfwidth=None`` selects the automatic half-width (see
    :func:`auto_halfwidth`).
    """

    n_points: int = 201
    max_iterations: int = 1000
    l1_tolerance: float = 1e-10
    grid_halfwidth: float | None = None
    init: str = "window"
    variance_correction: bool = True

    def __post_init__(self):
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ValueError(f"n_points must be odd and >= 3, got {self.n_points}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.l1_tolerance > 0:
            raise ValueError("l1_tolerance must be > 0")
        if self.grid_halfwidth is not None and not self.grid_halfwidth > 0:
            raise ValueError("grid_halfwidth must be > 0")
        if self.init not in ("window", "dirac"):
            raise ValueError(f"unknown initializer {self.init!r}")


@dataclass
class ConvergenceTrace:
    distances: list[float] = field(default_factory=list)
    truncation_loss: list[float] = field(default_factory=list)
    iterations: int = 0
    normalization: float = 1.0
    converged: bool = False

    def ratios(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Successive ratios ``d_{k+1} / d_k`` over ``distances[start:stop]``."""
        d = np.asarray(self.distances[start:stop], dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "l1_distance", "truncation_loss"])
            for k, (d, t) in enumerate(zip(self.distances, self.truncation_loss), start=1):
                w.writerow([k, repr(d), repr(t)])


def auto_halfwidth(params: ModelParams, band: FeeBand) -> float:
    """Default grid half-width in log units.

    The spread term is the one-step standard deviation scaled by the mean
    number of steps between arrivals (``1/p``), so slow arrival rates get a
    wider grid.  A single jump from a band edge is always covered.
    """
    g = band.half_width
    q = params.jump_prob_q
    s = math.sqrt(params.sigma_step**2 + q * (params.jump_mean**2 + params.jump_std**2))
    width = g + 6.0 * s / math.sqrt(params.arrival_prob_p)
    if q > 0:
        width = max(width, g + abs(params.jump_mean) + 6.0 * params.jump_std)
    return max(2.0 * g, width)


def make_grid(params: ModelParams, band: FeeBand, settings: SolveSettings) -> DensityGrid:
    hw = settings.grid_halfwidth or auto_halfwidth(params, band)
    grid = DensityGrid.symmetric(hw, settings.n_points)
    if not grid.covers(band):
        raise ValueError(f"grid half-width {hw:g} does not cover the band "
                         f"[{band.lower:g}, {band.upper:g}]")
    return grid


def initial_density(band: FeeBand, grid: DensityGrid, kind: str = "window") -> DensityGrid:
    """Window (indicator of the band) or Dirac-at-zero start, normalized."""
    if not grid.covers(band):
        raise ValueError("grid does not cover the band")
    x = grid.x
    if kind == "window":
        vals = ((x >= band.lower) & (x <= band.upper)).astype(float)
        return DensityGrid(grid.lower, grid.upper, vals).normalized()
    if kind == "dirac":
        vals = np.zeros(grid.n_points)
        vals[int(np.argmin(np.abs(x)))] = 1.0
        return DensityGrid(grid.lower, grid.upper, vals).normalized()
    raise ValueError(f"unknown initializer {kind!r}")


# ---------------------------------------------------------------------------
# operator assembly
# ---------------------------------------------------------------------------

def _cell_rule(lo: float, hi: float):
    """GK15 nodes (as fractions of the cell) and weights for sub-panel [lo, hi] of [0, 1]."""
    return lo + (hi - lo) * UNIT_NODES, (hi - lo) * UNIT_WEIGHTS


def interpolation_deflated(params: ModelParams, dx: float) -> ModelParams:
    """Kernel for mass spread by linear interpolation on a grid of spacing ``dx``.

    Spreading a node value over its hat function adds variance ``dx**2 / 6``;
    removing it from the diffusive variance keeps the second moment of each
    step exact.  The reduction is capped at half the variance, so grids that do
    not resolve ``sigma_step`` stay biased rather than degenerate.
    """
    var = params.sigma_step**2
    return params.with_(sigma_step=math.sqrt(max(var - dx * dx / 6.0, 0.5 * var)))


def build_operator(params: ModelParams, band: FeeBand, grid: DensityGrid,
                   variance_correction: bool = True) -> np.ndarray:
    """Matrix ``M`` with ``f_{k+1} = M @ f_k`` before renormalization.

    With ``variance_correction`` the free (interpolated) part uses
    :func:`interpolation_deflated`; mass clamped to a band edge is a point mass
    and always uses the exact kernel.
    """
    n = grid.n_points
    x = grid.x
    dx = grid.dx
    p = params.arrival_prob_p
    lo, hi = band.lower, band.upper
    s, w = UNIT_NODES, UNIT_WEIGHTS

    # free part: lags m = j - c in [-(n-2), n-1]
    lags = np.arange(-(n - 2), n)
    free = interpolation_deflated(params, dx) if variance_correction else params
    h_lag = increment_density((lags[:, None] - s[None, :]) * dx, free)
    left = dx * (h_lag * (w * (1.0 - s))).sum(axis=1)
    right = dx * (h_lag * (w * s)).sum(axis=1)

    cells_lo = x[:-1]
    cells_hi = x[1:]
    inside = (cells_lo >= lo) & (cells_hi <= hi)
    scale = np.where(inside, 1.0, 1.0 - p)
    alpha = np.append(scale, 0.0)
    beta = np.insert(scale, 0, 0.0)
    M = backend.toeplitz_assemble(left, right, alpha, beta)

    if p == 0.0:
        return M

    # clamped part of every cell not fully inside the band
    above = cells_lo >= hi
    below = cells_hi <= lo
    h_hi = increment_density(x - hi, params)
    h_lo = increment_density(x - lo, params)
    half = 0.5 * dx * p
    for mask, h_edge in ((above, h_hi), (below, h_lo)):
        idx = np.flatnonzero(mask)
        if idx.size:
            col = half * h_edge
            np.add.at(M, (slice(None), idx), col[:, None])
            np.add.at(M, (slice(None), idx + 1), col[:, None])

    split = np.flatnonzero(~(inside | above | below))
    for c in split:
        breaks = {0.0, 1.0}
        for edge in (lo, hi):
            r = (edge - x[c]) / dx
            if 0.0 < r < 1.0:
                breaks.add(r)
        breaks = sorted(breaks)
        for a, b in zip(breaks[:-1], breaks[1:]):
            t, wt = _cell_rule(a, b)
            x0 = x[c] + t * dx
            xt = np.clip(x0, lo, hi)
            k = increment_density(x[:, None] - xt[None, :], params)
            M[:, c] += p * dx * (k * (wt * (1.0 - t))).sum(axis=1)
            M[:, c + 1] += p * dx * (k * (wt * t)).sum(axis=1)
    return M


_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = 8


def operator_for(params: ModelParams, band: FeeBand, grid: DensityGrid,
                 variance_correction: bool = True) -> np.ndarray:
    key = (params, band, grid.lower, grid.upper, grid.n_points, variance_correction)
    M = _CACHE.get(key)
    if M is None:
        M = build_operator(params, band, grid, variance_correction)
        _CACHE[key] = M
        if len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    else:
        _CACHE.move_to_end(key)
    return M


def _apply(M: np.ndarray, f: DensityGrid) -> tuple[DensityGrid, float]:
    raw = M @ f.values
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        j = int(bad[0])
        raise SolverError(f"non-finite density at node {j} (x={f.x[j]:.6g})")
    mass = float(np.trapezoid(raw, dx=f.dx))
    if not mass > 0:
        raise SolverError("iterate lost all mass; widen the grid")
    return DensityGrid(f.lower, f.upper, raw / mass), mass


def iterate_once(f_k: DensityGrid, params: ModelParams, band: FeeBand,
                 variance_correction: bool = True) -> DensityGrid:
    """One step of the density recursion on ``f_k``'s grid, renormalized."""
    out, _ = _apply(operator_for(params, band, f_k, variance_correction), f_k)
    return out


def l1_distance(f: DensityGrid, g: DensityGrid) -> float:
    if not f.same_grid(g):
        raise ValueError("densities live on different grids")
    return float(np.trapezoid(np.abs(f.values - g.values), dx=f.dx))


def solve_stationary(params: ModelParams, band: FeeBand,
                     settings: SolveSettings | None = None,
                     initial: DensityGrid | None = None,
                     keep: tuple[int, ...] = ()):
    """Iterate to the stationary density.

    Returns ``(f_star, trace)``; with ``keep`` also returns a dict of the
    iterates at those iteration numbers (``0`` is the initial density).
    Hitting ``max_iterations`` is recorded in ``trace.converged``, not raised.
    """
    settings = settings or SolveSettings()
    if initial is None:
        grid = make_grid(params, band, settings)
        f = initial_density(band, grid, settings.init)
    else:
        f = initial.normalized()
    M = operator_for(params, band, f, settings.variance_correction)
    trace = ConvergenceTrace()
    snapshots = {0: f} if 0 in keep else {}
    for k in range(1, settings.max_iterations + 1):
        g, mass = _apply(M, f)
        d = l1_distance(g, f)
        trace.distances.append(d)
        trace.truncation_loss.append(1.0 - mass)
        trace.normalization = mass
        trace.iterations = k
        f = g
        if k in keep:
            snapshots[k] = f
        if d < settings.l1_tolerance:
            trace.converged = True
            break
    if keep:
        return f, trace, snapshots
    return f, trace
