"""Trade probability, arbitrage profit/volume and counts from a stationary density.

Tail integrals use the trapezoid rule on the grid nodes of each tail plus the
band edge itself, where ``f*`` is linearly interpolated.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .kernel import DensityGrid, FeeBand, ModelParams


@dataclass(frozen=True)
class PoolSpec:
    """Pool size and shape.  ``tvl`` is in quote units."""

    tvl: float
    gamma_bp: float = 30.0
    theta: float = 0.5
    mid_price_w: float | None = None
    liquidity_l: float | None = None

    def __post_init__(self):
        if not self.tvl > 0:
            raise ValueError("tvl must be > 0")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if self.mid_price_w is not None and self.liquidity_l is not None and self.theta == 0.5:
            implied = 2.0 * self.liquidity_l * math.sqrt(self.mid_price_w)
            if not math.isclose(implied, self.tvl, rel_tol=1e-9):
                raise ValueError(f"tvl {self.tvl} inconsistent with 2*L*sqrt(W) = {implied}")

    @classmethod
    def from_liquidity(cls, liquidity_l: float, mid_price_w: float, gamma_bp: float = 30.0):
        """CPMM pool from its invariant constant and price."""
        return cls(2.0 * liquidity_l * math.sqrt(mid_price_w), gamma_bp, 0.5,
                   mid_price_w, liquidity_l)

    @property
    def scale(self) -> float:
        """``L * W**theta`` in quote units.

        Taken from ``liquidity_l``/``mid_price_w`` when both are set, otherwise
        from the TVL via ``TVL = L W^theta / (theta^theta (1-theta)^(1-theta))``.
        """
        if self.mid_price_w is not None and self.liquidity_l is not None:
            return self.liquidity_l * self.mid_price_w**self.theta
        th = self.theta
        return self.tvl * th**th * (1.0 - th) ** (1.0 - th)


@dataclass
class ArbReport:
    trade_probability: float
    profit_per_step: float
    volume_per_step: float
    daily_profit: float
    daily_volume: float
    expected_count_up: float
    expected_count_down: float
    step_seconds: float

    @property
    def volume_to_profit(self) -> float:
        return self.daily_volume / self.daily_profit if self.daily_profit > 0 else math.inf

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(asdict(self), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> "ArbReport":
        return cls(**json.loads(text))


# ---------------------------------------------------------------------------
# tail integrals
# ---------------------------------------------------------------------------

def _check_grid(f: DensityGrid, band: FeeBand) -> None:
    if not f.covers(band):
        raise ValueError(f"band [{band.lower:g}, {band.upper:g}] is not inside the grid "
                         f"[{f.lower:g}, {f.upper:g}]")


def _segment(f: DensityGrid, a: float, b: float):
    """Abscissae and interpolated density on [a, b]: grid nodes plus both endpoints."""
    x = f.x
    inner = (x > a) & (x < b)
    t = np.concatenate([[a], x[inner], [b]])
    return t, f(t)


def tail_integral(f: DensityGrid, band: FeeBand, side: str,
                  weight: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """``int weight(t) f(t) dt`` over the upper (``side="up"``) or lower tail."""
    _check_grid(f, band)
    if side == "up":
        t, v = _segment(f, band.upper, f.upper)
    elif side == "down":
        t, v = _segment(f, f.lower, band.lower)
    else:
        raise ValueError(f"side must be 'up' or 'down', got {side!r}")
    if weight is not None:
        v = v * weight(t)
    return float(np.trapezoid(v, t))


def in_band_mass(f: DensityGrid, band: FeeBand) -> float:
    _check_grid(f, band)
    t, v = _segment(f, band.lower, band.upper)
    return float(np.trapezoid(v, t))


def trade_region_mass(f_star: DensityGrid, band: FeeBand) -> float:
    """Stationary probability of being outside the band."""
    return tail_integral(f_star, band, "up") + tail_integral(f_star, band, "down")


# closed-form per-event gains and trade sizes, in TVL units

def event_profit(t, edge):
    """Gain from resetting mispricing ``t`` to band edge ``edge`` (either side)."""
    return math.exp(0.5 * edge) * (np.cosh(0.5 * (t - edge)) - 1.0)


def volume_up(t, edge):
    return math.exp(0.5 * edge) - np.exp(edge - 0.5 * t)


def volume_down(t, edge):
    return math.exp(-0.5 * edge) - np.exp(0.5 * t - edge)


def _require_symmetric(band: FeeBand) -> None:
    if not band.is_symmetric:
        raise ValueError("this closed form needs a symmetric band (gamma_plus == gamma_minus)")


def expected_profit_cpmm(f_star: DensityGrid, band: FeeBand, params: ModelParams,
                         pool: PoolSpec) -> float:
    """Expected arbitrage profit per chain step, quote units."""
    _require_symmetric(band)
    up = tail_integral(f_star, band, "up", lambda t: event_profit(t, band.upper))
    dn = tail_integral(f_star, band, "down", lambda t: event_profit(t, band.lower))
    return pool.tvl * params.arrival_prob_p * (up + dn)


def expected_volume_cpmm(f_star: DensityGrid, band: FeeBand, params: ModelParams,
                         pool: PoolSpec) -> float:
    """Expected arbitrage volume per chain step, quote units."""
    _require_symmetric(band)
    up = tail_integral(f_star, band, "up", lambda t: volume_up(t, band.upper))
    dn = tail_integral(f_star, band, "down", lambda t: volume_down(t, band.lower))
    return pool.tvl * params.arrival_prob_p * (up + dn)


def cfmm_constants(theta: float) -> tuple[float, float]:
    c1 = (theta / (1.0 - theta)) ** (1.0 - theta)
    c2 = ((1.0 - theta) / theta) ** theta
    return c1, c2


def arb_fraction(f_star: DensityGrid, band: FeeBand, params: ModelParams,
                 theta: float = 0.5) -> float:
    """Expected profit per step in units of ``L * W**theta``."""
    _require_symmetric(band)
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    g = band.upper
    c1, c2 = cfmm_constants(theta)
    a = 1.0 - theta

    def upper(t):
        return c1 * (np.exp(t * a) - math.exp(g * a)) + c2 * (np.exp(g - t * theta) - math.exp(g * a))

    def lower(t):
        return c1 * (np.exp(t * a) - math.exp(-g * a)) + c2 * (np.exp(-t * theta - g) - math.exp(-g * a))

    up = tail_integral(f_star, band, "up", upper)
    dn = tail_integral(f_star, band, "down", lower)
    return params.arrival_prob_p * (up + dn)


def expected_profit_cfmm(f_star: DensityGrid, band: FeeBand, params: ModelParams,
                         pool: PoolSpec) -> float:
    """Expected arbitrage profit per step for a weighted-geometric-mean pool."""
    return pool.scale * arb_fraction(f_star, band, params, pool.theta)


def expected_counts(f_star: DensityGrid, band: FeeBand, params: ModelParams) -> tuple[float, float]:
    """Expected arbitrage transactions per day, (up, down)."""
    k = params.arrival_prob_p * params.steps_per_day
    return (k * tail_integral(f_star, band, "up"), k * tail_integral(f_star, band, "down"))


def arb_report(f_star: DensityGrid, band: FeeBand, params: ModelParams,
               pool: PoolSpec) -> ArbReport:
    profit = expected_profit_cpmm(f_star, band, params, pool)
    volume = expected_volume_cpmm(f_star, band, params, pool)
    up, down = expected_counts(f_star, band, params)
    spd = params.steps_per_day
    return ArbReport(
        trade_probability=trade_region_mass(f_star, band),
        profit_per_step=profit,
        volume_per_step=volume,
        daily_profit=profit * spd,
        daily_volume=volume * spd,
        expected_count_up=up,
        expected_count_down=down,
        step_seconds=params.step_seconds,
    )


# ---------------------------------------------------------------------------
# simplex least squares for the spread mixture
# ---------------------------------------------------------------------------

@dataclass
class MixtureFit:
    gammas: list[float]
    weights: np.ndarray
    residual: float
    degenerate: bool

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.gammas, self.weights.tolist()))

    def combined(self, components: Sequence[DensityGrid]) -> DensityGrid:
        vals = sum(w * c.values for w, c in zip(self.weights, components))
        ref = components[0]
        return DensityGrid(ref.lower, ref.upper, vals)


def spread_mixture_fit(component_densities: Sequence[tuple[float, DensityGrid]],
                       empirical_hist: DensityGrid, tol: float = 1e-12) -> MixtureFit:
    """Nonnegative weights summing to one that best fit ``empirical_hist`` in L2.

    Every support set is tried; on each the equality-constrained problem is a
    small KKT system.  Among optimal feasible candidates the lexicographically
    smallest weight vector wins and ``degenerate`` is set.
    """
    if len(component_densities) < 2:
        raise ValueError("need at least two components")
    gammas = [float(g) for g, _ in component_densities]
    comps = [d for _, d in component_densities]
    for c in comps:
        if not c.same_grid(empirical_hist):
            raise ValueError("component grid differs from the histogram grid")
    A = np.column_stack([c.values for c in comps])
    y = empirical_hist.values
    k = A.shape[1]
    G = A.T @ A
    scale = max(float(np.max(np.abs(G))), 1e-300)
    # unit-scale Gram block so the rank test is not swamped by the constraint row
    G = G / scale
    b = (A.T @ y) / scale

    cands = []
    for r in range(1, k + 1):
        for support in itertools.combinations(range(k), r):
            s = list(support)
            kkt = np.zeros((r + 1, r + 1))
            kkt[:r, :r] = G[np.ix_(s, s)]
            kkt[:r, r] = 1.0
            kkt[r, :r] = 1.0
            rhs = np.append(b[s], 1.0)
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            ws = sol[:r]
            if np.any(ws < -1e-10):
                continue
            w = np.zeros(k)
            w[s] = np.clip(ws, 0.0, None)
            w /= w.sum()
            res = float(np.linalg.norm(A @ w - y))
            singular = np.linalg.matrix_rank(kkt, tol=1e-10) < r + 1
            cands.append((res, w, singular))

    best = min(c[0] for c in cands)
    thresh = best + tol * max(1.0, float(np.linalg.norm(y)))
    ties = [c for c in cands if c[0] <= thresh]
    ties.sort(key=lambda c: tuple(np.round(c[1], 12)))
    res, w, singular = ties[0]
    distinct = {tuple(np.round(c[1], 9)) for c in ties}
    return MixtureFit(gammas, w, res, degenerate=bool(singular or len(distinct) > 1))

