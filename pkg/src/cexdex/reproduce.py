"""Reference tables for the constant-volatility arbitrage model and their reproduction.

The tables are reproduced with a one-second chain: per-second volatility and
drift, and an arbitrageur (block) arrival probability of ``1 / block_seconds``
per second.  Trade-region cells iterate to convergence on the automatic grid.
Profit cells use a fixed grid and a fixed iteration count, and are reported as
``ARB * block_seconds**2`` in units of ``L * sqrt(W)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .estimators import arb_fraction, trade_region_mass
from .kernel import FeeBand, ModelParams
from .stationary import SolveSettings, solve_stationary

BLOCK_TIMES = {"10min": 600.0, "2min": 120.0, "12sec": 12.0, "2sec": 2.0}
GAMMAS_BP = (1, 5, 10, 30, 100)
JUMP_QS = (0.0, 0.05, 0.1, 0.2)

# (block label, gamma bp) -> (reference %, previously computed %)
TRADE_REGION = {
    ("10min", 1): (96.7, 96.8), ("10min", 5): (85.5, 85.5), ("10min", 10): (74.7, 74.6),
    ("10min", 30): (49.6, 49.4), ("10min", 100): (22.8, 20.8),
    ("2min", 1): (92.9, 93.1), ("2min", 5): (72.5, 72.6), ("2min", 10): (56.9, 56.9),
    ("2min", 30): (30.5, 30.5), ("2min", 100): (11.6, 11.6),
    ("12sec", 1): (80.7, 81.9), ("12sec", 5): (45.6, 45.9), ("12sec", 10): (29.5, 29.6),
    ("12sec", 30): (12.3, 12.2), ("12sec", 100): (4.0, 4.0),
    ("2sec", 1): (63.0, 67.2), ("2sec", 5): (25.4, 26.2), ("2sec", 10): (14.5, 14.8),
    ("2sec", 30): (5.4, 5.4), ("2sec", 100): (1.7, 1.7),
}

# absolute tolerance in percentage points; cells not listed use the default
TRADE_REGION_TOL_PP = 0.5
TRADE_REGION_TOL_OVERRIDE = {("2sec", 1): 5.0, ("10min", 100): 2.5}

_P = {
    "10min": (
        (0.00202760, 0.00175490, 0.00149120, 0.00087340, 0.00023100),
        (0.00583060, 0.00536270, 0.00485070, 0.00328570, 0.00062900),
        (0.00855130, 0.00794330, 0.00725320, 0.00500800, 0.00091520),
        (0.01199680, 0.01121090, 0.01029490, 0.00718960, 0.00129170),
    ),
    "2min": (
        (0.00009700, 0.00007500, 0.00005900, 0.00003200, 0.00001100),
        (0.00038730, 0.00034990, 0.00031370, 0.00021390, 0.00004600),
        (0.00066180, 0.00060930, 0.00055420, 0.00038560, 0.00007800),
        (0.00116750, 0.00108700, 0.00099710, 0.00070100, 0.00013500),
    ),
    "12sec": (
        (0.00000084, 0.00000047, 0.00000030, 0.00000013, 0.00000004),
        (0.00000460, 0.00000400, 0.00000360, 0.00000250, 0.00000052),
        (0.00000860, 0.00000780, 0.00000710, 0.00000500, 0.00000100),
        (0.00001800, 0.00001700, 0.00001500, 0.00001100, 0.00000220),
    ),
    "2sec": (
        (0.00000002, 0.00000001, 0.00000000, 0.00000000, 0.00000000),
        (0.00000013, 0.00000011, 0.00000010, 0.00000007, 0.00000001),
        (0.00000025, 0.00000022, 0.00000020, 0.00000015, 0.00000003),
        (0.00000053, 0.00000049, 0.00000045, 0.00000032, 0.00000007),
    ),
}
# (block label, q, gamma bp) -> profit as a fraction of L*sqrt(W)
PROFIT = {
    (blk, q, g): _P[blk][iq][ig]
    for blk in _P for iq, q in enumerate(JUMP_QS) for ig, g in enumerate(GAMMAS_BP)
}
PROFIT_REL_TOL = 0.05
PROFIT_ABS_TOL = 1e-8


@dataclass(frozen=True)
class ReferenceModel:
    """Chain settings used to reproduce the tables."""

    sigma_daily: float = 0.05
    mu_daily: float | None = None  # None -> sigma^2 / 2
    step_seconds: float = 1.0
    jump_mean_step: float = 0.0
    jump_std_step: float = 1.6e-3
    n_points: int = 801
    trade_max_iterations: int = 8000
    trade_l1_tolerance: float = 1e-12
    profit_max_iterations: int = 1000
    profit_grid_halfwidth: float = 0.02

    def params(self, block_seconds: float, q: float = 0.0) -> ModelParams:
        mu = 0.5 * self.sigma_daily**2 if self.mu_daily is None else self.mu_daily
        base = ModelParams.from_daily(mu, self.sigma_daily, q_step=q,
                                      p=self.step_seconds / block_seconds,
                                      step_seconds=self.step_seconds)
        return base.with_(jump_mean=self.jump_mean_step, jump_std=self.jump_std_step)

    @classmethod
    def from_config(cls, cfg: dict) -> "ReferenceModel":
        kw = {}
        for name, typ in (("sigma_daily", float), ("step_seconds", float),
                          ("jump_mean_step", float), ("jump_std_step", float),
                          ("n_points", int), ("trade_max_iterations", int),
                          ("trade_l1_tolerance", float), ("profit_max_iterations", int),
                          ("profit_grid_halfwidth", float)):
            if name in cfg:
                kw[name] = typ(cfg[name])
        mu = cfg.get("mu_daily")
        if mu is not None and str(mu).strip() != "sigma2/2":
            kw["mu_daily"] = float(mu)
        return cls(**kw)


def parse_cells(spec: str | None) -> list[tuple[str, int]]:
    """``"12sec:30bp,2min:1bp"`` -> ``[("12sec", 30), ("2min", 1)]``; ``None`` -> all."""
    if not spec:
        return list(TRADE_REGION)
    out = []
    for item in spec.split(","):
        blk, _, g = item.strip().partition(":")
        if blk not in BLOCK_TIMES or not g.endswith("bp"):
            raise ValueError(f"bad cell {item!r}; expected e.g. 12sec:30bp")
        gbp = int(g[:-2])
        if gbp not in GAMMAS_BP:
            raise ValueError(f"fee level {gbp}bp is not a table column")
        out.append((blk, gbp))
    return out


@dataclass
class TradeCell:
    block: str
    gamma_bp: int
    reference_pct: float
    prior_pct: float
    computed_pct: float
    iterations: int
    converged: bool

    @property
    def tolerance_pp(self) -> float:
        return TRADE_REGION_TOL_OVERRIDE.get((self.block, self.gamma_bp), TRADE_REGION_TOL_PP)

    @property
    def error_pp(self) -> float:
        return self.computed_pct - self.reference_pct

    @property
    def ok(self) -> bool:
        return abs(self.error_pp) <= self.tolerance_pp


@dataclass
class ProfitCell:
    block: str
    q: float
    gamma_bp: int
    reference: float
    computed: float

    @property
    def tolerance(self) -> float:
        return max(PROFIT_REL_TOL * abs(self.reference), PROFIT_ABS_TOL)

    @property
    def ok(self) -> bool:
        return abs(self.computed - self.reference) <= self.tolerance

    @property
    def ratio(self) -> float:
        return self.computed / self.reference if self.reference else math.nan


def trade_region_cell(block: str, gamma_bp: int, model: ReferenceModel = ReferenceModel(),
                      max_iterations: int | None = None) -> TradeCell:
    blk_s = BLOCK_TIMES[block]
    params = model.params(blk_s)
    band = FeeBand.from_bp(gamma_bp)
    settings = SolveSettings(n_points=model.n_points,
                             max_iterations=max_iterations or model.trade_max_iterations,
                             l1_tolerance=model.trade_l1_tolerance)
    f, trace = solve_stationary(params, band, settings)
    ref, prior = TRADE_REGION[(block, gamma_bp)]
    return TradeCell(block, gamma_bp, ref, prior, 100.0 * trade_region_mass(f, band),
                     trace.iterations, trace.converged)


def profit_cell(block: str, q: float, gamma_bp: int, model: ReferenceModel = ReferenceModel(),
                max_iterations: int | None = None) -> ProfitCell:
    blk_s = BLOCK_TIMES[block]
    params = model.params(blk_s, q)
    band = FeeBand.from_bp(gamma_bp)
    settings = SolveSettings(n_points=model.n_points,
                             max_iterations=max_iterations or model.profit_max_iterations,
                             grid_halfwidth=model.profit_grid_halfwidth)
    f, _ = solve_stationary(params, band, settings)
    value = arb_fraction(f, band, params, 0.5) * blk_s**2
    return ProfitCell(block, q, gamma_bp, PROFIT[(block, q, gamma_bp)], value)


def reproduce_trade_region(cells: Sequence[tuple[str, int]] | None = None,
                           model: ReferenceModel = ReferenceModel(),
                           max_iterations: int | None = None) -> list[TradeCell]:
    return [trade_region_cell(b, g, model, max_iterations) for b, g in (cells or list(TRADE_REGION))]


def reproduce_profit(cells: Sequence[tuple[str, int]] | None = None,
                     qs: Iterable[float] = JUMP_QS, model: ReferenceModel = ReferenceModel(),
                     max_iterations: int | None = None) -> list[ProfitCell]:
    qs = tuple(qs)
    out = []
    for b, g in (cells or list(TRADE_REGION)):
        for q in qs:
            out.append(profit_cell(b, q, g, model, max_iterations))
    return out


def write_trade_region_csv(cells: Sequence[TradeCell], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "gamma_bp", "reference_pct", "prior_computed_pct", "computed_pct",
                    "error_pp", "tolerance_pp", "iterations", "converged", "ok"])
        for c in cells:
            w.writerow([c.block, c.gamma_bp, c.reference_pct, c.prior_pct, f"{c.computed_pct:.4f}",
                        f"{c.error_pp:+.4f}", c.tolerance_pp, c.iterations, int(c.converged), int(c.ok)])


def write_profit_csv(cells: Sequence[ProfitCell], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "q", "gamma_bp", "reference", "computed", "ratio", "ok"])
        for c in cells:
            w.writerow([c.block, c.q, c.gamma_bp, f"{c.reference:.8f}", f"{c.computed:.10g}",
                        f"{c.ratio:.4f}", int(c.ok)])
