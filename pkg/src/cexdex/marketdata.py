"""CEX quote and DEX swap ingestion, mispricing alignment and swap histograms.

Sign convention: ``z = log(P_cex / P_pool) > 0`` means the external price is
above the pool price, i.e. arbitrageurs buy base on the DEX.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BASE_TO_QUOTE = "base_to_quote"
QUOTE_TO_BASE = "quote_to_base"
DIRECTIONS = (BASE_TO_QUOTE, QUOTE_TO_BASE)
MAX_BAD_FRACTION = 0.01
MAX_FEED_GAP = 60.0


class DataError(ValueError):
    """Input file unreadable or too many malformed rows."""


@dataclass(frozen=True)
class PriceTick:
    timestamp: float
    venue: str
    bid: float
    ask: float

    def __post_init__(self):
        if not (self.bid > 0 and self.ask > 0):
            raise ValueError("prices must be positive")
        if self.bid > self.ask:
            raise ValueError(f"bid {self.bid} above ask {self.ask}")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


@dataclass(frozen=True)
class SwapRecord:
    block: int
    timestamp: float
    direction: str
    amount_in: float
    amount_out: float

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not (self.amount_in > 0 and self.amount_out > 0):
            raise ValueError("amounts must be positive")

    @property
    def implied_price(self) -> float:
        """Execution price in quote per base."""
        if self.direction == BASE_TO_QUOTE:
            return self.amount_out / self.amount_in
        return self.amount_in / self.amount_out

    @property
    def base_amount(self) -> float:
        return self.amount_in if self.direction == BASE_TO_QUOTE else self.amount_out

    @property
    def quote_amount(self) -> float:
        return self.amount_out if self.direction == BASE_TO_QUOTE else self.amount_in


@dataclass(frozen=True)
class MispriceSample:
    swap: SwapRecord
    z_pre: float
    z_window: float
    volume_quote: float


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

TICK_COLUMNS = ("timestamp", "venue", "bid", "ask")
SWAP_COLUMNS = ("block", "timestamp", "direction", "amount_in", "amount_out")


def _load(path, columns, parse, errors: list | None):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows, bad = [], []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            warnings.warn(f"{path} is empty", stacklevel=3)
            return rows
        if tuple(h.strip() for h in header) != columns:
            raise DataError(f"{path}: expected header {','.join(columns)}, got {','.join(header)}")
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                if len(rec) != len(columns):
                    raise ValueError(f"expected {len(columns)} fields, got {len(rec)}")
                rows.append(parse(rec))
            except ValueError as exc:
                bad.append((line_no, str(exc)))
    if errors is not None:
        errors.extend(bad)
    total = len(rows) + len(bad)
    if total and len(bad) / total > MAX_BAD_FRACTION:
        first = "; ".join(f"line {n}: {m}" for n, m in bad[:3])
        raise DataError(f"{path}: {len(bad)} of {total} rows malformed ({first})")
    if not total:
        warnings.warn(f"{path} has no data rows", stacklevel=3)
    rows.sort(key=lambda r: r.timestamp)
    return rows


def _finite(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {s!r}")
    return v


def load_ticks(path: str | Path, errors: list | None = None) -> list[PriceTick]:
    """Read a ``timestamp,venue,bid,ask`` file; rejected rows go to ``errors``."""
    return _load(path, TICK_COLUMNS,
                 lambda r: PriceTick(_finite(r[0]), r[1].strip(), _finite(r[2]), _finite(r[3])),
                 errors)


def load_swaps(path: str | Path, errors: list | None = None) -> list[SwapRecord]:
    """Read a ``block,timestamp,direction,amount_in,amount_out`` file."""
    return _load(path, SWAP_COLUMNS,
                 lambda r: SwapRecord(int(r[0]), _finite(r[1]), r[2].strip(),
                                      _finite(r[3]), _finite(r[4])),
                 errors)


def write_ticks(path: str | Path, ticks: Iterable[PriceTick]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TICK_COLUMNS)
        for t in ticks:
            w.writerow([repr(t.timestamp), t.venue, repr(t.bid), repr(t.ask)])


def write_swaps(path: str | Path, swaps: Iterable[SwapRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWAP_COLUMNS)
        for s in swaps:
            w.writerow([s.block, repr(s.timestamp), s.direction, repr(s.amount_in), repr(s.amount_out)])


# ---------------------------------------------------------------------------
# alignment
# ---------------------------------------------------------------------------

class TickIndex:
    """Time-sorted arrays over all venues for fast window queries."""

    def __init__(self, ticks: Sequence[PriceTick]):
        order = sorted(ticks, key=lambda t: t.timestamp)
        self.t = np.array([x.timestamp for x in order], dtype=float)
        self.bid = np.array([x.bid for x in order], dtype=float)
        self.ask = np.array([x.ask for x in order], dtype=float)
        self.venue = np.array([x.venue for x in order], dtype=object)

    def window(self, start: float, stop: float) -> slice:
        i = int(np.searchsorted(self.t, start, side="left"))
        j = int(np.searchsorted(self.t, stop, side="right"))
        return slice(i, j)

    def best(self, start: float, stop: float) -> tuple[float, float] | None:
        sl = self.window(start, stop)
        if sl.start >= sl.stop:
            return None
        return float(self.bid[sl].max()), float(self.ask[sl].min())

    def latest(self, t: float) -> tuple[float, float] | None:
        """Most recent quote at or before ``t`` (any venue)."""
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        if i < 0:
            return None
        return float(self.bid[i]), float(self.ask[i])


def best_cross_venue(ticks: Sequence[PriceTick] | TickIndex, t: float,
                     window: float = 12.0, delay: float = 8.0) -> tuple[float, float] | None:
    """Highest bid and lowest ask over ``[t - delay, t - delay + window]``.

    Returns ``None`` when no tick falls in the window (a feed gap).
    """
    if not window > 0:
        raise ValueError("window must be > 0")
    idx = ticks if isinstance(ticks, TickIndex) else TickIndex(ticks)
    return idx.best(t - delay, t - delay + window)


def pre_trade_price(swap: SwapRecord, fee: float = 0.003, liquidity_l: float | None = None) -> float:
    """Pool price (quote per base) just before ``swap``.

    With the invariant ``x * y = L**2`` known, the pre-trade reserves follow
    exactly from the fee-exclusive amounts.  Without it the fee-exclusive
    execution price is used as the marginal-price proxy.
    """
    d_in = swap.amount_in * (1.0 - fee)
    e = swap.amount_out / d_in
    if liquidity_l is None:
        return e if swap.direction == BASE_TO_QUOTE else 1.0 / e
    # reserve r_in of the input token solves e*r^2 + e*d_in*r - L^2 = 0
    # (cancellation-free root of the quadratic)
    r_in = 2.0 * liquidity_l**2 / (e * d_in + math.sqrt((e * d_in) ** 2 + 4.0 * e * liquidity_l**2))
    r_out = liquidity_l**2 / r_in
    return r_out / r_in if swap.direction == BASE_TO_QUOTE else r_in / r_out


def mispricing_series(swaps: Sequence[SwapRecord], ticks: Sequence[PriceTick],
                      window: float = 12.0, delay: float = 8.0, fee: float = 0.003,
                      liquidity_l: float | None = None) -> tuple[list[MispriceSample], int]:
    """Log mispricing of each swap against the best CEX quote in its window.

    A swap selling base into the pool is compared with the best ask, a swap
    buying base with the best bid.  Returns ``(samples, n_gaps)``.
    """
    idx = TickIndex(ticks)
    out, gaps = [], 0
    for s in swaps:
        best = idx.best(s.timestamp - delay, s.timestamp - delay + window)
        last = idx.latest(s.timestamp)
        if best is None or last is None:
            gaps += 1
            continue
        pool = pre_trade_price(s, fee, liquidity_l)
        side = 1 if s.direction == BASE_TO_QUOTE else 0
        z_window = math.log(best[side] / pool)
        z_pre = math.log(last[side] / pool)
        out.append(MispriceSample(s, z_pre, z_window, s.quote_amount))
    return out, gaps


# ---------------------------------------------------------------------------
# histograms and daily report
# ---------------------------------------------------------------------------

@dataclass
class MispriceHistogram:
    edges: np.ndarray
    count_per_day: np.ndarray
    volume_per_day: np.ndarray
    n_days: float

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_midpoint", "count_per_day", "volume_per_day"])
            for m, c, v in zip(self.midpoints, self.count_per_day, self.volume_per_day):
                w.writerow([repr(float(m)), repr(float(c)), repr(float(v))])


def count_days(timestamps: Iterable[float]) -> int:
    """Number of distinct UTC calendar days touched."""
    return len({int(math.floor(t / 86400.0)) for t in timestamps})


def misprice_histograms(samples: Sequence[MispriceSample], bins, n_days: float | None = None,
                        use_window: bool = True) -> MispriceHistogram:
    """Per-day swap counts and quote volumes per mispricing bin.

    ``bins`` is an edge array or ``(lower, upper, n_bins)``.  Samples outside
    the range are counted in the end bins so totals are conserved.
    """
    if not samples:
        raise ValueError("no samples")
    if isinstance(bins, tuple) and len(bins) == 3:
        edges = np.linspace(bins[0], bins[1], int(bins[2]) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    z = np.array([s.z_window if use_window else s.z_pre for s in samples])
    vol = np.array([s.volume_quote for s in samples])
    k = np.clip(np.searchsorted(edges, z, side="right") - 1, 0, edges.size - 2)
    counts = np.bincount(k, minlength=edges.size - 1).astype(float)
    volume = np.bincount(k, weights=vol, minlength=edges.size - 1)
    days = n_days if n_days is not None else count_days(s.swap.timestamp for s in samples)
    return MispriceHistogram(edges, counts / days, volume / days, float(days))


@dataclass
class DayActivity:
    day: int  # days since the UNIX epoch
    volatility_pct: float
    n_swaps: int
    excluded: bool


@dataclass
class ActivityReport:
    days: list[DayActivity]
    amount_edges: list[float]
    amount_counts: list[int]

    def to_json(self, path: str | Path | None = None) -> str:
        data = asdict(self)
        for d in data["days"]:
            if math.isnan(d["volatility_pct"]):
                d["volatility_pct"] = None
        text = json.dumps(data, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def daily_activity_report(swaps: Sequence[SwapRecord], ticks: Sequence[PriceTick],
                          amount_bins: int = 20, max_gap: float = MAX_FEED_GAP) -> ActivityReport:
    """Daily realized volatility (percent) and swap counts, plus a base-amount histogram.

    Volatility is ``sqrt(sum r^2)`` of mid-price log-returns of the venue with
    the most ticks; days whose feed has a gap longer than ``max_gap`` seconds
    are flagged ``excluded`` and get ``nan`` volatility.
    """
    by_venue: dict[str, list[PriceTick]] = {}
    for t in ticks:
        by_venue.setdefault(t.venue, []).append(t)
    days: dict[int, list] = {}
    if by_venue:
        main = max(by_venue.values(), key=len)
        main.sort(key=lambda x: x.timestamp)
        ts = np.array([x.timestamp for x in main])
        mid = np.array([x.mid for x in main])
        day_of = np.floor(ts / 86400.0).astype(int)
        for d in np.unique(day_of):
            sel = day_of == d
            t_d, m_d = ts[sel], mid[sel]
            gap = np.diff(t_d).max() if t_d.size > 1 else math.inf
            if gap > max_gap:
                days[int(d)] = [math.nan, True]
            else:
                r = np.diff(np.log(m_d))
                days[int(d)] = [100.0 * math.sqrt(float(np.dot(r, r))), False]
    counts: dict[int, int] = {}
    for s in swaps:
        d = int(math.floor(s.timestamp / 86400.0))
        counts[d] = counts.get(d, 0) + 1
    all_days = sorted(set(days) | set(counts))
    out = [DayActivity(d, days.get(d, [math.nan, True])[0], counts.get(d, 0),
                       days.get(d, [math.nan, True])[1]) for d in all_days]
    amounts = np.array([s.base_amount for s in swaps])
    if amounts.size:
        hc, he = np.histogram(amounts, bins=amount_bins)
    else:
        hc, he = np.zeros(0, dtype=int), np.zeros(0)
    return ActivityReport(out, he.tolist(), hc.astype(int).tolist())
