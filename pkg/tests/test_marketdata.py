import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cexdex.marketdata import (BASE_TO_QUOTE, QUOTE_TO_BASE, DataError, PriceTick, SwapRecord,
                               TickIndex, best_cross_venue, count_days, daily_activity_report,
                               load_swaps, load_ticks, mispricing_series, misprice_histograms,
                               pre_trade_price, write_swaps, write_ticks)

FEE = 0.003


class Pool:
    """Constant-product pool with the fee taken on the input side."""

    def __init__(self, price: float, liquidity: float):
        self.L = liquidity
        self.x = liquidity / math.sqrt(price)  # base reserve
        self.y = liquidity * math.sqrt(price)  # quote reserve

    @property
    def price(self) -> float:
        return self.y / self.x

    def swap(self, direction: str, amount_in: float, block=0, t=0.0) -> SwapRecord:
        d = amount_in * (1 - FEE)
        if direction == BASE_TO_QUOTE:
            out = self.y - self.L**2 / (self.x + d)
            self.x += d
            self.y -= out
        else:
            out = self.x - self.L**2 / (self.y + d)
            self.y += d
            self.x -= out
        return SwapRecord(block, t, direction, amount_in, out)


# --- records and files -----------------------------------------------------

def test_record_validation():
    with pytest.raises(ValueError):
        PriceTick(0.0, "a", 2001.0, 2000.0)
    with pytest.raises(ValueError):
        PriceTick(0.0, "a", 0.0, 1.0)
    with pytest.raises(ValueError):
        SwapRecord(1, 0.0, "sideways", 1.0, 1.0)
    with pytest.raises(ValueError):
        SwapRecord(1, 0.0, BASE_TO_QUOTE, -1.0, 1.0)
    s = SwapRecord(1, 0.0, BASE_TO_QUOTE, 2.0, 4000.0)
    assert s.implied_price == 2000.0 and s.base_amount == 2.0 and s.quote_amount == 4000.0


def test_empty_file_warns(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.warns(UserWarning):
        assert load_ticks(p) == []
    p.write_text("timestamp,venue,bid,ask\n")
    with pytest.warns(UserWarning):
        assert load_ticks(p) == []


def test_missing_file_and_bad_header(tmp_path):
    with pytest.raises(DataError):
        load_ticks(tmp_path / "nope.csv")
    p = tmp_path / "h.csv"
    p.write_text("time,venue,bid,ask\n1,a,1,2\n")
    with pytest.raises(DataError):
        load_ticks(p)


def test_crossed_row_is_rejected_not_fatal(tmp_path):
    rows = [f"{i},binance,2000.0,2000.5" for i in range(200)] + ["200,binance,2001.0,2000.0"]
    p = tmp_path / "t.csv"
    p.write_text("timestamp,venue,bid,ask\n" + "\n".join(rows) + "\n")
    errors = []
    ticks = load_ticks(p, errors)
    assert len(ticks) == 200
    assert len(errors) == 1 and errors[0][0] == 202 and "above ask" in errors[0][1]


def test_too_many_malformed_rows_abort(tmp_path):
    rows = [f"{i},binance,2000.0,2000.5" for i in range(97)] + ["x,binance,1,2", "1,b,nan,2", "1,b,1"]
    p = tmp_path / "t.csv"
    p.write_text("timestamp,venue,bid,ask\n" + "\n".join(rows) + "\n")
    with pytest.raises(DataError, match="3 of 100"):
        load_ticks(p)


def test_tick_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    mid = 2000 * np.exp(np.cumsum(1e-4 * rng.standard_normal(10_000)))
    half = rng.uniform(0, 0.5, 10_000)
    ticks = [PriceTick(float(i) * 0.37, ("binance", "okx")[i % 2], float(m - h), float(m + h))
             for i, (m, h) in enumerate(zip(mid, half))]
    write_ticks(tmp_path / "t.csv", ticks)
    assert load_ticks(tmp_path / "t.csv") == ticks


def test_swap_round_trip_sorted(tmp_path):
    swaps = [SwapRecord(3, 36.0, QUOTE_TO_BASE, 1000.0, 0.49), SwapRecord(1, 12.0, BASE_TO_QUOTE, 1.5, 3001.2)]
    write_swaps(tmp_path / "s.csv", swaps)
    assert load_swaps(tmp_path / "s.csv") == sorted(swaps, key=lambda s: s.timestamp)


# --- cross-venue best quote ------------------------------------------------

TICKS = [PriceTick(10.0, "a", 1999.0, 2001.0), PriceTick(12.0, "b", 2000.5, 2002.0),
         PriceTick(15.0, "a", 1998.0, 2000.8)]


def test_best_cross_venue_examples():
    assert best_cross_venue(TICKS, 20.0, window=12.0, delay=8.0) == (2000.5, 2000.8)
    assert best_cross_venue(TICKS, 20.0, window=3.0, delay=10.0) == (2000.5, 2001.0)
    assert best_cross_venue(TickIndex(TICKS), 20.0, window=1.0, delay=9.0) == (2000.5, 2002.0)
    assert best_cross_venue(TICKS, 20.0, window=1.0, delay=10.0) == (1999.0, 2001.0)


def test_feed_gap_returns_none():
    assert best_cross_venue(TICKS, 100.0) is None
    assert best_cross_venue(TICKS, 5.0, window=2.0, delay=0.0) is None
    with pytest.raises(ValueError):
        best_cross_venue(TICKS, 20.0, window=0.0)


# --- mispricing ------------------------------------------------------------

def test_pre_trade_price_exact_with_liquidity():
    for direction, amt in ((BASE_TO_QUOTE, 3.0), (QUOTE_TO_BASE, 5000.0)):
        pool = Pool(2000.0, 1e5)
        before = pool.price
        s = pool.swap(direction, amt)
        assert pre_trade_price(s, FEE, pool.L) == pytest.approx(before, rel=1e-12)
        # without liquidity the execution price brackets the move
        proxy = pre_trade_price(s, FEE)
        assert min(before, pool.price) <= proxy <= max(before, pool.price)


def test_z_examples():
    pool = Pool(2000.0, 1e6)
    s = pool.swap(QUOTE_TO_BASE, 100.0, t=20.0)
    p0 = 2000.0
    flat = [PriceTick(15.0, "a", p0, p0)]
    (sample,), gaps = mispricing_series([s], flat, liquidity_l=pool.L)
    assert gaps == 0
    # roundoff from the pool's own reserve updates
    assert sample.z_window == pytest.approx(0.0, abs=1e-10)
    assert sample.z_pre == pytest.approx(0.0, abs=1e-10)
    up = p0 * math.exp(0.003)
    (sample,), _ = mispricing_series([s], [PriceTick(15.0, "a", up, up * 1.0001)], liquidity_l=pool.L)
    assert sample.z_window == pytest.approx(0.003, abs=1e-10)
    assert sample.volume_quote == 100.0


def test_gap_swaps_are_counted_and_dropped():
    pool = Pool(2000.0, 1e6)
    s = pool.swap(BASE_TO_QUOTE, 1.0, t=500.0)
    samples, gaps = mispricing_series([s], TICKS)
    assert samples == [] and gaps == 1


@given(st.floats(0.01, 100), st.floats(-1e5, 1e5))
@settings(max_examples=40, deadline=None)
def test_mispricing_is_equivariant(scale, shift):
    """Rescaling the quote unit or shifting the clock leaves z unchanged."""
    rng = np.random.default_rng(1)
    pool = Pool(2000.0, 1e5)
    swaps, ticks = [], []
    for k in range(20):
        t = 12.0 * (k + 1)
        m = pool.price * math.exp(0.004 * rng.standard_normal())
        ticks.append(PriceTick(t - 6.0, "a", m * 0.9999, m * 1.0001))
        d = BASE_TO_QUOTE if m < pool.price else QUOTE_TO_BASE
        swaps.append(pool.swap(d, 1.0 if d == BASE_TO_QUOTE else 2000.0, k, t))
    base, _ = mispricing_series(swaps, ticks)

    ticks2 = [PriceTick(x.timestamp + shift, x.venue, x.bid * scale, x.ask * scale) for x in ticks]
    swaps2 = [SwapRecord(s.block, s.timestamp + shift, s.direction,
                         s.amount_in * (scale if s.direction == QUOTE_TO_BASE else 1.0),
                         s.amount_out * (scale if s.direction == BASE_TO_QUOTE else 1.0)) for s in swaps]
    moved, _ = mispricing_series(swaps2, ticks2)
    assert len(moved) == len(base)
    for a, b in zip(base, moved):
        assert b.z_window == pytest.approx(a.z_window, abs=1e-9)
        assert b.z_pre == pytest.approx(a.z_pre, abs=1e-9)


def test_synthetic_arbitrage_pipeline():
    """Arbitrage a pool against a GBM feed; the recovered z sits beyond the fee."""
    rng = np.random.default_rng(7)
    pool = Pool(2000.0, 2e5)
    ticks, swaps, true_z = [], [], []
    cex = 2000.0
    for k in range(3000):
        t = 12.0 * (k + 1)
        cex *= math.exp(0.0015 * rng.standard_normal())
        # inside [t - 8, t + 4] but outside the next block's window
        ticks.append(PriceTick(t - 6.0, "a", cex, cex))
        z = math.log(cex / pool.price)
        if abs(z) <= FEE:
            continue
        true_z.append(z)
        target = cex * math.exp(-FEE if z > 0 else FEE)
        if z > 0:  # buy base with quote up to the fee-adjusted target
            d = pool.L * math.sqrt(target) - pool.y
            swaps.append(pool.swap(QUOTE_TO_BASE, d / (1 - FEE), k, t))
        else:
            d = pool.L / math.sqrt(target) - pool.x
            swaps.append(pool.swap(BASE_TO_QUOTE, d / (1 - FEE), k, t))
        assert math.log(cex / pool.price) == pytest.approx(math.copysign(FEE, z), abs=1e-9)
    samples, gaps = mispricing_series(swaps, ticks, window=12.0, delay=8.0, fee=FEE, liquidity_l=pool.L)
    assert gaps == 0 and len(samples) == len(swaps) > 100
    got = np.array([s.z_window for s in samples])
    assert np.allclose(got, true_z, atol=1e-9)
    assert np.all(np.abs(got) > FEE)
    # buyers of base see the external price above the pool
    for s, z in zip(samples, got):
        assert (z > 0) == (s.swap.direction == QUOTE_TO_BASE)


# --- histograms ------------------------------------------------------------

def _samples(z, vol=None, t0=0.0):
    vol = np.ones_like(z) if vol is None else vol
    from cexdex.marketdata import MispriceSample
    return [MispriceSample(SwapRecord(i, t0 + i, BASE_TO_QUOTE, 1.0, 1.0), float(zz), float(zz), float(v))
            for i, (zz, v) in enumerate(zip(z, vol))]


@given(st.lists(st.floats(-0.05, 0.05), min_size=1, max_size=200), st.integers(1, 40))
@settings(max_examples=50, deadline=None)
def test_histogram_conserves_totals(z, n_bins):
    z = np.array(z)
    vol = np.abs(z) + 1.0
    h = misprice_histograms(_samples(z, vol), (-0.01, 0.01, n_bins), n_days=2.0)
    assert h.count_per_day.sum() * 2.0 == pytest.approx(z.size)
    assert h.volume_per_day.sum() * 2.0 == pytest.approx(vol.sum())


def test_single_bin_and_shapes(tmp_path):
    z = -0.01 + 2e-5 * (np.arange(1000) + 0.5)
    h = misprice_histograms(_samples(z), (-0.01, 0.01, 1))
    assert h.count_per_day.tolist() == [1000.0] and h.n_days == 1
    h = misprice_histograms(_samples(z), (-0.01, 0.01, 10))
    assert np.ptp(h.count_per_day) <= 1
    v = np.sign(z) * np.sqrt(np.abs(z) / 0.01) * 0.01  # density rising away from zero
    h = misprice_histograms(_samples(v), (-0.01, 0.01, 10))
    c = h.count_per_day
    assert np.all(np.diff(c[:5]) <= 0) and np.all(np.diff(c[5:]) >= 0)
    h.to_csv(tmp_path / "h.csv")
    assert open(tmp_path / "h.csv").readline().strip() == "bin_midpoint,count_per_day,volume_per_day"
    with pytest.raises(ValueError):
        misprice_histograms([], (-0.01, 0.01, 4))


def test_count_days():
    assert count_days([0.0, 86399.0, 86400.0, 3 * 86400.0 + 5]) == 3


# --- daily activity --------------------------------------------------------

def test_constant_price_day_has_zero_volatility():
    ticks = [PriceTick(float(t), "a", 2000.0, 2000.0) for t in range(0, 86400, 30)]
    rep = daily_activity_report([], ticks)
    assert len(rep.days) == 1
    assert rep.days[0].volatility_pct == 0.0 and not rep.days[0].excluded


def test_gbm_day_volatility():
    rng = np.random.default_rng(11)
    n = 8640
    step = 0.05 / math.sqrt(n)
    mid = 2000 * np.exp(np.cumsum(step * rng.standard_normal(n)))
    ticks = [PriceTick(10.0 * i, "a", float(m), float(m)) for i, m in enumerate(mid)]
    pool = Pool(2000.0, 1e5)
    swaps = [pool.swap(BASE_TO_QUOTE, 0.1 * (i + 1), i, 100.0 * i) for i in range(50)]
    rep = daily_activity_report(swaps, ticks, amount_bins=5)
    (day,) = rep.days
    assert day.volatility_pct == pytest.approx(5.0, rel=0.05)
    assert day.n_swaps == 50 and sum(rep.amount_counts) == 50 and len(rep.amount_edges) == 6


def test_gappy_day_is_excluded():
    ticks = [PriceTick(float(t), "a", 2000.0, 2001.0) for t in range(0, 3600, 10)]
    ticks += [PriceTick(86400.0 + t, "a", 2000.0, 2001.0) for t in (0.0, 500.0)]
    rep = daily_activity_report([], ticks)
    assert [d.excluded for d in rep.days] == [False, True]
    assert math.isnan(rep.days[1].volatility_pct)
    assert '"volatility_pct": null' in rep.to_json()
