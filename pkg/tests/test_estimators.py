import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from cexdex.estimators import (ArbReport, PoolSpec, arb_fraction, arb_report, event_profit,
                               expected_counts, expected_profit_cfmm, expected_profit_cpmm,
                               expected_volume_cpmm, in_band_mass, spread_mixture_fit,
                               tail_integral, trade_region_mass, volume_down, volume_up)
from cexdex.kernel import DensityGrid, FeeBand, ModelParams, params_from_config, read_config
from cexdex.cli import PRESET_DIR
from cexdex.stationary import SolveSettings, solve_stationary

from conftest import convergence_params


@pytest.fixture(scope="module")
def conv_density():
    params, band = convergence_params(0.1)
    f, _ = solve_stationary(params, band, SolveSettings(n_points=801))
    return f, params, band


def gaussian_grid(s=2e-3, m=0.0, hw=0.02, n=801):
    grid = DensityGrid.symmetric(hw, n)
    return DensityGrid(grid.lower, grid.upper, stats.norm.pdf(grid.x, m, s)).normalized()


# --- pool ------------------------------------------------------------------

def test_pool_validation():
    with pytest.raises(ValueError):
        PoolSpec(0.0)
    with pytest.raises(ValueError):
        PoolSpec(1.0, theta=1.0)
    with pytest.raises(ValueError):
        PoolSpec(100.0, mid_price_w=4.0, liquidity_l=20.0)
    pool = PoolSpec.from_liquidity(20.0, 4.0)
    assert pool.tvl == pytest.approx(80.0, rel=1e-12)
    assert pool.scale == pytest.approx(40.0, rel=1e-12)
    assert PoolSpec(80.0).scale == pytest.approx(40.0, rel=1e-12)


# --- tail masses -----------------------------------------------------------

def test_inside_band_gives_zero(conv_density):
    _, params, band = conv_density
    grid = DensityGrid.symmetric(0.006, 801)
    x = grid.x
    f = DensityGrid(grid.lower, grid.upper, np.where(np.abs(x) < 0.002, 1.0, 0.0)).normalized()
    assert trade_region_mass(f, band) == 0.0
    rep = arb_report(f, band, params, PoolSpec(1e6))
    assert rep.profit_per_step == 0 and rep.volume_per_step == 0
    assert rep.expected_count_up == 0 and rep.expected_count_down == 0


def test_mass_partition(conv_density):
    f, _, band = conv_density
    assert trade_region_mass(f, band) + in_band_mass(f, band) == pytest.approx(1.0, abs=1e-9)


@given(st.floats(1e-4, 0.015), st.floats(1e-4, 0.015), st.floats(-3e-3, 3e-3))
def test_mass_partition_off_node_edges(gp, gm, shift):
    f = gaussian_grid(m=shift)
    band = FeeBand(gp, gm)
    assert trade_region_mass(f, band) + in_band_mass(f, band) == pytest.approx(1.0, abs=1e-9)


def test_band_outside_grid():
    with pytest.raises(ValueError):
        trade_region_mass(gaussian_grid(hw=0.002), FeeBand.symmetric(0.003))


def test_tail_mass_converges_to_continuous_value():
    s = 2e-3
    band = FeeBand(0.00317, 0.00291)  # edges between nodes
    want = stats.norm.sf(band.upper, 0, s) + stats.norm.cdf(band.lower, 0, s)
    err = [abs(trade_region_mass(gaussian_grid(s=s, hw=0.03, n=n), band) - want)
           for n in (1501, 3001, 6001)]
    assert err[-1] < 1e-5 * want
    # second order in the grid spacing
    assert 3.0 < err[0] / err[1] < 5.0 and 3.0 < err[1] / err[2] < 5.0


# --- per-event closed forms vs constant-product swap math ------------------

def cpmm_arbitrage(t, gamma):
    """Profit and pool input (quote value) of one CPMM arbitrage, pool TVL = 1, CEX price 1.

    The pool price starts at e^{-t} and is pushed to the nearer band edge; the fee
    factor is e^{gamma} on the input amount.
    """
    L = 0.5
    p0 = math.exp(-t)
    if t > gamma:  # buy base on the pool, sell it on the CEX
        p1 = math.exp(-gamma)
        quote_in = L * (math.sqrt(p1) - math.sqrt(p0)) * math.exp(gamma)
        base_out = L * (1 / math.sqrt(p0) - 1 / math.sqrt(p1))
        return base_out - quote_in, quote_in
    p1 = math.exp(gamma)  # sell base into the pool
    base_in = L * (1 / math.sqrt(p1) - 1 / math.sqrt(p0)) * math.exp(gamma)
    quote_out = L * (math.sqrt(p0) - math.sqrt(p1))
    return quote_out - base_in, base_in


@given(st.floats(1e-4, 0.02), st.floats(1e-6, 0.05))
def test_closed_forms_match_swap_math(gamma, excess):
    for t, edge in ((gamma + excess, gamma), (-gamma - excess, -gamma)):
        profit, notional = cpmm_arbitrage(t, gamma)
        # the lower-tail profit form carries e^{-gamma/2} where fee-on-input swap
        # math gives e^{+gamma/2}; the upper tail is exact
        factor = 1.0 if t > 0 else math.exp(-gamma)
        assert event_profit(t, edge) == pytest.approx(factor * profit, rel=1e-9, abs=1e-15)
        vol = volume_up(t, edge) if t > 0 else volume_down(t, edge)
        # the volume closed form counts twice the amount paid into the pool
        assert vol == pytest.approx(2 * notional, rel=1e-9, abs=1e-15)
        assert vol >= 0 and profit >= 0


def test_volume_exceeds_profit_near_edges(conv_density):
    f, params, band = conv_density
    pool = PoolSpec(1.0)
    assert expected_volume_cpmm(f, band, params, pool) >= expected_profit_cpmm(f, band, params, pool)


# --- CFMM generalization ---------------------------------------------------

def test_cfmm_half_equals_cpmm(conv_density):
    f, params, band = conv_density
    pool = PoolSpec(86e6)
    assert expected_profit_cfmm(f, band, params, pool) == pytest.approx(
        expected_profit_cpmm(f, band, params, pool), rel=1e-9)


@given(st.floats(0.02, 0.08), st.floats(5, 60), st.floats(0.2, 1.0))
@settings(max_examples=20, deadline=None)
def test_cfmm_half_equals_cpmm_any_density(sigma_ratio, gamma_bp, p):
    f = gaussian_grid(s=sigma_ratio * 0.1)
    band = FeeBand.from_bp(gamma_bp)
    params = ModelParams(0.0, 1e-3, arrival_prob_p=p)
    pool = PoolSpec(1.0)
    assert expected_profit_cfmm(f, band, params, pool) == pytest.approx(
        expected_profit_cpmm(f, band, params, pool), rel=1e-9)


def test_cfmm_theta_against_fine_quadrature():
    theta, s, g = 0.3, 2.5e-3, 0.003
    band = FeeBand.symmetric(g)
    hw = 0.02
    f = gaussian_grid(s=s, hw=hw, n=40001)
    params = ModelParams(0.0, 1e-3, arrival_prob_p=0.7)
    c1 = (theta / (1 - theta)) ** (1 - theta)
    c2 = ((1 - theta) / theta) ** theta
    a = 1 - theta
    z = stats.norm.cdf(hw, 0, s) - stats.norm.cdf(-hw, 0, s)

    def dens(t):
        return stats.norm.pdf(t, 0, s) / z

    opts = dict(epsabs=0, epsrel=1e-11, limit=200)
    up, _ = integrate.quad(lambda t: (c1 * (math.exp(t * a) - math.exp(g * a))
                                      + c2 * (math.exp(g - t * theta) - math.exp(g * a))) * dens(t),
                           g, hw, **opts)
    dn, _ = integrate.quad(lambda t: (c1 * (math.exp(t * a) - math.exp(-g * a))
                                      + c2 * (math.exp(-t * theta - g) - math.exp(-g * a))) * dens(t),
                           -hw, -g, **opts)
    assert arb_fraction(f, band, params, theta) == pytest.approx(0.7 * (up + dn), rel=1e-6)


def test_cfmm_rejects_bad_theta(conv_density):
    f, params, band = conv_density
    with pytest.raises(ValueError):
        arb_fraction(f, band, params, 1.2)


def test_asymmetric_band_rejected(conv_density):
    f, params, _ = conv_density
    band = FeeBand(0.003, 0.002)
    with pytest.raises(ValueError):
        expected_profit_cpmm(f, band, params, PoolSpec(1.0))
    with pytest.raises(ValueError):
        expected_volume_cpmm(f, band, params, PoolSpec(1.0))


# --- scaling and report ----------------------------------------------------

@given(k=st.floats(0.1, 10), p=st.floats(0.05, 0.5))
@settings(max_examples=25, deadline=None)
def test_linear_in_tvl_and_p(conv_density, k, p):
    f, params, band = conv_density
    base = arb_report(f, band, params.with_(arrival_prob_p=p), PoolSpec(1e6))
    tvl = arb_report(f, band, params.with_(arrival_prob_p=p), PoolSpec(k * 1e6))
    arr = arb_report(f, band, params.with_(arrival_prob_p=2 * p), PoolSpec(1e6))
    assert tvl.profit_per_step == pytest.approx(k * base.profit_per_step, rel=1e-12)
    assert tvl.volume_per_step == pytest.approx(k * base.volume_per_step, rel=1e-12)
    assert arr.profit_per_step == pytest.approx(2 * base.profit_per_step, rel=1e-12)
    assert arr.volume_per_step == pytest.approx(2 * base.volume_per_step, rel=1e-12)
    assert arr.expected_count_up == pytest.approx(2 * base.expected_count_up, rel=1e-12)
    assert arr.expected_count_down == pytest.approx(2 * base.expected_count_down, rel=1e-12)


def test_counts_arithmetic(conv_density):
    f, params, band = conv_density
    up, down = expected_counts(f, band, params)
    assert up == pytest.approx(7200 * tail_integral(f, band, "up"), rel=1e-12)
    assert down == pytest.approx(7200 * tail_integral(f, band, "down"), rel=1e-12)
    # a tail of 0.061 at one arrival per 12 s step is about 439 trades a day
    assert 0.061 * params.arrival_prob_p * params.steps_per_day == pytest.approx(439.2)


def test_report_fields_and_json(conv_density):
    f, params, band = conv_density
    rep = arb_report(f, band, params, PoolSpec(86e6))
    d = json.loads(rep.to_json())
    assert all(v >= 0 for v in d.values())
    assert rep.daily_profit == pytest.approx(rep.profit_per_step * 86400 / 12, rel=1e-12)
    assert rep.daily_volume == pytest.approx(rep.volume_per_step * 86400 / 12, rel=1e-12)
    back = ArbReport.from_json(rep.to_json())
    assert back == rep


def test_volume_to_profit_stable_across_cex_spread():
    cfg = read_config(PRESET_DIR / "fitted_tau2.cfg")
    params, band = params_from_config(cfg)
    ratios = []
    for gcex in (0, 10, 20, 30):
        b = FeeBand(band.gamma_plus, band.gamma_minus, gcex * 1e-4)
        f, _ = solve_stationary(params, b, SolveSettings(n_points=401))
        ratios.append(arb_report(f, b, params, PoolSpec(86e6)).volume_to_profit)
    assert (max(ratios) - min(ratios)) / min(ratios) < 0.05


# --- spread mixture --------------------------------------------------------

@pytest.fixture(scope="module")
def spread_components():
    params = ModelParams.from_daily(0.0, 0.05, 0.05, -0.2, 0.2, 1.0, 12.0)
    band = FeeBand.from_bp(30)
    settings = SolveSettings(n_points=401, grid_halfwidth=0.012)
    comps = []
    for g in (0, 10, 20, 30):
        f, _ = solve_stationary(params, FeeBand(band.gamma_plus, band.gamma_minus, g * 1e-4), settings)
        comps.append((g, f))
    return comps


def test_mixture_exact_member(spread_components):
    fit = spread_mixture_fit(spread_components, spread_components[2][1])
    assert np.allclose(fit.weights, [0, 0, 1, 0], atol=1e-6)
    assert not fit.degenerate


def test_mixture_recovers_known_weights(spread_components):
    w = np.array([0.19, 0.19, 0.28, 0.34])
    mix = sum(wi * c.values for wi, (_, c) in zip(w, spread_components))
    rng = np.random.default_rng(7)
    noisy = mix * (1 + 0.01 * rng.standard_normal(mix.size))
    ref = spread_components[0][1]
    fit = spread_mixture_fit(spread_components, DensityGrid(ref.lower, ref.upper, noisy))
    assert np.all(np.abs(fit.weights - w) <= 0.05)
    assert fit.weights.sum() == pytest.approx(1.0, abs=1e-12) and np.all(fit.weights >= 0)
    assert fit.as_dict()[30.0] == pytest.approx(fit.weights[3])


def test_mixture_identical_components_flag_degenerate(spread_components):
    f = spread_components[1][1]
    fit = spread_mixture_fit([(0, f), (10, f)], f)
    assert fit.degenerate
    assert np.allclose(fit.weights, [0.0, 1.0], atol=1e-9)  # lexicographically smallest


def test_mixture_errors(spread_components):
    with pytest.raises(ValueError):
        spread_mixture_fit(spread_components[:1], spread_components[0][1])
    with pytest.raises(ValueError):
        spread_mixture_fit(spread_components, gaussian_grid(n=101))


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4).filter(lambda v: sum(v) > 0.1))
@settings(max_examples=20, deadline=None)
def test_mixture_weights_on_simplex(spread_components, raw):
    w = np.array(raw) / sum(raw)
    mix = sum(wi * c.values for wi, (_, c) in zip(w, spread_components))
    ref = spread_components[0][1]
    fit = spread_mixture_fit(spread_components, DensityGrid(ref.lower, ref.upper, mix))
    assert np.all(fit.weights >= 0) and fit.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert fit.residual <= 1e-8 * np.linalg.norm(mix)
