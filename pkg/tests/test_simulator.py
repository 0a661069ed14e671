import json
import math

import numpy as np
import pytest
from scipy import stats

from cexdex import backend
from cexdex.estimators import trade_region_mass
from cexdex.kernel import DensityGrid, FeeBand, ModelParams
from cexdex.simulator import SimulationOverflow, lln_estimate, simulate_chain, simulate_paths
from cexdex.stationary import SolveSettings, make_grid, solve_stationary

from conftest import convergence_params

compiled_only = pytest.mark.skipif(backend.BACKEND != "compiled", reason="compiled core not built")


@pytest.fixture(scope="module")
def setup_q05():
    params, band = convergence_params(0.05)
    f, _ = solve_stationary(params, band, SolveSettings(n_points=201))
    return params, band, f


def same_result(a, b):
    return (np.array_equal(a.counts, b.counts)
            and a.realized_profit_per_step == b.realized_profit_per_step
            and a.realized_volume_per_step == b.realized_volume_per_step
            and a.profit_se == b.profit_se
            and a.tail_up_freq == b.tail_up_freq and a.tail_down_freq == b.tail_down_freq
            and a.trade_events == b.trade_events)


def test_seed_determinism(setup_q05):
    params, band, f = setup_q05
    a = simulate_chain(params, band, 300_000, 11, f)
    b = simulate_chain(params, band, 300_000, 11, f)
    c = simulate_chain(params, band, 300_000, 12, f)
    assert same_result(a, b)
    assert a.to_json() == b.to_json()
    assert not np.array_equal(a.counts, c.counts)


def test_thread_count_does_not_matter(setup_q05):
    params, band, f = setup_q05
    one = simulate_paths(params, band, 100_000, 5, f, n_paths=4, threads=1)
    four = simulate_paths(params, band, 100_000, 5, f, n_paths=4, threads=4)
    assert same_result(one, four)
    assert one.n_steps == 400_000


@compiled_only
def test_backends_bit_identical(setup_q05):
    params, band, f = setup_q05
    a = simulate_chain(params, band, 200_000, 3, f, backend="compiled", keep_states=50_000)
    b = simulate_chain(params, band, 200_000, 3, f, backend="python", keep_states=50_000)
    assert np.array_equal(a.states, b.states)
    assert same_result(a, b)


def test_result_invariants(setup_q05):
    params, band, f = setup_q05
    sim = simulate_chain(params, band, 200_000, 1, f)
    assert sim.empirical_density.integral() == pytest.approx(1.0, abs=1e-9)
    assert 0 <= sim.tail_up_freq <= 1 and 0 <= sim.tail_down_freq <= 1
    assert sim.out_of_range == 0
    assert sim.counts.sum() == sim.n_steps
    d = json.loads(sim.to_json())
    assert d["seed"] == 1 and d["n_steps"] == 200_000 and len(d["density"]["values"]) == f.n_points


def test_random_walk_increment_variance():
    params = ModelParams(0.0, 1e-3, arrival_prob_p=1e-300)
    band = FeeBand.symmetric(0.003)
    bins = DensityGrid.symmetric(0.9, 101)
    sim = simulate_chain(params, band, 200_000, 2, bins, burn_in=0, keep_states=200_000)
    inc = np.diff(sim.states)
    n = inc.size
    se = params.sigma_step**2 * math.sqrt(2.0 / n)
    assert abs(inc.var() - params.sigma_step**2) < 3 * se
    assert sim.trade_events == 0 and sim.realized_profit_per_step == 0.0


def test_in_band_increments_are_gaussian():
    params, band = convergence_params(0.0)
    bins = make_grid(params, band, SolveSettings(n_points=201))
    sim = simulate_chain(params, band, 400_000, 4, bins, keep_states=400_000)
    x = sim.states
    inside = (x[:-1] >= band.lower) & (x[:-1] <= band.upper)
    inc = (x[1:] - x[:-1])[inside][:100_000]
    assert inc.size == 100_000
    p = stats.kstest(inc, "norm", args=(params.mu_step, params.sigma_step)).pvalue
    assert p > 0.01


def test_overflow_is_reported():
    params = ModelParams(0.0, 0.3, arrival_prob_p=1e-300)
    band = FeeBand.symmetric(0.003)
    with pytest.raises(SimulationOverflow) as info:
        simulate_chain(params, band, 10_000, 0, DensityGrid.symmetric(1.0, 101), burn_in=0)
    assert abs(info.value.state) > 1 and info.value.step >= 0


def test_rejects_short_runs(setup_q05):
    params, band, f = setup_q05
    with pytest.raises(ValueError):
        simulate_chain(params, band, 10, 0, f)


def test_tail_frequency_tracks_solver():
    params, band = convergence_params(0.0)
    f, _ = solve_stationary(params, band, SolveSettings(n_points=401))
    sim = simulate_chain(params, band, 2_000_000, 9, f)
    assert abs(sim.tail_freq - trade_region_mass(f, band)) < 0.01


def test_lln_identities(setup_q05):
    params, band, f = setup_q05
    sim = simulate_chain(params, band, 500_000, 8, f)
    s, st_, gap = lln_estimate(sim, f, lambda x: np.ones_like(x))
    assert s == pytest.approx(1.0, abs=1e-12)
    assert st_ == pytest.approx(1.0, abs=1e-9) and gap < 1e-9
    tails = (f.x < band.lower) | (f.x > band.upper)
    s, st_, gap = lln_estimate(sim, f, tails.astype(float))
    assert gap < 0.01
    with pytest.raises(ValueError):
        lln_estimate(sim, DensityGrid.symmetric(0.01, 101), np.ones(101))
