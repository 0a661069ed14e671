"""Monte Carlo simulation of the clamped mispricing chain.

Random numbers come from NumPy's counter-based Philox generator and are drawn
in fixed-size chunks in a fixed order, so a seed fully determines the path
regardless of backend or thread count.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import backend as _backend
from .kernel import DensityGrid, FeeBand, ModelParams

CHUNK = 1 << 18
N_BATCHES = 100


class SimulationOverflow(RuntimeError):
    """The state left [-1, 1]; carries the step index and state."""

    def __init__(self, step: int, state: float):
        super().__init__(f"mispricing overflow at step {step}: x={state:.6g} (|x| > 1)")
        self.step = step
        self.state = state


@dataclass
class SimResult:
    """Statistics of one (or several merged) simulated paths.

    Profit and volume are in quote units for the ``tvl`` the run was made with
    (TVL units when ``tvl == 1``).
    """

    empirical_density: DensityGrid
    counts: np.ndarray
    realized_profit_per_step: float
    realized_volume_per_step: float
    profit_se: float
    volume_se: float
    tail_up_freq: float
    tail_down_freq: float
    trade_events: int
    n_steps: int
    seed: int
    burn_in: int
    out_of_range: int
    tvl: float = 1.0
    states: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def tail_freq(self) -> float:
        return self.tail_up_freq + self.tail_down_freq

    def to_dict(self) -> dict:
        d = self.empirical_density
        return {
            "seed": self.seed,
            "n_steps": self.n_steps,
            "burn_in": self.burn_in,
            "tvl": self.tvl,
            "realized_profit_per_step": self.realized_profit_per_step,
            "realized_volume_per_step": self.realized_volume_per_step,
            "profit_se": self.profit_se,
            "volume_se": self.volume_se,
            "tail_up_freq": self.tail_up_freq,
            "tail_down_freq": self.tail_down_freq,
            "trade_events": self.trade_events,
            "out_of_range": self.out_of_range,
            "density": {"lower": d.lower, "upper": d.upper, "values": d.values.tolist()},
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


@dataclass
class _Accumulator:
    n_bins: int
    counts: np.ndarray = None
    batch_profit: np.ndarray = None
    batch_volume: np.ndarray = None
    up: int = 0
    down: int = 0
    events: int = 0
    out_of_range: int = 0

    def __post_init__(self):
        self.counts = np.zeros(self.n_bins, dtype=np.int64)
        self.batch_profit = np.zeros(N_BATCHES)
        self.batch_volume = np.zeros(N_BATCHES)


def _bin_index(x: np.ndarray, grid: DensityGrid) -> np.ndarray:
    """Nearest-node bin of each state (bins are centred on the grid nodes)."""
    return np.floor((x - grid.lower) / grid.dx + 0.5).astype(np.int64)


def _run_path(params: ModelParams, band: FeeBand, n_steps: int, rng: np.random.Generator,
              grid: DensityGrid, burn_in: int, x0: float, keep_states: int, impl):
    acc = _Accumulator(grid.n_points)
    batch_len = max(1, n_steps // N_BATCHES)
    kept = []
    total = burn_in + n_steps
    x = x0
    done = 0
    buf_states = np.empty(CHUNK)
    buf_profit = np.empty(CHUNK)
    buf_volume = np.empty(CHUNK)
    while done < total:
        m = min(CHUNK, total - done)
        eps = np.ascontiguousarray(params.noise.sample(rng, m), dtype=float)
        u_arrive = rng.random(m)
        u_jump = rng.random(m)
        jumps = rng.standard_normal(m)
        states, profit, volume = buf_states[:m], buf_profit[:m], buf_volume[:m]
        x, bad = impl.simulate_path(
            x, params.mu_step, params.sigma_step, band.lower, band.upper,
            params.arrival_prob_p, params.jump_prob_q, params.jump_mean, params.jump_std,
            eps, u_arrive, u_jump, jumps, states, profit, volume,
        )
        if bad >= 0:
            raise SimulationOverflow(done + bad, x)
        skip = max(0, burn_in - done)
        if skip < m:
            s = states[skip:]
            pr = profit[skip:]
            vo = volume[skip:]
            idx = _bin_index(s, grid)
            ok = (idx >= 0) & (idx < grid.n_points)
            acc.out_of_range += int(s.size - ok.sum())
            acc.counts += np.bincount(idx[ok], minlength=grid.n_points)
            acc.up += int(np.count_nonzero(s > band.upper))
            acc.down += int(np.count_nonzero(s < band.lower))
            acc.events += int(np.count_nonzero(vo))
            start = done + skip - burn_in
            b = np.minimum((start + np.arange(s.size)) // batch_len, N_BATCHES - 1)
            acc.batch_profit += np.bincount(b, weights=pr, minlength=N_BATCHES)
            acc.batch_volume += np.bincount(b, weights=vo, minlength=N_BATCHES)
            if keep_states and sum(a.size for a in kept) < keep_states:
                kept.append(s[: keep_states - sum(a.size for a in kept)].copy())
        done += m
    states_out = np.concatenate(kept) if kept else np.empty(0)
    return acc, batch_len, states_out


def simulate_chain(params: ModelParams, band: FeeBand, n_steps: int, seed: int,
                   bins: DensityGrid, burn_in: int = 10_000, x0: float = 0.0,
                   tvl: float = 1.0, keep_states: int = 0, backend: str | None = None) -> SimResult:
    """Simulate one path of ``n_steps`` measured steps after ``burn_in`` discarded ones.

    ``bins`` supplies the histogram grid (its values are ignored); each node
    is the centre of one bin.
    """
    return simulate_paths(params, band, n_steps, seed, bins, n_paths=1, threads=1,
                          burn_in=burn_in, x0=x0, tvl=tvl, keep_states=keep_states,
                          backend=backend)


def simulate_paths(params: ModelParams, band: FeeBand, n_steps: int, seed: int,
                   bins: DensityGrid, n_paths: int = 1, threads: int = 1,
                   burn_in: int = 10_000, x0: float = 0.0, tvl: float = 1.0,
                   keep_states: int = 0, backend: str | None = None) -> SimResult:
    """Simulate ``n_paths`` independent paths of ``n_steps`` each and merge them.

    Path ``i`` uses the ``i``-th child of ``SeedSequence(seed)`` (a single path
    uses ``seed`` directly); merging is in path order, so the result does not
    depend on ``threads``.
    """
    if n_steps < N_BATCHES:
        raise ValueError(f"n_steps must be >= {N_BATCHES}")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    impl = _backend.get_backend(backend) if backend else _backend
    if n_paths == 1:
        seqs = [np.random.SeedSequence(seed)]
    else:
        seqs = np.random.SeedSequence(seed).spawn(n_paths)

    def one(ss):
        rng = np.random.Generator(np.random.Philox(ss))
        return _run_path(params, band, n_steps, rng, bins, burn_in, x0, keep_states, impl)

    if threads > 1 and n_paths > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, seqs))
    else:
        results = [one(ss) for ss in seqs]

    total = n_steps * n_paths
    counts = sum(r[0].counts for r in results)
    # batch means: each path contributes its own batches
    p_means, v_means, p_sums, v_sums = [], [], 0.0, 0.0
    for acc, blen, _ in results:
        sizes = np.full(N_BATCHES, float(blen))
        sizes[-1] = n_steps - blen * (N_BATCHES - 1)
        p_means.append(acc.batch_profit / sizes)
        v_means.append(acc.batch_volume / sizes)
        p_sums += acc.batch_profit.sum()
        v_sums += acc.batch_volume.sum()
    p_means = np.concatenate(p_means)
    v_means = np.concatenate(v_means)
    nb = p_means.size
    profit_se = float(np.std(p_means, ddof=1) / math.sqrt(nb))
    volume_se = float(np.std(v_means, ddof=1) / math.sqrt(nb))

    dens = DensityGrid(bins.lower, bins.upper, counts / (total * bins.dx))
    if dens.integral() > 0:
        dens = dens.normalized()
    return SimResult(
        empirical_density=dens,
        counts=counts,
        realized_profit_per_step=tvl * p_sums / total,
        realized_volume_per_step=tvl * v_sums / total,
        profit_se=tvl * profit_se,
        volume_se=tvl * volume_se,
        tail_up_freq=sum(r[0].up for r in results) / total,
        tail_down_freq=sum(r[0].down for r in results) / total,
        trade_events=sum(r[0].events for r in results),
        n_steps=total,
        seed=seed,
        burn_in=burn_in,
        out_of_range=sum(r[0].out_of_range for r in results),
        tvl=tvl,
        states=np.concatenate([r[2] for r in results]) if keep_states else np.empty(0),
    )


def lln_estimate(sim: SimResult, f_star: DensityGrid,
                 phi: Callable[[np.ndarray], np.ndarray] | np.ndarray):
    """Both sides of the ergodic average for a grid function ``phi``.

    The sample side averages ``phi`` over the visited bins; the stationary side
    is the trapezoid integral of ``phi * f_star``.  Returns
    ``(sample_mean, stationary_mean, gap)``.
    """
    if not sim.empirical_density.same_grid(f_star):
        raise ValueError("simulation bins and density grid differ")
    x = f_star.x
    vals = np.asarray(phi(x) if callable(phi) else phi, dtype=float)
    if vals.shape != x.shape:
        raise ValueError("phi must give one value per grid node")
    n_in = sim.counts.sum()
    sample = float(np.dot(sim.counts, vals) / n_in) if n_in else float("nan")
    stationary = float(np.trapezoid(vals * f_star.values, dx=f_star.dx))
    return sample, stationary, abs(sample - stationary)
