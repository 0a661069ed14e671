"""Time the compiled core against the NumPy fallback.

    python benchmarks/bench_backends.py [--n-points 801] [--steps 1000000] [--repeat 5]

Prints best-of-``repeat`` wall time per kernel and the speedup, and checks that
both backends return identical arrays.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from cexdex.backend import get_backend


def toeplitz_case(n: int, rng: np.random.Generator):
    return (rng.random(2 * n - 2), rng.random(2 * n - 2), rng.random(n), rng.random(n))


def path_case(steps: int, rng: np.random.Generator):
    sigma = 5.9e-4
    draws = (rng.standard_normal(steps), rng.random(steps), rng.random(steps), rng.standard_normal(steps))
    head = (0.0, 0.5 * sigma**2, sigma, -0.003, 0.003, 1.0, 0.05, 0.0, 2.3e-3)
    return head, draws


def run_path(impl, head, draws):
    n = draws[0].size
    states, profit, volume = np.empty(n), np.empty(n), np.empty(n)
    impl.simulate_path(*head, *draws, states, profit, volume)
    return states, profit, volume


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-points", type=int, default=801)
    ap.add_argument("--steps", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    try:
        compiled = get_backend("compiled")
    except ImportError:
        print("compiled core not built; nothing to compare")
        return 1
    python = get_backend("python")
    rng = np.random.default_rng(0)

    tcase = toeplitz_case(args.n_points, rng)
    assert np.array_equal(compiled.toeplitz_assemble(*tcase), python.toeplitz_assemble(*tcase))
    # the Python loop is slow, so its path is timed on a tenth of the steps
    head, draws = path_case(args.steps, rng)
    short = tuple(d[: args.steps // 10] for d in draws)
    for a, b in zip(run_path(compiled, head, short), run_path(python, head, short)):
        assert np.array_equal(a, b)

    rows = []
    tc = best_of(lambda: compiled.toeplitz_assemble(*tcase), args.repeat)
    tp = best_of(lambda: python.toeplitz_assemble(*tcase), args.repeat)
    rows.append((f"toeplitz_assemble n={args.n_points}", tc, tp))
    tc = best_of(lambda: run_path(compiled, head, draws), args.repeat) / 10
    tp = best_of(lambda: run_path(python, head, short), max(1, args.repeat // 2))
    rows.append((f"simulate_path {args.steps // 10} steps", tc, tp))

    print(f"{'kernel':<32}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}")
    for name, c, p in rows:
        print(f"{name:<32}{c:>14.5f}{p:>14.5f}{p / c:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
