"""Command-line front end: ``cexdex {solve,fit,estimate,simulate,reproduce,histogram}``.

Exit codes: 0 success, 1 computational failure, 2 usage or configuration error.
Every command writes a ``<command>.meta.json`` sidecar holding the run
timestamp; all other outputs depend only on the configuration and seed.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, backend
from .calibrate import ReturnSeries, fit_diffusion, tau_sweep, write_fit_table
from .estimators import PoolSpec, arb_report
from .kernel import DensityGrid, FeeBand, params_from_config, read_config
from .marketdata import (DataError, daily_activity_report, load_swaps, load_ticks,
                         misprice_histograms, mispricing_series)
from .reproduce import (ReferenceModel, parse_cells, reproduce_profit, reproduce_trade_region,
                        write_profit_csv, write_trade_region_csv)
from .simulator import SimulationOverflow, simulate_paths
from .stationary import SolverError, SolveSettings, l1_distance, solve_stationary

log = logging.getLogger("cexdex")

PRESET_DIR = Path(__file__).parent / "presets"
FIT_TAUS = (1.5, 1.6, 1.7, 1.8, 1.9, 2.0, 2.1, 2.2, 2.3, 2.4, 2.5, 3.0, 3.5, 4.0)


class UsageError(Exception):
    pass


def resolve_config(name: str | None) -> dict[str, str]:
    """Read a config file, or a packaged preset by bare name (e.g. ``convergence``)."""
    if name is None:
        return {}
    path = Path(name)
    if not path.exists():
        preset = PRESET_DIR / f"{name}.cfg"
        if not preset.exists():
            raise UsageError(f"config {name!r} not found (presets: "
                             f"{', '.join(sorted(p.stem for p in PRESET_DIR.glob('*.cfg')))})")
        path = preset
    return read_config(path)


def _override(cfg: dict, args: argparse.Namespace, mapping: dict[str, str]) -> dict:
    out = dict(cfg)
    for attr, key in mapping.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = val
    return out


MODEL_FLAGS = {
    "sigma_daily": "sigma_daily", "mu_daily": "mu_daily", "q": "q_step",
    "jump_mean_daily": "jump_mean_daily", "jump_std_daily": "jump_std_daily", "p": "p",
    "step_seconds": "step_seconds", "gamma_bp": "gamma_bp", "gamma_cex_bp": "gamma_cex_bp",
    "n_points": "n_points", "max_iterations": "max_iterations", "halfwidth": "grid_halfwidth",
    "tvl": "tvl",
}


def _model(cfg: dict):
    try:
        params, band = params_from_config(cfg)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc
    except ValueError as exc:
        raise UsageError(f"invalid model parameters: {exc}") from exc
    return params, band


def _settings(cfg: dict) -> SolveSettings:
    try:
        return SolveSettings(
            n_points=int(cfg.get("n_points", 201)),
            max_iterations=int(cfg.get("max_iterations", 1000)),
            l1_tolerance=float(cfg.get("l1_tolerance", 1e-10)),
            grid_halfwidth=float(cfg["grid_halfwidth"]) if cfg.get("grid_halfwidth") else None,
            init=str(cfg.get("init", "window")),
        )
    except ValueError as exc:
        raise UsageError(f"invalid solver settings: {exc}") from exc


def _write_meta(out: Path, command: str, args: argparse.Namespace, cfg: dict, extra=None) -> None:
    meta = {
        "command": command,
        "version": __version__,
        "backend": backend.BACKEND,
        "seed": args.seed,
        "config": {k: str(v) for k, v in sorted(cfg.items())},
        "run_timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        meta.update(extra)
    (out / f"{command}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_solve(args, cfg, out: Path) -> int:
    cfg = _override(cfg, args, MODEL_FLAGS | {"init": "init"})
    params, band = _model(cfg)
    settings = _settings(cfg)
    f, trace = solve_stationary(params, band, settings)
    f.to_csv(out / "density.csv")
    trace.to_csv(out / "trace.csv")
    _write_meta(out, "solve", args, cfg, {"iterations": trace.iterations,
                                          "converged": trace.converged})
    log.info("solved in %d iterations (converged=%s)", trace.iterations, trace.converged)
    return 0


def cmd_fit(args, cfg, out: Path) -> int:
    if not args.input:
        raise UsageError("fit needs --input (CSV with timestamp,price)")
    path = Path(args.input)
    if not path.exists():
        raise UsageError(f"input {path} does not exist")
    taus = FIT_TAUS if args.taus is None else tuple(float(t) for t in args.taus.split(","))
    series = ReturnSeries.from_csv(path, args.dt)
    fits, best = tau_sweep(series, taus, args.method)
    rows = ([fit_diffusion(series)] if args.with_diffusion else []) + fits
    write_fit_table(rows, out / "fit.csv")
    _write_meta(out, "fit", args, cfg, {"best_tau": best.tau})
    print(f"best tau {best.tau:g}  LL {best.log_likelihood:.4f}")
    return 0


def cmd_estimate(args, cfg, out: Path) -> int:
    cfg = _override(cfg, args, MODEL_FLAGS)
    params, band = _model(cfg)
    pool = PoolSpec(float(cfg.get("tvl", 1.0)), band.gamma_plus / 1e-4)
    sweep = ([float(g) for g in args.gamma_cex_sweep.split(",")]
             if args.gamma_cex_sweep else [band.gamma_cex / 1e-4])
    density = DensityGrid.from_csv(args.density).normalized() if args.density else None
    reports = {}
    for g in sweep:
        b = FeeBand(band.gamma_plus, band.gamma_minus, g * 1e-4)
        if density is None:
            f, _ = solve_stationary(params, b, _settings(cfg))
        else:
            f = density
            if not f.covers(b):
                raise UsageError("density grid does not cover the band")
        rep = arb_report(f, b, params, pool)
        name = "report.json" if len(sweep) == 1 else f"report_gcex{g:g}.json"
        rep.to_json(out / name)
        reports[name] = rep
        print(f"gamma_cex={g:g}bp  P_trade={rep.trade_probability:.4f}  "
              f"daily_volume={rep.daily_volume:.6g}  daily_profit={rep.daily_profit:.6g}  "
              f"volume/profit={rep.volume_to_profit:.1f}")
    _write_meta(out, "estimate", args, cfg, {"reports": sorted(reports)})
    return 0


def cmd_simulate(args, cfg, out: Path) -> int:
    cfg = _override(cfg, args, MODEL_FLAGS | {"steps": "n_steps", "burn_in": "burn_in",
                                              "paths": "n_paths"})
    params, band = _model(cfg)
    settings = _settings(cfg)
    n_steps = int(float(cfg.get("n_steps", 1_000_000)))
    f, _ = solve_stationary(params, band, settings)
    sim = simulate_paths(params, band, n_steps, args.seed, f,
                         n_paths=int(cfg.get("n_paths", 1)), threads=args.threads,
                         burn_in=int(float(cfg.get("burn_in", 10_000))),
                         tvl=float(cfg.get("tvl", 1.0)))
    data = sim.to_dict()
    data["solver_l1_gap"] = l1_distance(sim.empirical_density, f)
    (out / "sim.json").write_text(json.dumps(data, indent=2) + "\n")
    sim.empirical_density.to_csv(out / "empirical_density.csv")
    _write_meta(out, "simulate", args, cfg)
    print(f"L1(empirical, f*) = {data['solver_l1_gap']:.4g}  tail freq = {sim.tail_freq:.4f}")
    return 0


def cmd_reproduce(args, cfg, out: Path) -> int:
    model = ReferenceModel.from_config(cfg)
    try:
        cells = parse_cells(args.cells)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    failed = 0
    if args.table in ("trade", "both"):
        tr = reproduce_trade_region(cells, model, args.max_iterations)
        write_trade_region_csv(tr, out / "trade_region.csv")
        for c in tr:
            print(f"trade  {c.block:>5} {c.gamma_bp:>3}bp  ref {c.reference_pct:5.1f}  "
                  f"got {c.computed_pct:6.2f}  {'ok' if c.ok else 'MISS'}")
        failed += sum(not c.ok for c in tr)
    if args.table in ("profit", "both"):
        pr = reproduce_profit(cells, model=model, max_iterations=args.max_iterations)
        write_profit_csv(pr, out / "profit.csv")
        for c in pr:
            print(f"profit {c.block:>5} q={c.q:<4} {c.gamma_bp:>3}bp  ref {c.reference:.8f}  "
                  f"got {c.computed:.8f}  {'ok' if c.ok else 'MISS'}")
        failed += sum(not c.ok for c in pr)
    _write_meta(out, "reproduce", args, cfg, {"cells_outside_tolerance": failed})
    return 0


def cmd_histogram(args, cfg, out: Path) -> int:
    for flag in ("swaps", "ticks"):
        if not getattr(args, flag):
            raise UsageError(f"histogram needs --{flag}")
        if not Path(getattr(args, flag)).exists():
            raise UsageError(f"--{flag} file {getattr(args, flag)} does not exist")
    swap_err, tick_err = [], []
    swaps = load_swaps(args.swaps, swap_err)
    ticks = load_ticks(args.ticks, tick_err)
    samples, gaps = mispricing_series(swaps, ticks, args.window, args.delay, args.fee,
                                      args.liquidity)
    lo, hi, n = (float(v) for v in args.bins.split(","))
    if samples:
        misprice_histograms(samples, (lo, hi, int(n))).to_csv(out / "histogram.csv")
    daily_activity_report(swaps, ticks).to_json(out / "activity.json")
    _write_meta(out, "histogram", args, cfg, {
        "n_samples": len(samples), "n_gaps": gaps,
        "rejected_rows": {"swaps": swap_err, "ticks": tick_err},
    })
    print(f"{len(samples)} swaps aligned, {gaps} skipped for feed gaps")
    return 0


COMMANDS = {
    "solve": cmd_solve, "fit": cmd_fit, "estimate": cmd_estimate,
    "simulate": cmd_simulate, "reproduce": cmd_reproduce, "histogram": cmd_histogram,
}


def _model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model overrides")
    g.add_argument("--sigma-daily", type=float)
    g.add_argument("--mu-daily")
    g.add_argument("--q", type=float, help="jump probability per step")
    g.add_argument("--jump-mean-daily", type=float)
    g.add_argument("--jump-std-daily", type=float)
    g.add_argument("--p", type=float, help="arbitrageur arrival probability per step")
    g.add_argument("--step-seconds", type=float)
    g.add_argument("--gamma-bp", type=float)
    g.add_argument("--gamma-cex-bp", type=float)
    g.add_argument("--n-points", type=int)
    g.add_argument("--max-iterations", type=int)
    g.add_argument("--halfwidth", type=float, help="grid half-width in log units")
    g.add_argument("--tvl", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cexdex", description="Stationary mispricing densities and arbitrage estimates for CEX-DEX pools.",
        epilog="exit codes: 0 success, 1 computational failure, 2 usage or configuration error")
    parser.add_argument("--config", help="flat key = value file or preset name")
    parser.add_argument("--out", default=".", help="output directory (default: .)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="stationary density by function iteration")
    _model_flags(p)
    p.add_argument("--init", choices=("window", "dirac"))

    p = sub.add_parser("fit", help="jump-threshold calibration over a tau grid")
    p.add_argument("--input", help="CSV with columns timestamp,price")
    p.add_argument("--taus", help="comma-separated thresholds (default: 1.5..4.0 grid)")
    p.add_argument("--dt", type=float, help="sampling interval in seconds (default: inferred)")
    p.add_argument("--method", choices=("censored", "threshold"), default="censored")
    p.add_argument("--with-diffusion", action="store_true", help="add the q = 0 row")

    p = sub.add_parser("estimate", help="trade probability, profit, volume and counts")
    _model_flags(p)
    p.add_argument("--density", help="precomputed density CSV (x,density)")
    p.add_argument("--gamma-cex-sweep", help="comma-separated CEX spreads in bp")

    p = sub.add_parser("simulate", help="Monte Carlo cross-check of the solver")
    _model_flags(p)
    p.add_argument("--steps", type=float)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--paths", type=int)

    p = sub.add_parser("reproduce", help="side-by-side reference tables")
    p.add_argument("--cells", help="subset, e.g. 12sec:30bp,2min:1bp")
    p.add_argument("--table", choices=("trade", "profit", "both"), default="both")
    p.add_argument("--max-iterations", type=int, help="iteration budget per cell")

    p = sub.add_parser("histogram", help="swap mispricing histograms and daily activity")
    p.add_argument("--swaps")
    p.add_argument("--ticks")
    p.add_argument("--window", type=float, default=12.0)
    p.add_argument("--delay", type=float, default=8.0)
    p.add_argument("--fee", type=float, default=0.003)
    p.add_argument("--liquidity", type=float, help="pool invariant L (sqrt of x*y)")
    p.add_argument("--bins", default="-0.01,0.01,40", help="lower,upper,count")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        cfg = resolve_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except UsageError as exc:
        print(f"cexdex {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, SimulationOverflow, DataError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"cexdex {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"cexdex {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
