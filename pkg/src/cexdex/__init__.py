"""Stationary mispricing densities for CEX-DEX arbitrage under jump diffusion."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .backend import BACKEND
from .kernel import (DensityGrid, FeeBand, GaussianNoise, ModelParams, StudentTNoise,
                     increment_density, log_increment_density, params_from_config,
                     transition_density)
from .stationary import SolverError, SolveSettings, solve_stationary
from .estimators import (ArbReport, PoolSpec, arb_fraction, arb_report, expected_counts,
                         expected_profit_cpmm, expected_volume_cpmm, spread_mixture_fit,
                         trade_region_mass)
from .simulator import SimResult, SimulationOverflow, simulate_chain, simulate_paths
from .calibrate import FitResult, ReturnSeries, fit_params, tau_sweep

__all__ = [
    "__version__", "BACKEND",
    "DensityGrid", "FeeBand", "GaussianNoise", "ModelParams", "StudentTNoise",
    "increment_density", "log_increment_density", "params_from_config", "transition_density",
    "SolverError", "SolveSettings", "solve_stationary",
    "ArbReport", "PoolSpec", "arb_fraction", "arb_report", "expected_counts",
    "expected_profit_cpmm", "expected_volume_cpmm", "spread_mixture_fit", "trade_region_mass",
    "SimResult", "SimulationOverflow", "simulate_chain", "simulate_paths",
    "FitResult", "ReturnSeries", "fit_params", "tau_sweep",
]
