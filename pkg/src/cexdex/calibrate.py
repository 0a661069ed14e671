"""Threshold-based jump-diffusion calibration and distributional diagnostics.

Returns are split at ``tau`` robust standard deviations into a diffusive and a
jump part.  Two estimators are offered:

``"censored"`` (default)
    (mu, sigma) by maximum likelihood of a normal truncated to the
    classification window, then (q, mu_J, sigma_J) by maximizing the mixture
    likelihood of the out-of-window returns plus the window count.  This
    corrects for diffusive returns that land outside the window and for small
    jumps that land inside it.
``"threshold"``
    plain moments of the two parts; ``q`` is the raw jump fraction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, special, stats

from .kernel import SECONDS_PER_DAY, ModelParams

MAD_SCALE = 1.482602218505602  # 1 / Phi^-1(3/4)
MIN_OBS = 30


@dataclass
class ReturnSeries:
    timestamps: np.ndarray
    returns: np.ndarray
    dt: float

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.returns = np.asarray(self.returns, dtype=float)
        if self.timestamps.shape != self.returns.shape:
            raise ValueError("timestamps and returns differ in length")
        if self.returns.size == 0:
            raise ValueError("empty return series")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.returns)):
            raise ValueError("returns must be finite")
        if not self.dt > 0:
            raise ValueError("sampling interval must be > 0")

    def __len__(self):
        return self.returns.size

    @classmethod
    def from_prices(cls, timestamps, prices, dt: float | None = None) -> "ReturnSeries":
        """Log-returns of a price path sampled at fixed intervals."""
        t = np.asarray(timestamps, dtype=float)
        p = np.asarray(prices, dtype=float)
        if np.any(p <= 0):
            raise ValueError("prices must be positive")
        if dt is None:
            dt = float(np.median(np.diff(t)))
        return cls(t[1:], np.diff(np.log(p)), dt)

    @classmethod
    def from_returns(cls, returns, dt: float = 12.0) -> "ReturnSeries":
        r = np.asarray(returns, dtype=float)
        return cls(dt * np.arange(1, r.size + 1), r, dt)

    @classmethod
    def from_csv(cls, path: str | Path, dt: float | None = None) -> "ReturnSeries":
        """Read ``timestamp,price`` rows."""
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls.from_prices(data[:, 0], data[:, 1], dt)


@dataclass
class Partition:
    jump: np.ndarray  # boolean mask
    center: float
    scale: float
    tau: float

    @property
    def n_jump(self) -> int:
        return int(self.jump.sum())

    @property
    def n_diffusive(self) -> int:
        return int(self.jump.size - self.jump.sum())

    @property
    def jump_fraction(self) -> float:
        return self.n_jump / self.jump.size

    @property
    def window(self) -> tuple[float, float]:
        return self.center - self.tau * self.scale, self.center + self.tau * self.scale


@dataclass
class FitResult:
    tau: float | None
    log_likelihood: float
    sigma_daily: float
    mu_daily: float
    jump_mean_daily: float
    jump_std_daily: float
    q_step: float
    n_jump_obs: int
    n_diffusive_obs: int
    jump_fraction: float
    step_seconds: float
    method: str = "censored"

    def to_params(self, arrival_prob_p: float = 1.0, step_seconds: float | None = None) -> ModelParams:
        """Model parameters at the fitted sampling step (or another step length)."""
        return ModelParams.from_daily(
            mu_daily=self.mu_daily,
            sigma_daily=self.sigma_daily,
            q_step=self.q_step,
            jump_mean_daily=self.jump_mean_daily,
            jump_std_daily=self.jump_std_daily if self.jump_std_daily > 0 else None,
            p=arrival_prob_p,
            step_seconds=step_seconds or self.step_seconds,
        )


def robust_scale(r: np.ndarray) -> tuple[float, float]:
    """(median, Gaussian-consistent MAD); falls back to the std when MAD is 0."""
    med = float(np.median(r))
    s = MAD_SCALE * float(np.median(np.abs(r - med)))
    if s == 0.0:
        s = float(np.std(r))
    return med, s


def classify_returns(returns: ReturnSeries, tau: float) -> Partition:
    """Mark ``|r - median| >= tau * sigma_hat`` as jumps."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    r = returns.returns
    if r.size < MIN_OBS:
        raise ValueError(f"need at least {MIN_OBS} observations, got {r.size}")
    med, s = robust_scale(r)
    if s == 0.0:
        return Partition(np.zeros(r.size, dtype=bool), med, 0.0, tau)
    return Partition(np.abs(r - med) >= tau * s, med, s, tau)


def _log_norm_pdf(x, m, s):
    z = (x - m) / s
    return -0.5 * z * z - 0.5 * math.log(2.0 * math.pi) - np.log(s)


def mixture_loglik(r: np.ndarray, mu: float, sigma: float, q: float,
                   jump_mean: float, jump_std: float) -> np.ndarray:
    """Pointwise log density of one increment under the Gaussian jump mixture."""
    ld = _log_norm_pdf(r, mu, sigma)
    if q == 0.0:
        return ld
    lj = _log_norm_pdf(r, mu + jump_mean, math.hypot(sigma, jump_std))
    return np.logaddexp(math.log1p(-q) + ld, math.log(q) + lj)


def _window_prob(a, b, m, s):
    return special.ndtr((b - m) / s) - special.ndtr((a - m) / s)


def _truncnorm_fit(x: np.ndarray, a: float, b: float) -> tuple[float, float]:
    """MLE of (mu, sigma) for a normal sample truncated to [a, b]."""
    m0, s0 = float(x.mean()), float(x.std())

    def nll(th):
        m, s = th[0], math.exp(th[1])
        pw = _window_prob(a, b, m, s)
        if not pw > 0:
            return 1e300
        return -float(_log_norm_pdf(x, m, s).sum()) + x.size * math.log(pw)

    res = optimize.minimize(nll, [m0, math.log(s0)], method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 4000})
    return float(res.x[0]), float(math.exp(res.x[1]))


def _censored_jump_fit(r_out: np.ndarray, n_in: int, a: float, b: float, mu: float,
                       sigma: float, q0: float, m0: float, s0: float) -> tuple[float, float, float]:
    """(q, jump_mean, jump_std) with (mu, sigma) held fixed."""

    def nll(th):
        q = special.expit(th[0])
        mj, sj = th[1], math.exp(th[2])
        tot = math.hypot(sigma, sj)
        ll = mixture_loglik(r_out, mu, sigma, q, mj, sj).sum()
        pw = (1 - q) * _window_prob(a, b, mu, sigma) + q * _window_prob(a, b, mu + mj, tot)
        if not pw > 0:
            return 1e300
        return -(float(ll) + n_in * math.log(pw))

    q0 = min(max(q0, 1e-4), 0.5)
    start = [special.logit(q0), m0, math.log(max(s0, 1e-3 * sigma))]
    res = optimize.minimize(nll, start, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 8000})
    return float(special.expit(res.x[0])), float(res.x[1]), float(math.exp(res.x[2]))


def _to_daily(step_seconds: float, mu, sigma, jm, js):
    frac = step_seconds / SECONDS_PER_DAY
    root = math.sqrt(frac)
    return mu / frac, sigma / root, jm / root, js / root


def fit_diffusion(returns: ReturnSeries) -> FitResult:
    """Pure-diffusion fit (no jump component)."""
    r = returns.returns
    mu, sigma = float(r.mean()), float(r.std())
    if sigma == 0.0:
        raise ValueError("zero-variance returns")
    ll = float(mixture_loglik(r, mu, sigma, 0.0, 0.0, 1.0).mean())
    mu_d, s_d, _, _ = _to_daily(returns.dt, mu, sigma, 0.0, 0.0)
    return FitResult(None, ll, s_d, mu_d, 0.0, 0.0, 0.0, 0, r.size, 0.0, returns.dt, "diffusion")


def fit_params(returns: ReturnSeries, tau: float, method: str = "censored") -> FitResult:
    """Fit the jump-diffusion increment law at threshold ``tau``.

    Falls back to :func:`fit_diffusion` (``q = 0``) when either part of the
    partition is empty.
    """
    if method not in ("censored", "threshold"):
        raise ValueError(f"unknown method {method!r}")
    part = classify_returns(returns, tau)
    r = returns.returns
    if part.n_jump == 0 or part.n_diffusive < 2:
        res = fit_diffusion(returns)
        res.tau = tau
        res.n_jump_obs, res.n_diffusive_obs = part.n_jump, part.n_diffusive
        return res
    inner = r[~part.jump]
    outer = r[part.jump]
    mu, sigma = float(inner.mean()), float(inner.std())
    jm = float(outer.mean()) - mu
    js = float(outer.std()) if outer.size > 1 else sigma
    js = math.sqrt(max(js * js - sigma * sigma, (0.1 * sigma) ** 2))
    q = part.jump_fraction
    if method == "censored":
        a, b = part.window
        mu, sigma = _truncnorm_fit(inner, a, b)
        q, jm, js = _censored_jump_fit(outer, inner.size, a, b, mu, sigma, q, jm, js)
    ll = float(mixture_loglik(r, mu, sigma, q, jm, js).mean())
    mu_d, s_d, jm_d, js_d = _to_daily(returns.dt, mu, sigma, jm, js)
    return FitResult(tau, ll, s_d, mu_d, jm_d, js_d, q, part.n_jump, part.n_diffusive,
                     part.jump_fraction, returns.dt, method)


def tau_sweep(returns: ReturnSeries, taus: Sequence[float],
              method: str = "censored") -> tuple[list[FitResult], FitResult]:
    """Fit at every ``tau``; the best is the highest LL, ties to the smaller ``tau``."""
    if len(taus) == 0:
        raise ValueError("empty tau list")
    fits = [fit_params(returns, float(t), method) for t in taus]
    best = max(sorted(fits, key=lambda f: f.tau), key=lambda f: f.log_likelihood)
    return fits, best


FIT_COLUMNS = ("tau", "LL", "sigma", "mu", "mu_J", "sigma_J", "q")


def write_fit_table(fits: Sequence[FitResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIT_COLUMNS)
        for f in fits:
            w.writerow(["--" if f.tau is None else f"{f.tau:g}", f"{f.log_likelihood:.4f}",
                        f"{f.sigma_daily:.4f}", f"{f.mu_daily:.4f}", f"{f.jump_mean_daily:.4f}",
                        f"{f.jump_std_daily:.4f}", f"{f.q_step:.4f}"])


def fit_to_dict(f: FitResult) -> dict:
    return asdict(f)


@dataclass(frozen=True)
class Moments:
    kurtosis: float
    skewness: float
    ks_p_value: float


def moments_and_ks(returns: ReturnSeries | np.ndarray) -> Moments:
    """Raw kurtosis (normal = 3), skewness and a KS p-value against a fitted normal."""
    r = returns.returns if isinstance(returns, ReturnSeries) else np.asarray(returns, dtype=float)
    if r.size < MIN_OBS:
        raise ValueError(f"need at least {MIN_OBS} observations, got {r.size}")
    sd = float(r.std(ddof=1))
    if sd == 0.0:
        raise ValueError("zero-variance returns")
    kurt = float(stats.kurtosis(r, fisher=False))
    skew = float(stats.skew(r))
    p = float(stats.kstest(r, "norm", args=(float(r.mean()), sd), method="asymp").pvalue)
    return Moments(kurt, skew, p)


def synthetic_returns(params: ModelParams, n: int, seed: int) -> ReturnSeries:
    """Unclamped increments ``mu + sigma*eps + Z*U`` of the chain, as a return series."""
    rng = np.random.Generator(np.random.Philox(seed))
    eps = params.noise.sample(rng, n)
    z = rng.random(n) < params.jump_prob_q
    u = params.jump_mean + params.jump_std * rng.standard_normal(n)
    r = params.mu_step + params.sigma_step * eps + np.where(z, u, 0.0)
    return ReturnSeries.from_returns(r, params.step_seconds)
