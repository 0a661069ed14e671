"""Model parameters, fee bands and the one-step densities of the mispricing chain.

The mispricing ``x`` is the log ratio of the external (CEX) price to the pool
(DEX) price.  One chain step adds ``mu + sigma * eps + Z * U`` where ``eps`` has
a standardized noise density, ``Z ~ Bernoulli(q)`` flags a jump and
``U ~ N(jump_mean, jump_std**2)`` is the jump size.  An arbitrageur arrives with
probability ``p`` and, if the state is outside the no-arbitrage band, resets it
to the nearest band edge before the next increment is added.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np
from scipy import stats

from .quadrature import gk15_panels

SECONDS_PER_DAY = 86400.0
BP = 1e-4

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_NOISE_WINDOW = 40.0
_CONV_PANELS = 24


class NoiseDensity(Protocol):
    """Standardized (zero mean, unit variance) density of the diffusive noise."""

    name: str

    def logpdf(self, z: np.ndarray) -> np.ndarray: ...

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianNoise:
    name: str = "gaussian"

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        return -0.5 * z * z - _LOG_SQRT_2PI

    def sample(self, rng, size):
        return rng.standard_normal(size)


@dataclass(frozen=True)
class StudentTNoise:
    """Student-t noise rescaled to unit variance (requires ``df > 2``)."""

    df: float = 4.0
    name: str = "student_t"

    def __post_init__(self):
        if not self.df > 2.0:
            raise ValueError(f"Student-t noise needs df > 2 for unit variance, got {self.df}")

    @property
    def scale(self) -> float:
        return math.sqrt((self.df - 2.0) / self.df)

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        return stats.t.logpdf(z / self.scale, self.df) - math.log(self.scale)

    def sample(self, rng, size):
        return rng.standard_t(self.df, size) * self.scale


def make_noise(name: str, df: float | None = None) -> NoiseDensity:
    if name in ("gaussian", "normal"):
        return GaussianNoise()
    if name in ("student_t", "t"):
        return StudentTNoise(df=4.0 if df is None else float(df))
    raise ValueError(f"unknown noise family {name!r}")


@dataclass(frozen=True)
class ModelParams:
    """Per-step parameters of the price chain.

    All location/scale quantities are in log-return units for one chain step of
    ``step_seconds`` seconds.  ``jump_prob_q`` and ``arrival_prob_p`` are
    per-step probabilities.
    """

    mu_step: float
    sigma_step: float
    jump_prob_q: float = 0.0
    jump_mean: float = 0.0
    jump_std: float = 1e-3
    arrival_prob_p: float = 1.0
    step_seconds: float = 12.0
    noise: NoiseDensity = field(default_factory=GaussianNoise)

    def __post_init__(self):
        if not self.sigma_step > 0:
            raise ValueError(f"sigma_step must be > 0, got {self.sigma_step}")
        if not 0.0 <= self.jump_prob_q < 1.0:
            raise ValueError(f"jump_prob_q must lie in [0, 1), got {self.jump_prob_q}")
        if not 0.0 < self.arrival_prob_p <= 1.0:
            raise ValueError(f"arrival_prob_p must lie in (0, 1], got {self.arrival_prob_p}")
        if not self.jump_std > 0:
            raise ValueError(f"jump_std must be > 0, got {self.jump_std}")
        if not self.step_seconds > 0:
            raise ValueError(f"step_seconds must be > 0, got {self.step_seconds}")

    @property
    def steps_per_day(self) -> float:
        return SECONDS_PER_DAY / self.step_seconds

    @classmethod
    def from_daily(
        cls,
        mu_daily: float,
        sigma_daily: float,
        q_step: float = 0.0,
        jump_mean_daily: float = 0.0,
        jump_std_daily: float | None = None,
        p: float = 1.0,
        step_seconds: float = 12.0,
        noise: NoiseDensity | None = None,
    ) -> "ModelParams":
        """Build per-step parameters from daily ones.

        Drift scales linearly with the step length; volatility and both jump
        moments scale with its square root.  ``q_step`` is already per step.
        """
        frac = step_seconds / SECONDS_PER_DAY
        if jump_std_daily is None:
            jump_std = 1e-3
        else:
            jump_std = jump_std_daily * math.sqrt(frac)
        return cls(
            mu_step=mu_daily * frac,
            sigma_step=sigma_daily * math.sqrt(frac),
            jump_prob_q=q_step,
            jump_mean=jump_mean_daily * math.sqrt(frac),
            jump_std=jump_std,
            arrival_prob_p=p,
            step_seconds=step_seconds,
            noise=noise if noise is not None else GaussianNoise(),
        )

    def to_daily(self) -> dict[str, float]:
        frac = self.step_seconds / SECONDS_PER_DAY
        return {
            "mu_daily": self.mu_step / frac,
            "sigma_daily": self.sigma_step / math.sqrt(frac),
            "q_step": self.jump_prob_q,
            "jump_mean_daily": self.jump_mean / math.sqrt(frac),
            "jump_std_daily": self.jump_std / math.sqrt(frac),
            "p": self.arrival_prob_p,
            "step_seconds": self.step_seconds,
        }

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class FeeBand:
    """No-arbitrage band in log units; ``gamma_cex`` widens both edges."""

    gamma_plus: float
    gamma_minus: float
    gamma_cex: float = 0.0

    def __post_init__(self):
        if not (self.gamma_plus > 0 and self.gamma_minus > 0):
            raise ValueError("band edges must be positive")
        if self.gamma_cex < 0:
            raise ValueError("gamma_cex must be >= 0")

    @classmethod
    def symmetric(cls, gamma: float, gamma_cex: float = 0.0) -> "FeeBand":
        return cls(gamma, gamma, gamma_cex)

    @classmethod
    def from_bp(cls, gamma_bp: float, gamma_cex_bp: float = 0.0,
                gamma_minus_bp: float | None = None) -> "FeeBand":
        minus = gamma_bp if gamma_minus_bp is None else gamma_minus_bp
        return cls(gamma_bp * BP, minus * BP, gamma_cex_bp * BP)

    @property
    def upper(self) -> float:
        return self.gamma_plus + self.gamma_cex

    @property
    def lower(self) -> float:
        return -(self.gamma_minus + self.gamma_cex)

    @property
    def is_symmetric(self) -> bool:
        return math.isclose(self.gamma_plus, self.gamma_minus, rel_tol=1e-12, abs_tol=0.0)

    @property
    def half_width(self) -> float:
        return max(self.upper, -self.lower)


@dataclass
class DensityGrid:
    """Density values on a uniform grid of ``n_points`` nodes over [lower, upper]."""

    lower: float
    upper: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.values.size
        if n < 3 or n % 2 == 0:
            raise ValueError(f"grid needs an odd number of nodes >= 3, got {n}")
        if not self.lower < self.upper:
            raise ValueError("grid lower bound must be below upper bound")

    @classmethod
    def zeros(cls, lower: float, upper: float, n_points: int) -> "DensityGrid":
        return cls(lower, upper, np.zeros(n_points))

    @classmethod
    def symmetric(cls, half_width: float, n_points: int) -> "DensityGrid":
        return cls.zeros(-half_width, half_width, n_points)

    @property
    def n_points(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.n_points)

    @property
    def dx(self) -> float:
        return (self.upper - self.lower) / (self.n_points - 1)

    def integral(self) -> float:
        return float(np.trapezoid(self.values, dx=self.dx))

    def normalized(self) -> "DensityGrid":
        total = self.integral()
        if not total > 0:
            raise ValueError("cannot normalize a density with non-positive mass")
        return DensityGrid(self.lower, self.upper, self.values / total)

    def same_grid(self, other: "DensityGrid") -> bool:
        return (
            self.n_points == other.n_points
            and math.isclose(self.lower, other.lower, rel_tol=1e-12, abs_tol=1e-15)
            and math.isclose(self.upper, other.upper, rel_tol=1e-12, abs_tol=1e-15)
        )

    def covers(self, band: FeeBand) -> bool:
        return self.lower < band.lower and self.upper > band.upper

    def __call__(self, t) -> np.ndarray:
        """Piecewise-linear interpolant, zero outside the grid."""
        return np.interp(t, self.x, self.values, left=0.0, right=0.0)

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack([self.x, self.values])
        np.savetxt(path, data, delimiter=",", header="x,density", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: str | Path) -> "DensityGrid":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(float(data[0, 0]), float(data[-1, 0]), data[:, 1])


def clamp_to_band(x, band: FeeBand):
    """Reset mispricings outside the band to the nearest (effective) edge."""
    out = np.clip(x, band.lower, band.upper)
    return float(out) if np.ndim(out) == 0 else out


def _jump_log_convolution(y: np.ndarray, params: ModelParams) -> np.ndarray:
    """log of the density of ``mu + sigma*eps + U`` at ``y``."""
    sigma, mu = params.sigma_step, params.mu_step
    s_j, m_j = params.jump_std, params.jump_mean
    if isinstance(params.noise, GaussianNoise):
        s = math.hypot(sigma, s_j)
        z = (y - mu - m_j) / s
        return -0.5 * z * z - _LOG_SQRT_2PI - math.log(s)
    # Integrate over the jump size u.  The integrand has two bumps: the jump
    # law around m_j and the noise peak at u = y - mu.  Window A covers the
    # former; window B (minus its overlap with A) covers the latter.
    y = np.asarray(y, dtype=float)
    a_lo = np.full_like(y, m_j - 12.0 * s_j)
    a_hi = np.full_like(y, m_j + 12.0 * s_j)
    b_lo = y - mu - _NOISE_WINDOW * sigma
    b_hi = y - mu + _NOISE_WINDOW * sigma
    lo = np.stack([a_lo, b_lo, np.maximum(b_lo, a_hi)], axis=-1)
    hi = np.stack([a_hi, np.minimum(b_hi, a_lo), b_hi], axis=-1)
    hi = np.maximum(hi, lo)
    u, w = gk15_panels(lo, hi, _CONV_PANELS)
    log_u = -0.5 * ((u - m_j) / s_j) ** 2 - _LOG_SQRT_2PI - math.log(s_j)
    log_f = params.noise.logpdf((y[..., None] - mu - u) / sigma) - math.log(sigma)
    with np.errstate(divide="ignore"):
        log_terms = log_u + log_f + np.log(w)
    m = log_terms.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.exp(log_terms - m).sum(axis=-1, keepdims=True)))[..., 0]


def log_increment_density(y, params: ModelParams):
    """log of the one-step increment density, stable for tiny ``sigma_step``.

    The diffusive and jump terms are combined in log space, so neither the
    ``1/sigma`` prefactor nor the exponent is ever materialized on its own.
    """
    y = np.asarray(y, dtype=float)
    sigma = params.sigma_step
    if not sigma > 0:
        raise ValueError("sigma_step must be > 0")
    log_diff = params.noise.logpdf((y - params.mu_step) / sigma) - math.log(sigma)
    q = params.jump_prob_q
    if q == 0.0:
        out = log_diff
    else:
        log_jump = _jump_log_convolution(y, params)
        out = np.logaddexp(math.log1p(-q) + log_diff, math.log(q) + log_jump)
    return float(out) if out.ndim == 0 else out


def increment_density(y, params: ModelParams):
    """Density of one chain increment ``X_{n+1} - X_n`` (state independent)."""
    if not params.sigma_step > 0:
        raise ValueError("sigma_step must be > 0")
    out = np.exp(log_increment_density(y, params))
    return float(out) if np.ndim(out) == 0 else out


def transition_density(x, y, params: ModelParams, band: FeeBand):
    """Density of the next mispricing ``y`` given the current one ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = params.arrival_prob_p
    xt = np.clip(x, band.lower, band.upper)
    out = (1.0 - p) * increment_density(y - x, params) + p * increment_density(y - xt, params)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# flat key-value config files
# ---------------------------------------------------------------------------

PARAM_KEYS = (
    "mu_daily", "sigma_daily", "q_step", "jump_mean_daily", "jump_std_daily",
    "p", "step_seconds", "gamma_bp", "gamma_cex_bp",
)


def read_config(path: str | Path) -> dict[str, str]:
    """Read a flat ``key = value`` file (``#`` comments, no sections)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string("[config]\n" + text)
    return dict(parser["config"])


def write_config(path: str | Path, values: Mapping[str, object]) -> None:
    lines = [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def params_from_config(cfg: Mapping[str, object]) -> tuple[ModelParams, FeeBand]:
    """Build ``(ModelParams, FeeBand)`` from flat config values.

    ``p`` may be replaced by ``block_seconds``, in which case the arrival
    probability per step is ``step_seconds / block_seconds``.
    """
    missing = [k for k in ("sigma_daily", "gamma_bp") if k not in cfg]
    if missing:
        raise KeyError(f"missing config keys: {', '.join(missing)}")

    def num(key, default=None):
        val = cfg.get(key, default)
        return None if val is None else float(val)

    step_seconds = num("step_seconds", 12.0)
    if "p" in cfg:
        p = num("p")
    elif "block_seconds" in cfg:
        p = step_seconds / num("block_seconds")
    else:
        p = 1.0
    sigma_daily = num("sigma_daily")
    mu = cfg.get("mu_daily", 0.0)
    mu_daily = 0.5 * sigma_daily**2 if str(mu).strip() == "sigma2/2" else float(mu)
    noise = make_noise(str(cfg.get("noise", "gaussian")).strip(), num("noise_df"))
    params = ModelParams.from_daily(
        mu_daily=mu_daily,
        sigma_daily=sigma_daily,
        q_step=num("q_step", 0.0),
        jump_mean_daily=num("jump_mean_daily", 0.0),
        jump_std_daily=num("jump_std_daily"),
        p=p,
        step_seconds=step_seconds,
        noise=noise,
    )
    if "jump_std_step" in cfg:
        params = params.with_(jump_std=num("jump_std_step"))
    if "jump_mean_step" in cfg:
        params = params.with_(jump_mean=num("jump_mean_step"))
    band = FeeBand.from_bp(num("gamma_bp"), num("gamma_cex_bp", 0.0), num("gamma_minus_bp"))
    return params, band


def params_to_config(params: ModelParams, band: FeeBand) -> dict[str, float]:
    daily = params.to_daily()
    return {
        "mu_daily": daily["mu_daily"],
        "sigma_daily": daily["sigma_daily"],
        "q_step": daily["q_step"],
        "jump_mean_daily": daily["jump_mean_daily"],
        "jump_std_daily": daily["jump_std_daily"],
        "p": daily["p"],
        "step_seconds": daily["step_seconds"],
        "gamma_bp": band.gamma_plus / BP,
        "gamma_minus_bp": band.gamma_minus / BP,
        "gamma_cex_bp": band.gamma_cex / BP,
    }
