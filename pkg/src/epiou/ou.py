"""Ornstein-Uhlenbeck process: exact and Euler sampling, moments, parameter maps.

The process is dX = (k - mu*X) dt + sigma dW.  Sampled on a uniform grid of
step h it is an AR(1) sequence, which motivates the canonical parameterization
(alpha, beta, gamma) = (k/mu, exp(-mu*h), conditional precision of one step).
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "OuParams",
    "CanonicalParams",
    "Trajectory",
    "ou_mean_cov",
    "sample_exact",
    "sample_exact_ensemble",
    "sample_euler",
    "sample_euler_ensemble",
    "perturbed_params",
    "exactifying_params",
    "to_canonical",
    "from_canonical",
]


@dataclass(frozen=True)
class OuParams:
    """Parameters of dX = (k - mu*X) dt + sigma dW.

    sigma == 0 (a deterministic relaxation path) is only accepted when
    constructed with allow_degenerate=True; it is useful as a noiseless
    oracle for estimators.
    """

    k: float
    mu: float
    sigma: float
    allow_degenerate: InitVar[bool] = False

    def __post_init__(self, allow_degenerate):
        for name in ("k", "mu", "sigma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mu <= 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.sigma == 0.0 and not allow_degenerate:
            raise ValueError("sigma must be positive (pass allow_degenerate=True for a noiseless process)")

    @property
    def stationary_mean(self) -> float:
        return self.k / self.mu

    @property
    def stationary_var(self) -> float:
        return self.sigma**2 / (2.0 * self.mu)


@dataclass(frozen=True)
class CanonicalParams:
    """AR(1) form of the sampled process: X_{i+1} = beta*X_i + alpha*(1-beta) + gamma**-0.5 * xi_i.

    alpha is the stationary mean, beta the one-step autocorrelation exp(-mu*h)
    and gamma the precision of the conditional one-step distribution.
    """

    alpha: float
    beta: float
    gamma: float
    h: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError(f"h must be positive, got {self.h}")

    @property
    def delta(self) -> float:
        """Intercept alpha*(1-beta) of the AR(1) recursion."""
        return self.alpha * (1.0 - self.beta)

    @property
    def stationary_var(self) -> float:
        return 1.0 / (self.gamma * (1.0 - self.beta**2))

    @property
    def stationary_sd(self) -> float:
        return math.sqrt(self.stationary_var)


@dataclass
class Trajectory:
    """Uniformly sampled path: values[i] is the state at t0 + i*h."""

    t0: float
    h: float
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("values must be a non-empty 1-D array")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError("step h must be positive")
        if not math.isfinite(self.t0):
            raise ValueError("t0 must be finite")

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.values.size)


def _check_finite(**kwargs):
    for name, v in kwargs.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


def ou_mean_cov(p: OuParams, x0: float, t: float, s: float | None = None):
    """Exact mean E[X_t] and covariance Cov[X_t, X_s] given X_0 = x0.

    With s omitted, the second return value is Var[X_t].
    """
    if s is None:
        s = t
    _check_finite(x0=x0, t=t, s=s)
    if t < 0.0 or s < 0.0:
        raise ValueError("t and s must be nonnegative")
    emt = math.exp(-p.mu * t)
    mean = p.k / p.mu * (1.0 - emt) + emt * x0
    cov = p.sigma**2 / (2.0 * p.mu) * (math.exp(-p.mu * abs(t - s)) - math.exp(-p.mu * (t + s)))
    return mean, cov


def to_canonical(p: OuParams, h: float) -> CanonicalParams:
    """Map (k, mu, sigma) at sampling step h to (alpha, beta, gamma)."""
    _check_finite(h=h)
    if h <= 0.0:
        raise ValueError("h must be positive")
    if p.sigma == 0.0:
        raise ValueError("canonical gamma is undefined for sigma == 0")
    beta = math.exp(-p.mu * h)
    gamma = 2.0 * p.mu / p.sigma**2 / (1.0 - beta**2)
    return CanonicalParams(alpha=p.k / p.mu, beta=beta, gamma=gamma, h=h)


def from_canonical(u: CanonicalParams) -> OuParams:
    """Inverse of to_canonical."""
    mu = -math.log(u.beta) / u.h
    k = u.alpha * mu
    sigma = math.sqrt(2.0 * mu / (u.gamma * (1.0 - u.beta**2)))
    return OuParams(k=k, mu=mu, sigma=sigma)


def _ar1_coefficients(p: OuParams, h: float):
    """(slope, intercept, innovation sd) of the exact one-step recursion."""
    beta = math.exp(-p.mu * h)
    alpha = p.k / p.mu
    sd = math.sqrt(p.stationary_var * (1.0 - beta**2))
    return beta, alpha * (1.0 - beta), sd


def _ar1_path(x0: float, slope: float, intercept: float, noise: np.ndarray) -> np.ndarray:
    """x[0] = x0 and x[i+1] = slope*x[i] + intercept + noise[i]."""
    out = np.empty(noise.size + 1)
    out[0] = x0
    if noise.size:
        drive = noise + intercept
        out[1:], _ = lfilter([1.0], [1.0, -slope], drive, zi=np.array([slope * x0]))
    return out


def sample_exact(p: OuParams, x0: float, h: float, n: int, seed=None) -> Trajectory:
    """Draw (x0, X_1, ..., X_n) from the exact finite-dimensional OU law.

    One standard normal variate is consumed per step, so paths are
    reproducible for a given seed regardless of internals.
    """
    _check_finite(x0=x0, h=h)
    if h <= 0.0:
        raise ValueError("h must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    slope, intercept, sd = _ar1_coefficients(p, h)
    rng = np.random.default_rng(seed)
    noise = sd * rng.standard_normal(n)
    return Trajectory(t0=0.0, h=h, values=_ar1_path(x0, slope, intercept, noise), seed=seed)


def _ensemble_paths(x0, slope, intercept, sd, n, n_paths, seed):
    rng = np.random.default_rng(seed)
    noise = sd * rng.standard_normal((n_paths, n))
    out = np.empty((n_paths, n + 1))
    out[:, 0] = x0
    drive = noise + intercept
    zi = (slope * out[:, 0])[:, None]
    out[:, 1:], _ = lfilter([1.0], [1.0, -slope], drive, axis=1, zi=zi)
    return out


def sample_exact_ensemble(p: OuParams, x0, h: float, n: int, n_paths: int, seed=None) -> np.ndarray:
    """(n_paths, n+1) matrix of independent exact paths; x0 may be per-path."""
    if h <= 0.0 or n < 1 or n_paths < 1:
        raise ValueError("need h > 0, n >= 1, n_paths >= 1")
    slope, intercept, sd = _ar1_coefficients(p, h)
    return _ensemble_paths(np.broadcast_to(np.asarray(x0, dtype=float), (n_paths,)), slope, intercept, sd, n, n_paths, seed)


def sample_euler_ensemble(p: OuParams, x0, dt: float, n: int, n_paths: int, seed=None) -> np.ndarray:
    """(n_paths, n+1) matrix of independent forward-Euler paths."""
    if dt <= 0.0 or n < 1 or n_paths < 1:
        raise ValueError("need dt > 0, n >= 1, n_paths >= 1")
    if p.mu * dt >= 1.0:
        raise ValueError(f"dt must be < 1/mu = {1.0 / p.mu}, got {dt}")
    sd = p.sigma * math.sqrt(dt)
    return _ensemble_paths(np.broadcast_to(np.asarray(x0, dtype=float), (n_paths,)), 1.0 - p.mu * dt, p.k * dt, sd, n, n_paths, seed)


def sample_euler(p: OuParams, x0: float, dt: float, n: int, seed=None) -> Trajectory:
    """Forward-Euler path X_{i+1} = X_i + (k - mu*X_i)*dt + sigma*sqrt(dt)*xi_i.

    Requires dt < 1/mu so that the discrete chain is a contraction and maps
    back onto an exact OU law (see perturbed_params).
    """
    _check_finite(x0=x0, dt=dt)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    if p.mu * dt >= 1.0:
        raise ValueError(f"dt must be < 1/mu = {1.0 / p.mu}, got {dt}")
    rng = np.random.default_rng(seed)
    noise = p.sigma * math.sqrt(dt) * rng.standard_normal(n)
    return Trajectory(t0=0.0, h=dt, values=_ar1_path(x0, 1.0 - p.mu * dt, p.k * dt, noise), seed=seed)


def euler_mean_var(p: OuParams, x0: float, dt: float, n: int):
    """Closed-form mean and variance of the Euler chain after n steps."""
    a = 1.0 - p.mu * dt
    mean = p.k / p.mu + a**n * (x0 - p.k / p.mu)
    var = p.sigma**2 * dt / (1.0 - a**2) * (1.0 - a ** (2 * n))
    return mean, var


def perturbed_params(p: OuParams, dt: float) -> OuParams:
    """Exact-OU parameters whose discrete samples share the law of the Euler chain.

    Defined for mu*dt < 1; all three perturbations are O(dt) close to the
    inputs.
    """
    _check_finite(dt=dt)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if p.mu * dt >= 1.0:
        raise ValueError(f"dt must be < 1/mu = {1.0 / p.mu}, got {dt}")
    log_term = -math.log1p(-p.mu * dt)
    k_dt = p.k * log_term / (p.mu * dt)
    mu_dt = log_term / dt
    sigma2_dt = 2.0 * p.sigma**2 * log_term / (p.mu * dt * (2.0 - p.mu * dt))
    return OuParams(k=k_dt, mu=mu_dt, sigma=math.sqrt(sigma2_dt), allow_degenerate=p.sigma == 0.0)


def exactifying_params(target: OuParams, dt: float) -> OuParams:
    """Parameters that make the Euler chain at step dt follow the exact law of `target`.

    Inverse of perturbed_params: simulating sample_euler with the returned
    parameters reproduces the discrete-time law of the target process.
    """
    _check_finite(dt=dt)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    mu = -math.expm1(-dt * target.mu) / dt
    k = mu * target.k / target.mu
    sigma2 = target.sigma**2 * (2.0 - dt * mu) * mu / (2.0 * target.mu)
    return OuParams(k=k, mu=mu, sigma=math.sqrt(sigma2), allow_degenerate=target.sigma == 0.0)
