"""Likelihood evaluation for latent epidemic states.

kalman_loglik scores exact state observations of the SIS chain through a
locally linearized Gaussian (Langevin) propagation with state-dependent
noise.  particle_kalman_binary_loglik extends it to threshold-censored
observations by discretizing the state into Gaussian particles placed at the
percentiles of the stationary law, evolving each through the same filter
steps, and zeroing the mass on the wrong side of the threshold at every data
point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtri

from .censored import BinarySeries
from .epi import SisParams, sis_to_canonical
from .ou import Trajectory

__all__ = [
    "KalmanState",
    "KalmanResult",
    "ParticleCloud",
    "kalman_loglik",
    "particle_kalman_binary_loglik",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class KalmanState:
    """Filter state after an assimilation: predictive moments and running log-likelihood."""

    mean: float
    variance: float
    log_lik_accum: float


@dataclass
class KalmanResult:
    loglik: float
    clamp_count: int
    underflow: bool = False
    cloud: "ParticleCloud | None" = None


@dataclass
class ParticleCloud:
    """Gaussian particles: centers, masses and per-particle variances."""

    centers: np.ndarray
    weights: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        if self.centers.size < 2:
            raise ValueError("need at least 2 particles")
        if self.centers.shape != self.weights.shape or self.centers.shape != self.variances.shape:
            raise ValueError("centers, weights and variances must share a shape")
        if np.any(self.weights < 0.0) or not math.isclose(float(self.weights.sum()), 1.0, abs_tol=1e-9):
            raise ValueError("weights must be nonnegative and sum to one")


def _substeps(h: float, dt: float) -> int:
    ratio = h / dt
    nsub = round(ratio)
    if nsub < 1 or abs(ratio - nsub) > 1e-9 * ratio:
        raise ValueError(f"dt = {dt} must divide the observation spacing h = {h}")
    return int(nsub)


def _langevin_step(p: SisParams, dt: float, mean, var):
    """One forward-Euler step of the linearized moment propagation.

    Means outside [0, Sigma] are clamped first; the returned clamp count is
    the number of components touched.
    """
    sig = p.sigma_pop
    clamped = np.count_nonzero(mean < 0.0) + np.count_nonzero(mean > sig)
    mean = np.clip(mean, 0.0, sig)
    a_inf = p.beta_tx * mean * (sig - mean) / sig
    a_rec = p.gamma_rec * mean
    q = dt * (a_inf + a_rec)
    jac = 1.0 + dt * (p.beta_tx * (1.0 - 2.0 * mean / sig) - p.gamma_rec)
    new_mean = mean + dt * (a_inf - a_rec)
    new_var = jac * jac * var + q
    return new_mean, new_var, int(clamped)


def kalman_loglik(p: SisParams, data: Trajectory, dt: float | None = None, full: bool = False):
    """Gaussian predictive log-likelihood of exact state observations.

    Between observations the mean and variance are propagated by forward-Euler
    steps of size dt (default h/4) of the linearized jump-process moments;
    each observation is scored against the predictive normal and then taken
    as the exact current state.
    """
    h = data.h
    if dt is None:
        dt = h / 4.0
    nsub = _substeps(h, dt)
    values = data.values
    if values.size < 2:
        raise ValueError("need at least two observations")
    mean = float(values[0])
    loglik = 0.0
    clamps = 0
    for d in values[1:]:
        m, v = mean, 0.0
        for _ in range(nsub):
            m, v, c = _langevin_step(p, dt, m, v)
            clamps += c
        if v > 0.0:
            loglik += -0.5 * (_LOG_2PI + math.log(v) + (d - m) ** 2 / v)
        elif d != m:
            loglik = -math.inf
            break
        mean = float(d)
    result = KalmanResult(loglik=loglik, clamp_count=clamps)
    return result if full else result.loglik


def _stationary_percentile_cloud(p: SisParams, h: float, m: int) -> ParticleCloud:
    u = sis_to_canonical(p, h)
    quantiles = (np.arange(m) + 0.5) / m
    centers = u.alpha + u.stationary_sd * ndtri(quantiles)
    return ParticleCloud(centers=centers, weights=np.full(m, 1.0 / m), variances=np.zeros(m))


def _upper_mass(centers, variances, c):
    """Per-particle Gaussian mass above the threshold c."""
    out = np.empty_like(centers)
    degenerate = variances <= 0.0
    out[degenerate] = (centers[degenerate] >= c).astype(float)
    live = ~degenerate
    z = (c - centers[live]) / np.sqrt(variances[live])
    out[live] = 0.5 * erfc(z / math.sqrt(2.0))
    return out


def particle_kalman_binary_loglik(
    p: SisParams,
    data: BinarySeries,
    c: float,
    m: int = 100,
    dt: float | None = None,
    full: bool = False,
):
    """Log-likelihood of binary threshold data via a particle-discretized Kalman filter.

    Particles start at the (i - 1/2)/m percentiles of the stationary law
    implied by the proposal, evolve through the Langevin filter steps between
    observations (each particle keeps its own propagated variance), and every
    observation keeps only the mass on the observed side of c.  Total
    surviving mass below 1e-300 yields -inf.
    """
    if m < 2:
        raise ValueError("need at least 2 particles")
    if not 0.0 < c < p.sigma_pop:
        raise ValueError("threshold must lie inside (0, sigma_pop)")
    h = data.h
    if dt is None:
        dt = h / 4.0
    nsub = _substeps(h, dt)
    cloud = _stationary_percentile_cloud(p, h, m)
    centers, weights, variances = cloud.centers, cloud.weights, cloud.variances
    loglik = 0.0
    clamps = 0
    for step, y in enumerate(data.values):
        if step > 0:
            for _ in range(nsub):
                centers, variances, n_clamped = _langevin_step(p, dt, centers, variances)
                clamps += n_clamped
        above = _upper_mass(centers, variances, c)
        g = above if y == 1 else 1.0 - above
        mass = float(weights @ g)
        if mass < 1e-300:
            result = KalmanResult(loglik=-math.inf, clamp_count=clamps, underflow=True)
            return result if full else result.loglik
        loglik += math.log(mass)
        weights = weights * g / mass
    result = KalmanResult(
        loglik=loglik,
        clamp_count=clamps,
        cloud=ParticleCloud(centers=centers, weights=weights, variances=variances),
    )
    return result if full else result.loglik
