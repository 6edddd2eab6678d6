"""Sequential Monte Carlo ABC with indirect OU summary statistics.

Simulated pseudo-prevalence series are summarized by the least-squares AR(1)
estimates, compared to the observed summaries through a normalized Euclidean
distance, and filtered through a decreasing tolerance schedule.  Each
generation resamples the previous one, perturbs with an adaptive Gaussian
kernel, and reweights by the prior-to-kernel ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .epi import SiseParams, SisParams
from .estimators import lsq_fit
from .network import NetworkModel, simulate_network
from .ou import Trajectory

__all__ = [
    "SummaryStats",
    "AbcPopulation",
    "SmcResult",
    "summary_of",
    "abc_kernel",
    "tolerance_schedule",
    "smc_abc",
    "qcd_concentration",
    "weighted_quantile",
    "network_simulator",
]


@dataclass(frozen=True)
class SummaryStats:
    """Indirect summary statistics: the least-squares AR(1) estimates."""

    alpha_hat: float
    beta_hat: float
    gamma_hat: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha_hat, self.beta_hat, self.gamma_hat])


def summary_of(series: Trajectory) -> SummaryStats:
    """Summaries of a pseudo-prevalence series; degenerate series raise."""
    est = lsq_fit(series)
    stats = SummaryStats(alpha_hat=est.alpha_hat, beta_hat=est.beta_hat, gamma_hat=est.gamma_hat)
    if not np.all(np.isfinite(stats.as_array())):
        raise ValueError("summary statistics are not finite")
    return stats


def _stats_array(x) -> np.ndarray:
    if isinstance(x, SummaryStats):
        return x.as_array()
    return np.asarray(x, dtype=float)


def abc_kernel(x, y) -> float:
    """Normalized Euclidean distance sqrt(sum_i ((x_i - y_i)/x_i)^2).

    x is the observed statistic vector and must have no zero component; the
    kernel is not symmetric in its arguments.
    """
    xa, ya = _stats_array(x), _stats_array(y)
    if xa.shape != ya.shape:
        raise ValueError("statistics must have matching shapes")
    if np.any(xa == 0.0):
        raise ValueError("observed statistics contain a zero component; normalization undefined")
    return float(np.sqrt(np.sum(((xa - ya) / xa) ** 2)))


def tolerance_schedule(n: int, eps0: float = 100.0, rate: float = 0.25, n_max: int = 15) -> float:
    """Tolerance eps_n = eps0 * exp(-rate * (n - 1)) for generations 1..n_max."""
    if not 1 <= n <= n_max:
        raise ValueError(f"generation must lie in [1, {n_max}]")
    return eps0 * math.exp(-rate * (n - 1))


@dataclass
class AbcPopulation:
    """Weighted particles of one SMC-ABC generation."""

    generation: int
    epsilon: float
    particles: np.ndarray
    weights: np.ndarray
    distances: np.ndarray
    n_attempts: int

    @property
    def acceptance_rate(self) -> float:
        return self.particles.shape[0] / self.n_attempts if self.n_attempts else math.nan


@dataclass
class SmcResult:
    populations: list[AbcPopulation]
    completed: bool
    message: str = ""

    @property
    def final(self) -> AbcPopulation:
        return self.populations[-1]


def _attempt_seed(seed: int, generation: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, generation, index, stream)))


def simulation_seed(seed: int, generation: int, index: int) -> int:
    """Deterministic per-proposal simulator seed (addressable by index, so
    proposal evaluation can be parallelized and merged in index order)."""
    return int(np.random.SeedSequence((seed, generation, index, 1)).generate_state(1)[0])


def smc_abc(
    simulator,
    prior_bounds,
    observed,
    n_particles: int,
    n_generations: int,
    seed: int,
    eps0: float = 100.0,
    rate: float = 0.25,
    acceptance_floor: float = 1e-4,
    resume_from: AbcPopulation | None = None,
) -> SmcResult:
    """Run SMC-ABC against `observed` summary statistics.

    simulator(theta, sim_seed) returns summary statistics (array-like or
    SummaryStats), or None for a degenerate simulation (counted as a rejected
    attempt).  Priors are independent uniform boxes.  Proposals whose
    distance is below the generation tolerance are accepted; perturbation is
    a componentwise Gaussian with twice the weighted empirical variance of
    the previous generation, redrawn until inside the prior box.  If a
    generation's acceptance rate falls below acceptance_floor the run stops
    early with the populations collected so far.  Passing a previously saved
    population as resume_from continues the schedule after its generation.
    """
    bounds = np.asarray(prior_bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError("prior_bounds must be (d, 2) with low < high")
    if n_particles < 2:
        raise ValueError("need at least 2 particles")
    obs = _stats_array(observed)
    dim = bounds.shape[0]
    widths = bounds[:, 1] - bounds[:, 0]
    populations: list[AbcPopulation] = []
    prev: AbcPopulation | None = None
    first_gen = 1
    if resume_from is not None:
        if resume_from.particles.shape[1] != dim:
            raise ValueError("resume population dimension mismatch")
        prev = resume_from
        first_gen = resume_from.generation + 1
    for gen in range(first_gen, n_generations + 1):
        eps = tolerance_schedule(gen, eps0=eps0, rate=rate, n_max=n_generations)
        if prev is not None:
            var = np.average((prev.particles - np.average(prev.particles, axis=0, weights=prev.weights)) ** 2,
                             axis=0, weights=prev.weights)
            kernel_sd = np.sqrt(2.0 * var)
            kernel_sd = np.where(kernel_sd > 0.0, kernel_sd, 1e-12 * widths)
        accepted = np.empty((n_particles, dim))
        dists = np.empty(n_particles)
        n_found = 0
        attempts = 0
        max_attempts = int(math.ceil(n_particles / acceptance_floor))
        while n_found < n_particles:
            if attempts >= max_attempts:
                return SmcResult(
                    populations=populations,
                    completed=False,
                    message=f"generation {gen}: acceptance rate below {acceptance_floor}",
                )
            rng = _attempt_seed(seed, gen, attempts, 0)
            if prev is None:
                theta = bounds[:, 0] + widths * rng.random(dim)
            else:
                base = prev.particles[rng.choice(prev.particles.shape[0], p=prev.weights)]
                for _ in range(1000):
                    theta = base + kernel_sd * rng.standard_normal(dim)
                    if np.all((theta >= bounds[:, 0]) & (theta <= bounds[:, 1])):
                        break
                else:
                    base = prev.particles[rng.choice(prev.particles.shape[0], p=prev.weights)]
                    theta = np.clip(base, bounds[:, 0], bounds[:, 1])
            stats = simulator(theta, simulation_seed(seed, gen, attempts))
            attempts += 1
            if stats is None:
                continue
            dist = abc_kernel(obs, stats)
            if math.isfinite(dist) and dist < eps:
                accepted[n_found] = theta
                dists[n_found] = dist
                n_found += 1
        if prev is None:
            weights = np.full(n_particles, 1.0 / n_particles)
        else:
            # Toni-style reweighting: uniform prior over the box, so the weight
            # is the inverse mixture density of the perturbation kernel.
            diff = (accepted[:, None, :] - prev.particles[None, :, :]) / kernel_sd
            log_k = -0.5 * np.sum(diff**2, axis=2) - np.sum(np.log(kernel_sd)) - 0.5 * dim * math.log(2 * math.pi)
            mix = np.exp(log_k) @ prev.weights
            weights = 1.0 / np.maximum(mix, 1e-300)
            weights /= weights.sum()
        prev = AbcPopulation(
            generation=gen,
            epsilon=eps,
            particles=accepted,
            weights=weights,
            distances=dists,
            n_attempts=attempts,
        )
        populations.append(prev)
    return SmcResult(populations=populations, completed=True)


def weighted_quantile(values, q, weights=None):
    """Quantiles of possibly weighted samples (linear interpolation on the
    cumulative weight at the sample points)."""
    values = np.asarray(values, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any((q < 0) | (q > 1)):
        raise ValueError("quantiles must lie in [0, 1]")
    if weights is None:
        out = np.quantile(values, q)
    else:
        weights = np.asarray(weights, dtype=float)
        order = np.argsort(values)
        v, w = values[order], weights[order]
        cw = np.cumsum(w) - 0.5 * w
        cw /= np.sum(w)
        out = np.interp(q, cw, v)
    return out if out.size > 1 else float(out[0])


def qcd_concentration(prior_sample, posterior_sample, posterior_weights=None, prior_weights=None) -> float:
    """Posterior-to-prior ratio of the quartile coefficient of dispersion.

    QCD = (Q3 - Q1)/(Q3 + Q1); small factors indicate strong concentration.
    """

    def qcd(x, w):
        x = np.asarray(x, dtype=float)
        if x.size < 20:
            raise ValueError("need at least 20 samples")
        q1, q3 = weighted_quantile(x, [0.25, 0.75], w)
        denom = q3 + q1
        if denom == 0.0:
            raise ValueError("Q3 + Q1 vanishes; QCD undefined")
        return (q3 - q1) / denom

    prior_qcd = qcd(prior_sample, prior_weights)
    if prior_qcd == 0.0:
        raise ValueError("prior QCD vanishes; concentration factor undefined")
    return qcd(posterior_sample, posterior_weights) / prior_qcd


def network_simulator(base_model: NetworkModel, t_end: float, kind: str = "sis"):
    """Simulator closure for smc_abc over a fixed network template.

    theta is (beta_tx, gamma_rec) for SIS or (beta_tx, gamma_rec, rho) for
    SIS_E.  Returns the summary statistics of the pseudo-prevalence series,
    or None when the proposal is invalid or the series degenerate.
    """
    if kind not in ("sis", "sise"):
        raise ValueError("kind must be 'sis' or 'sise'")
    total_pop = float(base_model.nodes[:, 0].sum())

    def simulate(theta, sim_seed):
        try:
            if kind == "sis":
                dyn = SisParams(beta_tx=theta[0], gamma_rec=theta[1], sigma_pop=total_pop)
            else:
                dyn = SiseParams(beta_tx=theta[0], gamma_rec=theta[1], rho=theta[2], sigma_pop=total_pop)
        except ValueError:
            return None
        model = NetworkModel(
            nodes=base_model.nodes,
            movements=base_model.movements,
            dynamics=dyn,
            sentinels=base_model.sentinels,
            sample_period=base_model.sample_period,
            threshold_c=base_model.threshold_c,
        )
        sample = simulate_network(model, t_end, sim_seed)
        try:
            return summary_of(sample.pseudo_prevalence)
        except ValueError:
            return None

    return simulate
