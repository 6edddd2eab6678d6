"""Deterministic property suite exposed as the `selftest` CLI subcommand.

Each check is seeded and fast; the whole suite runs in well under a minute
and prints one pass/fail line per property.
"""

from __future__ import annotations

import math
import sys

import numpy as np

from .censored import filter_shift_check, threshold_series
from .epi import SisParams, ou_to_sis, sis_to_canonical
from .estimators import ConjugatePrior, log_posterior
from .ou import (
    CanonicalParams,
    OuParams,
    from_canonical,
    exactifying_params,
    perturbed_params,
    sample_exact,
    to_canonical,
)
from .seeds import derived_seed
from .smcabc import smc_abc, summary_of

__all__ = ["run_all", "CHECKS"]


def _stationary_series(u, n, seed):
    rng = np.random.default_rng(derived_seed(seed, 0))
    x0 = rng.normal(u.alpha, u.stationary_sd)
    return sample_exact(from_canonical(u), x0, u.h, n, seed=derived_seed(seed, 1))


def check_conjugacy_closure() -> tuple[bool, str]:
    """Conditioning a conjugate prior reproduces the posterior family exactly."""
    u0 = CanonicalParams(0.4, 0.55, 1.2, 1.0)
    data = _stationary_series(u0, 150, seed=101)
    prior = ConjugatePrior(r=2.0, coeffs=np.diag([0.5, 0.0, 1.0]))
    posterior = prior.updated(data)
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(50):
        u = CanonicalParams(rng.uniform(-2, 2), rng.uniform(0.05, 0.95), rng.uniform(0.1, 5.0), 1.0)
        lhs = log_posterior(prior, data, u)
        rhs = posterior.log_density(u)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return worst < 1e-10, f"max relative mismatch {worst:.2e}"


def check_map_bijections() -> tuple[bool, str]:
    """Canonical, backward-analysis and SIS maps invert to round-trip identity."""
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(20):
        p = OuParams(rng.uniform(-2, 3), rng.uniform(0.2, 2.5), rng.uniform(0.3, 2.0))
        h = rng.uniform(0.1, 2.0)
        q = from_canonical(to_canonical(p, h))
        worst = max(worst, abs(q.mu - p.mu) / p.mu, abs(q.sigma - p.sigma) / p.sigma)
        dt = rng.uniform(0.05, 0.9) / p.mu
        r = exactifying_params(perturbed_params(p, dt), dt)
        worst = max(worst, abs(r.mu - p.mu) / p.mu, abs(r.sigma - p.sigma) / p.sigma)
    for _ in range(20):
        sis = SisParams(rng.uniform(1.1, 3.0), rng.uniform(0.1, 1.5), rng.uniform(100, 3000))
        if sis.r0 <= 1.0:
            continue
        h = rng.uniform(0.2, 2.0)
        back = ou_to_sis(sis_to_canonical(sis, h))
        worst = max(
            worst,
            abs(back.beta_tx - sis.beta_tx) / sis.beta_tx,
            abs(back.gamma_rec - sis.gamma_rec) / sis.gamma_rec,
            abs(back.sigma_pop - sis.sigma_pop) / sis.sigma_pop,
        )
    return worst < 1e-10, f"max relative round-trip error {worst:.2e}"


def check_weight_normalization() -> tuple[bool, str]:
    """SMC-ABC weights renormalize every generation on a small OU toy run."""
    truth = CanonicalParams(0.3, 0.5, 4.0, 1.0)

    def simulate(theta, sim_seed):
        if not 0.0 < theta[1] < 1.0:
            return None
        u = CanonicalParams(float(theta[0]), float(theta[1]), truth.gamma, 1.0)
        traj = sample_exact(from_canonical(u), u.alpha, 1.0, 150, seed=sim_seed)
        try:
            return summary_of(traj)
        except ValueError:
            return None

    observed = simulate(np.array([truth.alpha, truth.beta]), derived_seed(104, 0))
    result = smc_abc(
        simulate,
        prior_bounds=[(-1.0, 1.0), (0.1, 0.9)],
        observed=observed,
        n_particles=32,
        n_generations=3,
        seed=105,
        eps0=20.0,
        rate=0.4,
    )
    if not result.completed:
        return False, "toy run stopped early"
    worst = max(abs(pop.weights.sum() - 1.0) for pop in result.populations)
    eps_ok = all(np.all(pop.distances < pop.epsilon) for pop in result.populations)
    return worst < 1e-12 and eps_ok, f"max |sum(w) - 1| = {worst:.2e}"


def check_translation_invariance() -> tuple[bool, str]:
    """Binary pseudo-log-likelihood depends on (alpha, c) only through c - alpha."""
    u = CanonicalParams(0.0, 0.5, 1.0, 1.0)
    data = threshold_series(_stationary_series(u, 800, seed=106), 0.4)
    rng = np.random.default_rng(107)
    worst = 0.0
    for t in rng.uniform(-8.0, 8.0, 10):
        a, b = filter_shift_check(u, data, float(t))
        worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    return worst < 1e-10, f"max relative mismatch {worst:.2e}"


CHECKS = [
    ("conjugacy-closure", check_conjugacy_closure),
    ("map-bijections", check_map_bijections),
    ("abc-weight-normalization", check_weight_normalization),
    ("translation-invariance", check_translation_invariance),
]


def run_all(stream=None) -> bool:
    stream = stream or sys.stdout
    all_ok = True
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {exc!r}"
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=stream)
    return all_ok
