"""Bayesian inference for stochastic epidemics through an OU meta-model.

Subpackages cover exact OU sampling and parameter maps (`ou`), full-state
estimation and conjugate posteriors (`estimators`), SIS/SIS_E models and
their OU maps (`epi`), Kalman-type likelihoods for latent states
(`filters`), pseudo-likelihood inference from censored observations
(`censored`), and network simulation with SMC-ABC (`network`, `smcabc`).
"""

from .ou import (
    CanonicalParams,
    OuParams,
    Trajectory,
    exactifying_params,
    from_canonical,
    ou_mean_cov,
    perturbed_params,
    sample_euler,
    sample_exact,
    to_canonical,
)

__version__ = "0.1.0"

__all__ = [
    "CanonicalParams",
    "OuParams",
    "Trajectory",
    "exactifying_params",
    "from_canonical",
    "ou_mean_cov",
    "perturbed_params",
    "sample_euler",
    "sample_exact",
    "to_canonical",
    "__version__",
]
