"""Full-information inference for the sampled OU process.

Least-squares (= maximum-likelihood) estimation of the canonical parameters,
their Fisher information and asymptotic covariance, the conjugate
prior/posterior family and its large-sample limit, and a tabulated posterior
grid container.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .ou import CanonicalParams, Trajectory

__all__ = [
    "LsqEstimate",
    "FisherInfo",
    "ConjugatePrior",
    "PosteriorGrid",
    "lsq_fit",
    "fisher_info",
    "bvm_covariance",
    "log_posterior",
    "log_marginal_alpha_beta",
    "qn_value",
    "qn_coefficients",
    "qn_limit",
    "noisy_qn",
    "noisy_effective_precision",
]


def _values_of(data) -> np.ndarray:
    if isinstance(data, Trajectory):
        return data.values
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 1:
        raise ValueError("data must be one-dimensional")
    return arr


@dataclass(frozen=True)
class LsqEstimate:
    """Least-squares estimates of the AR(1) parameters from n transition pairs."""

    alpha_hat: float
    beta_hat: float
    gamma_hat: float
    delta_hat: float
    residual_ss: float
    n: int


def lsq_fit(data) -> LsqEstimate:
    """Fit (alpha, beta, gamma) by least squares on consecutive pairs.

    Minimizes ||A [delta, beta]^T - b||^2 with A = [1, d_i] and b = [d_{i+1}],
    then gamma_hat^{-1} = residual / (n - 2).  By Gaussianity of the exact
    one-step transitions these coincide with the ML estimators.
    """
    values = _values_of(data)
    n = values.size - 1
    if n < 3:
        raise ValueError("need at least 3 transition pairs")
    x, y = values[:-1], values[1:]
    design = np.column_stack([np.ones(n), x])
    sol, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 2:
        raise ValueError("rank-deficient design matrix: trajectory has fewer than 2 distinct values")
    delta_hat, beta_hat = float(sol[0]), float(sol[1])
    residual_ss = float(np.sum((y - design @ sol) ** 2))
    alpha_hat = delta_hat / (1.0 - beta_hat) if beta_hat != 1.0 else math.inf
    gamma_hat = math.inf if residual_ss == 0.0 else (n - 2) / residual_ss
    return LsqEstimate(
        alpha_hat=alpha_hat,
        beta_hat=beta_hat,
        gamma_hat=gamma_hat,
        delta_hat=delta_hat,
        residual_ss=residual_ss,
        n=n,
    )


@dataclass(frozen=True)
class FisherInfo:
    """Diagonal of the per-observation Fisher information at a parameter point."""

    i_alpha: float
    i_beta: float
    i_gamma: float


def fisher_info(u0: CanonicalParams) -> FisherInfo:
    """Per-observation Fisher information diag((1-b)^2 g, 1/(1-b^2), 1/(2 g^2)).

    Independent of alpha.  The beta entry diverges as beta -> 1.
    """
    one_minus_b2 = (1.0 - u0.beta) * (1.0 + u0.beta)
    i_beta = math.inf if one_minus_b2 == 0.0 else 1.0 / one_minus_b2
    return FisherInfo(
        i_alpha=(1.0 - u0.beta) ** 2 * u0.gamma,
        i_beta=i_beta,
        i_gamma=1.0 / (2.0 * u0.gamma**2),
    )


def bvm_covariance(u0: CanonicalParams, n: int):
    """Asymptotic variances (inverse information / n) of (alpha, beta, gamma) hats."""
    if n < 1:
        raise ValueError("n must be >= 1")
    info = fisher_info(u0)
    return 1.0 / (info.i_alpha * n), 1.0 / (info.i_beta * n), 1.0 / (info.i_gamma * n)


# Conjugate family: densities proportional to gamma^r * exp(-gamma/2 * P(alpha, beta)),
# with P polynomial of degree <= 2 in each of alpha and beta.  The data factor
# Q_N is itself biquadratic, so the family is closed under conditioning.

_QN_BASIS = "coefficient [a, b] multiplies alpha**a * beta**b"


def qn_value(data, alpha, beta):
    """Sum of squared one-step residuals sum_i (d_{i+1} - beta*d_i - alpha*(1-beta))^2."""
    values = _values_of(data)
    if values.size < 1:
        raise ValueError("data must be non-empty")
    res = values[1:] - beta * values[:-1] - alpha * (1.0 - beta)
    return float(res @ res)


def qn_coefficients(data) -> np.ndarray:
    """Biquadratic coefficients of Q_N on the basis alpha**a * beta**b, a, b <= 2."""
    values = _values_of(data)
    if values.size < 1:
        raise ValueError("data must be non-empty")
    x, y = values[:-1], values[1:]
    n = float(x.size)
    s_yy = float(y @ y)
    s_xx = float(x @ x)
    s_xy = float(x @ y)
    s_y = float(y.sum())
    s_x = float(x.sum())
    c = np.zeros((3, 3))
    c[0, 0] = s_yy
    c[0, 1] = -2.0 * s_xy
    c[0, 2] = s_xx
    c[1, 0] = -2.0 * s_y
    c[1, 1] = 2.0 * (s_y + s_x)
    c[1, 2] = -2.0 * s_x
    c[2, 0] = n
    c[2, 1] = -2.0 * n
    c[2, 2] = n
    return c


def _poly_eval(coeffs: np.ndarray, alpha, beta):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    out = np.zeros(np.broadcast(alpha, beta).shape)
    for a in (2, 1, 0):
        row = coeffs[a, 2]
        for b in (1, 0):
            row = row * beta + coeffs[a, b]
        out = out * alpha + row
    return out if out.ndim else float(out)


@dataclass
class ConjugatePrior:
    """Prior density proportional to gamma^r * exp(-gamma/2 * P(alpha, beta)).

    P is stored as a (3, 3) coefficient matrix, entry [a, b] multiplying
    alpha**a * beta**b; it must be nonnegative for beta in (0, 1).  The flat
    prior is r = 0, P = 0; conditioning on data adds n/2 to r and the data
    polynomial Q_N to P, so the family is closed.
    """

    r: float
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (3, 3):
            raise ValueError("coeffs must have shape (3, 3): " + _QN_BASIS)
        if not np.all(np.isfinite(self.coeffs)) or not math.isfinite(self.r):
            raise ValueError("prior parameters must be finite")
        self._check_nonnegative()

    def _check_nonnegative(self):
        # P(alpha, beta) = A(beta) alpha^2 + B(beta) alpha + C(beta): require
        # min over alpha >= 0 on a dense beta grid (up to relative rounding).
        betas = np.linspace(0.0, 1.0, 201)
        bpow = np.vstack([np.ones_like(betas), betas, betas**2])
        a2 = self.coeffs[2] @ bpow
        b1 = self.coeffs[1] @ bpow
        c0 = self.coeffs[0] @ bpow
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        tol = 1e-9 * scale
        for a, b, c in zip(a2, b1, c0):
            if a < -tol:
                raise ValueError("P is negative for large alpha (alpha^2 coefficient < 0)")
            if abs(a) <= tol:
                if abs(b) > tol:
                    raise ValueError("P is unbounded below in alpha")
                if c < -tol:
                    raise ValueError("P takes negative values")
            elif c - b * b / (4.0 * a) < -tol:
                raise ValueError("P takes negative values")

    @classmethod
    def flat(cls) -> "ConjugatePrior":
        return cls(r=0.0, coeffs=np.zeros((3, 3)))

    def value(self, alpha, beta):
        """Evaluate P(alpha, beta)."""
        return _poly_eval(self.coeffs, alpha, beta)

    def updated(self, data) -> "ConjugatePrior":
        """Posterior after conditioning on the transition pairs of `data`."""
        values = _values_of(data)
        return ConjugatePrior(r=self.r + (values.size - 1) / 2.0, coeffs=self.coeffs + qn_coefficients(values))

    def log_density(self, u: CanonicalParams) -> float:
        """Unnormalized log density at u."""
        return self.r * math.log(u.gamma) - 0.5 * u.gamma * float(self.value(u.alpha, u.beta))


def log_posterior(prior: ConjugatePrior, data, u: CanonicalParams) -> float:
    """Unnormalized log posterior (N/2 + r) log(gamma) - gamma/2 (Q_N + P)(alpha, beta)."""
    values = _values_of(data)
    n = values.size - 1
    q = qn_value(values, u.alpha, u.beta)
    p = float(prior.value(u.alpha, u.beta))
    return (0.5 * n + prior.r) * math.log(u.gamma) - 0.5 * u.gamma * (q + p)


def log_marginal_alpha_beta(prior: ConjugatePrior, data, alpha, beta):
    """Log of the gamma-profiled posterior over (alpha, beta).

    The gamma integral of the conjugate form is a Gamma integral with closed
    form Gamma(m+1) * (2/S)^(m+1), m = N/2 + r and S = (Q_N + P)(alpha, beta).
    """
    values = _values_of(data)
    m = (values.size - 1) / 2.0 + prior.r
    s = _poly_eval(qn_coefficients(values) + prior.coeffs, alpha, beta)
    s = np.asarray(s, dtype=float)
    out = gammaln(m + 1.0) + (m + 1.0) * (math.log(2.0) - np.log(s))
    return out if out.ndim else float(out)


def qn_limit(alpha, beta, u0: CanonicalParams):
    """Large-N limit of Q_N/N on stationary data generated at u0."""
    g0 = u0.gamma
    return (1.0 - beta) ** 2 * (1.0 / (g0 * (1.0 - u0.beta**2)) + (u0.alpha - alpha) ** 2) + 2.0 * beta / (
        g0 * (1.0 + u0.beta)
    )


def noisy_qn(data, u: CanonicalParams, eta: float) -> float:
    """First-order noise-corrected residual sum for observations polluted by N(0, eta) noise.

    Each term is (r_i + eta*beta*gamma*r_{i-1})^2 with r_i the plain one-step
    residual; the correction is skipped at i = 0.  Reduces to qn_value at
    eta = 0.
    """
    if eta < 0.0:
        raise ValueError("eta must be nonnegative")
    values = _values_of(data)
    if values.size < 1:
        raise ValueError("data must be non-empty")
    res = values[1:] - u.beta * values[:-1] - u.alpha * (1.0 - u.beta)
    corrected = res.copy()
    corrected[1:] += eta * u.beta * u.gamma * res[:-1]
    return float(corrected @ corrected)


def noisy_effective_precision(u: CanonicalParams, eta: float) -> float:
    """Precision replacing gamma to first order in the measurement-noise variance eta."""
    if eta < 0.0:
        raise ValueError("eta must be nonnegative")
    return 1.0 / (1.0 / u.gamma + eta * (1.0 + u.beta**2))


def _trapezoid_weights(axis: np.ndarray) -> np.ndarray:
    if axis.size == 1:
        return np.ones(1)
    spacing = np.diff(axis)
    if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
        raise ValueError("axis must be uniformly spaced")
    w = np.full(axis.size, spacing[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass
class PosteriorGrid:
    """Log posterior tabulated over a rectangle of two parameters.

    `normalization` is the log of the trapezoidal mass of exp(log_density)
    over the grid, so that `masses()` sums to one.
    """

    axis1_name: str
    axis1: np.ndarray
    axis2_name: str
    axis2: np.ndarray
    log_density: np.ndarray
    normalization: float = math.nan

    def __post_init__(self):
        self.axis1 = np.asarray(self.axis1, dtype=float)
        self.axis2 = np.asarray(self.axis2, dtype=float)
        self.log_density = np.asarray(self.log_density, dtype=float)
        if self.log_density.shape != (self.axis1.size, self.axis2.size):
            raise ValueError("log_density shape must be (len(axis1), len(axis2))")
        self._log_w = np.log(np.outer(_trapezoid_weights(self.axis1), _trapezoid_weights(self.axis2)))
        if math.isnan(self.normalization):
            self.normalization = float(logsumexp(self.log_density + self._log_w))
        if not math.isfinite(self.normalization):
            raise ValueError("grid mass is not finite; check the log densities")

    def masses(self) -> np.ndarray:
        """Normalized probability mass per grid point (sums to 1)."""
        return np.exp(self.log_density + self._log_w - self.normalization)

    def marginal(self, axis: int):
        """(axis values, probability masses) of the requested axis (1 or 2)."""
        m = self.masses()
        if axis == 1:
            return self.axis1, m.sum(axis=1)
        if axis == 2:
            return self.axis2, m.sum(axis=0)
        raise ValueError("axis must be 1 or 2")

    def marginal_mean_sd(self, axis: int):
        vals, pm = self.marginal(axis)
        pm = pm / pm.sum()
        mean = float(vals @ pm)
        var = float(((vals - mean) ** 2) @ pm)
        return mean, math.sqrt(max(var, 0.0))
