"""Pseudo-likelihood inference from threshold-censored observations.

Observations are indicators of the latent process against one threshold
(binary) or two (trinary).  Blocks of p+1 consecutive observations are
modeled through the stationary Gaussian block law, whose covariance is the
geometric Toeplitz matrix gamma^-1/(1-beta^2) * [beta^|i-j|].  Cell
probabilities are exact Gaussian box integrals: the scalar CDF for p = 0, a
single-integral reduction of the bivariate CDF for p = 1, and conditional
quadrature (the block law is Markov) for p = 2.

Binary data cannot identify more than (beta, sqrt(gamma)*(c - alpha)); the
set of parameters sharing those two invariants is exposed as SingularSet,
including its pullback to the (R0, Sigma) plane.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from .ou import CanonicalParams, Trajectory

__all__ = [
    "BinarySeries",
    "StationaryBlockLaw",
    "CellLaw",
    "SingularSet",
    "ZeroCellWarning",
    "bvn_cdf",
    "bvn_cdf_batch",
    "binary_cell_probs_batch",
    "trinary_cell_probs_batch",
    "gaussian_cell_prob",
    "cell_law",
    "pseudo_loglik",
    "trinary_loglik",
    "kl_filtered",
    "singular_set",
    "singular_curve_in_sis_plane",
    "sigmoid_filter_sample",
    "logistic_response",
    "step_response",
    "threshold_series",
    "trinary_series",
    "filter_shift_check",
]


class ZeroCellWarning(UserWarning):
    """An observed cell has probability zero under the proposed parameters."""


@dataclass
class BinarySeries:
    """Censored observations on a uniform grid; values in {0..len(thresholds)}.

    thresholds may be None for series produced by a stochastic response
    filter, in which case a nominal threshold must be supplied to the
    likelihood functions.
    """

    h: float
    values: np.ndarray
    thresholds: tuple[float, ...] | None
    t0: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int8)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("values must be a non-empty 1-D array")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError("step h must be positive")
        if self.thresholds is not None:
            self.thresholds = tuple(float(c) for c in self.thresholds)
            if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
                raise ValueError("thresholds must be strictly increasing")
            if self.values.min() < 0 or self.values.max() > len(self.thresholds):
                raise ValueError("values outside the alphabet implied by the thresholds")

    @property
    def alphabet(self) -> int:
        if self.thresholds is None:
            return 2
        return len(self.thresholds) + 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.values.size)


def threshold_series(traj: Trajectory, c: float) -> BinarySeries:
    """Binary filter Y_i = 1 iff X_i >= c."""
    return BinarySeries(h=traj.h, values=(traj.values >= c).astype(np.int8), thresholds=(c,), t0=traj.t0)


def trinary_series(traj: Trajectory, c1: float, c2: float) -> BinarySeries:
    """Trinary filter Y_i = 1_{X_i > c1} + 1_{X_i > c2}."""
    if not c1 < c2:
        raise ValueError("need c1 < c2")
    vals = (traj.values > c1).astype(np.int8) + (traj.values > c2).astype(np.int8)
    return BinarySeries(h=traj.h, values=vals, thresholds=(c1, c2), t0=traj.t0)


@dataclass
class StationaryBlockLaw:
    """Gaussian law of (X_i, ..., X_{i+p}) under stationarity."""

    p: int
    mean: float
    cov: np.ndarray

    def __post_init__(self):
        self.cov = np.asarray(self.cov, dtype=float)
        if self.cov.shape != (self.p + 1, self.p + 1):
            raise ValueError("cov must be (p+1) x (p+1)")
        var = self.cov[0, 0]
        if var <= 0.0:
            raise ValueError("covariance is not positive definite")
        corr = self.cov[0, 1] / var if self.p >= 1 else 0.0
        expected = var * corr ** np.abs(np.subtract.outer(np.arange(self.p + 1), np.arange(self.p + 1)))
        if not np.allclose(self.cov, expected, rtol=1e-9, atol=1e-12 * var):
            raise ValueError("cov must be the geometric Toeplitz block covariance")
        if self.p >= 1 and not -1.0 < corr < 1.0:
            raise ValueError("covariance is not positive definite")

    @classmethod
    def from_canonical(cls, u: CanonicalParams, p: int) -> "StationaryBlockLaw":
        if p < 0:
            raise ValueError("p must be nonnegative")
        var = u.stationary_var
        idx = np.arange(p + 1)
        cov = var * u.beta ** np.abs(np.subtract.outer(idx, idx))
        return cls(p=p, mean=u.alpha, cov=cov)

    @property
    def marginal_sd(self) -> float:
        return math.sqrt(self.cov[0, 0])

    @property
    def lag1_corr(self) -> float:
        return float(self.cov[0, 1] / self.cov[0, 0]) if self.p >= 1 else 0.0


_SQRT2 = math.sqrt(2.0)


def _phi(x):
    return 0.5 * math.erfc(-x / _SQRT2)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(21)


def _gl_panel(f, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * float(np.sum(_GL_WEIGHTS * f(mid + half * _GL_NODES)))


def _adaptive_gl(f, a, b, tol, depth=0):
    whole = _gl_panel(f, a, b)
    mid = 0.5 * (a + b)
    halves = _gl_panel(f, a, mid) + _gl_panel(f, mid, b)
    # the relative floor stops subdivision once rounding noise dominates
    if abs(whole - halves) <= max(tol, 1e-15 * (1.0 + abs(halves))) or depth >= 24:
        return halves
    return _adaptive_gl(f, a, mid, 0.5 * tol, depth + 1) + _adaptive_gl(f, mid, b, 0.5 * tol, depth + 1)


def bvn_cdf(h: float, k: float, rho: float) -> float:
    """P(Z1 <= h, Z2 <= k) for standard bivariate normal with correlation rho.

    Single-integral reduction over the correlation, integrated by adaptive
    Gauss-Legendre quadrature; absolute accuracy well below 1e-8.
    """
    if math.isnan(h) or math.isnan(k):
        raise ValueError("bounds must not be NaN")
    if not -1.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [-1, 1]")
    if h == -math.inf or k == -math.inf:
        return 0.0
    if h == math.inf:
        return _phi(k)
    if k == math.inf:
        return _phi(h)
    if rho == 0.0:
        return _phi(h) * _phi(k)
    if rho == 1.0:
        return _phi(min(h, k))
    if rho == -1.0:
        return max(0.0, _phi(h) + _phi(k) - 1.0)

    def integrand(t):
        om = 1.0 - t * t
        return np.exp(-(h * h + k * k - 2.0 * h * k * t) / (2.0 * om)) / np.sqrt(om)

    corr = _adaptive_gl(integrand, 0.0, rho, 1e-13) / (2.0 * math.pi)
    return min(1.0, max(0.0, _phi(h) * _phi(k) + corr))


_BATCH_NODES, _BATCH_WEIGHTS = np.polynomial.legendre.leggauss(48)
_BATCH_SPLITS = (0.0, 0.5, 0.9, 1.0)


def bvn_cdf_batch(h, k, rho: float) -> np.ndarray:
    """Vectorized bvn_cdf over arrays of bounds at one shared correlation.

    Fixed-node Gauss-Legendre on a few panels of [0, rho]; agrees with the
    adaptive scalar version to ~1e-12 for |rho| <= 0.99.
    """
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    base = 0.25 * erfc(-h / _SQRT2) * erfc(-k / _SQRT2)
    if rho == 0.0:
        return base
    if not -1.0 < rho < 1.0:
        raise ValueError("batch evaluation needs |rho| < 1")
    corr = np.zeros(np.broadcast(h, k).shape)
    hh = h[..., None]
    kk = k[..., None]
    for a_frac, b_frac in zip(_BATCH_SPLITS[:-1], _BATCH_SPLITS[1:]):
        a, b = rho * a_frac, rho * b_frac
        half = 0.5 * (b - a)
        t = 0.5 * (a + b) + half * _BATCH_NODES
        om = 1.0 - t * t
        vals = np.exp(-(hh * hh + kk * kk - 2.0 * hh * kk * t) / (2.0 * om)) / np.sqrt(om)
        corr += half * (vals @ _BATCH_WEIGHTS)
    return np.clip(base + corr / (2.0 * math.pi), 0.0, 1.0)


def binary_cell_probs_batch(a, rho: float) -> np.ndarray:
    """(n, 4) binary p = 1 block-cell probabilities at standardized threshold a.

    Columns are cells (0,0), (0,1), (1,0), (1,1) in C order.
    """
    a = np.asarray(a, dtype=float)
    f = bvn_cdf_batch(a, a, rho)
    lo = 0.5 * erfc(-a / _SQRT2)
    out = np.empty(a.shape + (4,))
    out[..., 0] = f
    out[..., 1] = lo - f
    out[..., 2] = lo - f
    out[..., 3] = 1.0 - 2.0 * lo + f
    return np.clip(out, 0.0, 1.0)


def trinary_cell_probs_batch(a1, a2, rho: float) -> np.ndarray:
    """(n, 9) trinary p = 1 block-cell probabilities, cells in C order.

    The block law is exchangeable in its two coordinates, so only three
    distinct CDF corners are needed.
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    f11 = bvn_cdf_batch(a1, a1, rho)
    f12 = bvn_cdf_batch(a1, a2, rho)
    f22 = bvn_cdf_batch(a2, a2, rho)
    p1 = 0.5 * erfc(-a1 / _SQRT2)
    p2 = 0.5 * erfc(-a2 / _SQRT2)
    out = np.empty(a1.shape + (9,))
    out[..., 0] = f11
    out[..., 1] = f12 - f11
    out[..., 2] = p1 - f12
    out[..., 3] = f12 - f11
    out[..., 4] = f22 - 2.0 * f12 + f11
    out[..., 5] = p2 - p1 - f22 + f12
    out[..., 6] = p1 - f12
    out[..., 7] = p2 - p1 - f22 + f12
    out[..., 8] = 1.0 - 2.0 * p2 + f22
    return np.clip(out, 0.0, 1.0)


def _interval(thresholds_std, e):
    lo = -math.inf if e == 0 else thresholds_std[e - 1]
    hi = math.inf if e == len(thresholds_std) else thresholds_std[e]
    return lo, hi


def _box_prob_1d(lo, hi):
    return max(0.0, _phi(hi) - _phi(lo))


def _box_prob_2d(lo0, hi0, lo1, hi1, rho):
    return max(
        0.0,
        bvn_cdf(hi0, hi1, rho) - bvn_cdf(lo0, hi1, rho) - bvn_cdf(hi0, lo1, rho) + bvn_cdf(lo0, lo1, rho),
    )


def _box_prob_3d(lo0, hi0, lo1, hi1, lo2, hi2, rho):
    # The block law is Markov: conditionally on the middle coordinate the two
    # outer ones are independent N(rho*x, 1 - rho^2).
    sd = math.sqrt(1.0 - rho * rho)

    def integrand(x):
        dens = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        left = 0.5 * (erfc((lo0 - rho * x) / (sd * _SQRT2)) - erfc((hi0 - rho * x) / (sd * _SQRT2)))
        right = 0.5 * (erfc((lo2 - rho * x) / (sd * _SQRT2)) - erfc((hi2 - rho * x) / (sd * _SQRT2)))
        return dens * left * right

    a = max(lo1, -10.0)
    b = min(hi1, 10.0)
    if a >= b:
        return 0.0
    return max(0.0, _adaptive_gl(integrand, a, b, 1e-13))


def gaussian_cell_prob(law: StationaryBlockLaw, thresholds, e) -> float:
    """Probability that a block from `law` falls in the cell indexed by e.

    Each entry of e selects the interval between consecutive thresholds
    (below the first, between, above the last).  Supported for p <= 2.
    """
    if law.p not in (0, 1, 2):
        raise ValueError("block order p must be 0, 1 or 2")
    e = tuple(int(v) for v in (e if np.iterable(e) else (e,)))
    if len(e) != law.p + 1:
        raise ValueError("cell index length must be p + 1")
    thresholds = tuple(float(c) for c in thresholds)
    n_cells = len(thresholds) + 1
    if any(not 0 <= v < n_cells for v in e):
        raise ValueError("cell index outside the alphabet")
    sd = law.marginal_sd
    std = tuple((c - law.mean) / sd for c in thresholds)
    bounds = [_interval(std, v) for v in e]
    if law.p == 0:
        return _box_prob_1d(*bounds[0])
    rho = law.lag1_corr
    if law.p == 1:
        return _box_prob_2d(*bounds[0], *bounds[1], rho)
    return _box_prob_3d(*bounds[0], *bounds[1], *bounds[2], rho)


@dataclass
class CellLaw:
    """All |alphabet|^(p+1) block-cell probabilities for one parameter point."""

    p: int
    thresholds: tuple[float, ...]
    probabilities: np.ndarray

    def prob(self, e) -> float:
        return float(self.probabilities[tuple(int(v) for v in (e if np.iterable(e) else (e,)))])


@lru_cache(maxsize=8192)
def _cell_law_cached(alpha, beta, gamma, h, thresholds, p):
    u = CanonicalParams(alpha=alpha, beta=beta, gamma=gamma, h=h)
    law = StationaryBlockLaw.from_canonical(u, p)
    n_cells = len(thresholds) + 1
    probs = np.empty((n_cells,) * (p + 1))
    for e in product(range(n_cells), repeat=p + 1):
        probs[e] = gaussian_cell_prob(law, thresholds, e)
    probs.flags.writeable = False
    return CellLaw(p=p, thresholds=thresholds, probabilities=probs)


def cell_law(u: CanonicalParams, thresholds, p: int) -> CellLaw:
    """Block-cell law under stationarity at u; memoized per parameter point."""
    return _cell_law_cached(u.alpha, u.beta, u.gamma, u.h, tuple(float(c) for c in thresholds), p)


def block_counts(values, p: int, alphabet: int) -> np.ndarray:
    """Occurrence counts of the (p+1)-blocks over overlapping windows."""
    values = np.asarray(values)
    n = values.size - p
    if n < 1:
        raise ValueError("data shorter than the block length")
    codes = np.zeros(n, dtype=np.int64)
    for j in range(p + 1):
        codes = codes * alphabet + values[j : j + n]
    return np.bincount(codes, minlength=alphabet ** (p + 1))


def pseudo_loglik(u: CanonicalParams, data: BinarySeries, p: int, thresholds=None) -> float:
    """Stationary pseudo-log-likelihood sum_i log phi_u(Y_i, ..., Y_{i+p}).

    Computed through the block counts; an observed cell of probability zero
    yields -inf (with a warning).
    """
    if thresholds is None:
        thresholds = data.thresholds
    if thresholds is None:
        raise ValueError("series carries no thresholds; pass them explicitly")
    law = cell_law(u, thresholds, p)
    counts = block_counts(data.values, p, len(law.thresholds) + 1).reshape(law.probabilities.shape)
    probs = law.probabilities
    observed = counts > 0
    if np.any(probs[observed] <= 0.0):
        warnings.warn("observed cell has zero probability under u", ZeroCellWarning, stacklevel=2)
        return -math.inf
    return float(np.sum(counts[observed] * np.log(probs[observed])))


def trinary_loglik(u: CanonicalParams, data: BinarySeries, p: int) -> float:
    """pseudo_loglik for trinary data (two thresholds)."""
    if data.thresholds is None or len(data.thresholds) != 2:
        raise ValueError("trinary data requires exactly two thresholds")
    return pseudo_loglik(u, data, p)


def kl_filtered(u0: CanonicalParams, u: CanonicalParams, thresholds, p: int) -> float:
    """Kullback-Leibler divergence between the block-cell laws at u0 and u."""
    p0 = cell_law(u0, thresholds, p).probabilities.ravel()
    p1 = cell_law(u, thresholds, p).probabilities.ravel()
    support = p0 > 0.0
    if np.any(p1[support] <= 0.0):
        return math.inf
    return max(0.0, float(np.sum(p0[support] * np.log(p0[support] / p1[support]))))


@dataclass(frozen=True)
class SingularSet:
    """Parameters indistinguishable from u0 by binary data under stationarity.

    For block order p >= 1 the invariants are beta and sqrt(gamma)*(c-alpha);
    for p = 0 only sqrt(gamma*(1-beta^2))*(c-alpha) is pinned, leaving a
    2-surface.
    """

    u0: CanonicalParams
    c: float
    p: int = 1

    def invariant_value(self, u: CanonicalParams) -> float:
        if self.p >= 1:
            return math.sqrt(u.gamma) * (self.c - u.alpha)
        return math.sqrt(u.gamma * (1.0 - u.beta**2)) * (self.c - u.alpha)

    @property
    def reference_invariant(self) -> float:
        return self.invariant_value(self.u0)

    def alpha_for(self, gamma: float, beta: float | None = None) -> float:
        """The alpha placing (alpha, beta, gamma) on the set."""
        if gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.p >= 1:
            return self.c - math.sqrt(self.u0.gamma / gamma) * (self.c - self.u0.alpha)
        if beta is None:
            raise ValueError("the p = 0 surface needs beta as well")
        return self.c - self.reference_invariant / math.sqrt(gamma * (1.0 - beta**2))

    def point(self, gamma: float, beta: float | None = None) -> CanonicalParams:
        if self.p >= 1:
            beta = self.u0.beta
        return CanonicalParams(
            alpha=self.alpha_for(gamma, beta), beta=beta, gamma=gamma, h=self.u0.h
        )

    def contains(self, u: CanonicalParams, tol: float = 1e-9) -> bool:
        scale = max(1.0, abs(self.reference_invariant))
        ok = abs(self.invariant_value(u) - self.reference_invariant) <= tol * scale
        if self.p >= 1:
            ok = ok and abs(u.beta - self.u0.beta) <= tol
        return ok


def singular_set(u0: CanonicalParams, c: float, p: int = 1) -> SingularSet:
    """Non-identifiable set through u0 for the binary filter at cut-off c."""
    return SingularSet(u0=u0, c=float(c), p=p)


def singular_curve_in_sis_plane(u0: CanonicalParams, c: float, gamma_rec: float, h: float, r0_values):
    """Image of the singular set in the (R0, Sigma) plane at fixed recovery rate.

    For each R0 the correlation is pinned by gamma_rec and h, and Sigma is
    solved from sqrt(gamma)*(c - alpha) = constant; the left side is strictly
    decreasing in Sigma so the root is unique.  Returns an (n, 2) array of
    (R0, Sigma) pairs.
    """
    if c <= 0.0:
        raise ValueError("the SIS-plane curve needs a positive threshold")
    k0 = math.sqrt(u0.gamma) * (c - u0.alpha)
    out = np.empty((len(r0_values), 2))
    for row, r0 in enumerate(np.asarray(r0_values, dtype=float)):
        if r0 <= 1.0:
            raise ValueError("R0 values must exceed 1")
        b = math.exp(-gamma_rec * h * (r0 - 1.0))
        q = 1.0 - b * b

        def gap(sig):
            return math.sqrt(r0 / (sig * q)) * (c - sig * (1.0 - 1.0 / r0)) - k0

        lo = 1e-9
        hi = max(2.0 * c / (1.0 - 1.0 / r0), 10.0)
        while gap(hi) > 0.0:
            hi *= 4.0
            if hi > 1e18:
                raise RuntimeError("failed to bracket the singular curve")
        out[row, 0] = r0
        out[row, 1] = brentq(gap, lo, hi, xtol=1e-12, rtol=1e-14)
    return out


def logistic_response(c: float, width: float):
    """Sigmoid detection probability s(x) = 1/(1 + exp(-(x - c)/width))."""
    if width <= 0.0:
        raise ValueError("width must be positive")

    def s(x):
        return 1.0 / (1.0 + np.exp(-(np.asarray(x, dtype=float) - c) / width))

    return s


def step_response(c: float):
    """Degenerate response reproducing the sharp threshold filter."""

    def s(x):
        return (np.asarray(x, dtype=float) >= c).astype(float)

    return s


def sigmoid_filter_sample(x: Trajectory, s, seed=None, threshold: float | None = None) -> BinarySeries:
    """Stochastic binary filter Y_i = 1_{xi_i <= s(X_i)} with i.i.d. uniform xi.

    The response map s must take values in [0, 1].  `threshold` stamps a
    nominal cut-off onto the series for downstream likelihood evaluation.
    """
    probs = np.asarray(s(x.values), dtype=float)
    if probs.shape != x.values.shape:
        raise ValueError("response map must evaluate elementwise on the path")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ValueError("response map must take values in [0, 1]")
    rng = np.random.default_rng(seed)
    y = (rng.random(probs.size) <= probs).astype(np.int8)
    thresholds = (float(threshold),) if threshold is not None else None
    return BinarySeries(h=x.h, values=y, thresholds=thresholds, t0=x.t0)


def filter_shift_check(u: CanonicalParams, data: BinarySeries, t: float, p: int = 1):
    """Pseudo-log-likelihood at (alpha, c) and at (alpha + t, c + t) on the same data.

    The two agree identically: only the gap c - alpha enters the law.
    """
    if data.thresholds is None:
        raise ValueError("series carries no thresholds")
    base = pseudo_loglik(u, data, p)
    shifted_u = CanonicalParams(alpha=u.alpha + t, beta=u.beta, gamma=u.gamma, h=u.h)
    shifted_thresholds = tuple(c + t for c in data.thresholds)
    shifted = pseudo_loglik(shifted_u, data, p, thresholds=shifted_thresholds)
    return base, shifted
