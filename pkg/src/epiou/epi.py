"""SIS and SIS_E epidemic models: ODE and jump-process forms, and the OU maps.

The continuous-time Markov chains are simulated exactly (direct Gillespie;
for SIS_E the infectious pressure is integrated analytically between jump
candidates with thinning).  Linearizing the SIS chain around its endemic
equilibrium yields an OU approximation of the infected count, giving
closed-form maps between (R0, Sigma, gamma_rec) and the OU parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ou import CanonicalParams, OuParams, Trajectory, to_canonical

__all__ = [
    "SisParams",
    "SiseParams",
    "CtmcState",
    "CtmcPath",
    "simulate_ctmc_sis",
    "simulate_ctmc_sise",
    "solve_ode",
    "sis_to_ou",
    "sis_to_canonical",
    "ou_to_sis",
    "var_r0_asymptotic",
    "quasi_stationary_moments",
]


@dataclass(frozen=True)
class SisParams:
    """SIS rate parameters: transmission beta_tx, recovery gamma_rec, population sigma_pop."""

    beta_tx: float
    gamma_rec: float
    sigma_pop: float

    def __post_init__(self):
        for name in ("beta_tx", "gamma_rec", "sigma_pop"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.sigma_pop < 2:
            raise ValueError("sigma_pop must be at least 2")

    @property
    def r0(self) -> float:
        return self.beta_tx / self.gamma_rec

    @property
    def i_inf(self) -> float:
        """Endemic equilibrium Sigma*(1 - 1/R0) of the infected count."""
        return self.sigma_pop * (1.0 - 1.0 / self.r0)


@dataclass(frozen=True)
class SiseParams:
    """SIS_E parameters; transmission is mediated by the infectious pressure phi.

    phi follows phi' = I/Sigma - rho*phi and infects at rate beta_tx*S*phi.
    """

    beta_tx: float
    gamma_rec: float
    rho: float
    sigma_pop: float

    def __post_init__(self):
        for name in ("beta_tx", "gamma_rec", "rho", "sigma_pop"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.sigma_pop < 2:
            raise ValueError("sigma_pop must be at least 2")

    @property
    def r0(self) -> float:
        return math.sqrt(self.beta_tx / (self.gamma_rec * self.rho))


@dataclass(frozen=True)
class CtmcState:
    """Snapshot of the jump process: infected count, pressure (SIS_E) and time."""

    i_count: int
    phi: float | None
    t: float


@dataclass
class CtmcPath:
    """Event path of a jump process; piecewise constant I, exact phi in between."""

    times: np.ndarray
    i_counts: np.ndarray
    phis: np.ndarray | None
    t_end: float
    sigma_pop: float
    rho: float | None = None
    seed: int | None = None

    def _segment(self, t):
        if t < self.times[0] or t > self.t_end:
            raise ValueError("t outside the simulated window")
        return int(np.searchsorted(self.times, t, side="right") - 1)

    def state_at(self, t: float) -> CtmcState:
        idx = self._segment(t)
        phi = None
        if self.phis is not None:
            i = self.i_counts[idx]
            pop = self.sigma_pop
            phi_inf = i / (pop * self.rho)
            phi = phi_inf + (self.phis[idx] - phi_inf) * math.exp(-self.rho * (t - self.times[idx]))
        return CtmcState(i_count=int(self.i_counts[idx]), phi=phi, t=t)

    def sample(self, h: float, n: int | None = None) -> Trajectory:
        """Infected counts on the uniform grid t = 0, h, ..., n*h."""
        if n is None:
            n = int(math.floor(self.t_end / h + 1e-9))
        t_grid = h * np.arange(n + 1)
        if t_grid[-1] > self.t_end + 1e-9:
            raise ValueError("grid extends past the simulated window")
        idx = np.searchsorted(self.times, np.minimum(t_grid, self.t_end), side="right") - 1
        return Trajectory(t0=0.0, h=h, values=self.i_counts[idx].astype(float), seed=self.seed)

    def phi_at(self, t_grid: np.ndarray) -> np.ndarray:
        if self.phis is None:
            raise ValueError("path has no pressure component")
        return np.array([self.state_at(float(t)).phi for t in np.asarray(t_grid, dtype=float)])


def _as_count(name, value):
    if value != int(value):
        raise ValueError(f"{name} must be integral, got {value}")
    return int(value)


def _run_with_growing_cap(run, cap):
    while True:
        out = run(cap)
        if out[-1]:
            return out[:-1]
        cap *= 2


def simulate_ctmc_sis(p: SisParams, i0: int, t_end: float, seed: int) -> CtmcPath:
    """Exact Gillespie path of the two-reaction SIS chain; absorbing at I = 0."""
    sigma = _as_count("sigma_pop", p.sigma_pop)
    i0 = _as_count("i0", i0)
    if not (0 <= i0 <= sigma):
        raise ValueError("i0 must lie in [0, sigma_pop]")
    if t_end < 0.0:
        raise ValueError("t_end must be nonnegative")
    cap = int(1.5 * (p.beta_tx * sigma / 4.0 + p.gamma_rec * sigma) * t_end) + 1024
    times, icounts = _run_with_growing_cap(
        lambda c: _kernels.sis_path_kernel(seed, p.beta_tx, p.gamma_rec, sigma, i0, t_end, c), cap
    )
    return CtmcPath(times=times, i_counts=icounts, phis=None, t_end=t_end, sigma_pop=sigma, seed=seed)


def simulate_ctmc_sise(p: SiseParams, i0: int, phi0: float, t_end: float, seed: int) -> CtmcPath:
    """Hybrid SIS_E path: discrete S/I jumps, deterministic pressure in between."""
    sigma = _as_count("sigma_pop", p.sigma_pop)
    i0 = _as_count("i0", i0)
    if not (0 <= i0 <= sigma):
        raise ValueError("i0 must lie in [0, sigma_pop]")
    if phi0 < 0.0:
        raise ValueError("phi0 must be nonnegative")
    if t_end < 0.0:
        raise ValueError("t_end must be nonnegative")
    rate_scale = p.gamma_rec * sigma + p.beta_tx * sigma * max(phi0, 1.0 / p.rho)
    cap = int(1.5 * rate_scale * t_end) + 1024
    times, icounts, phis = _run_with_growing_cap(
        lambda c: _kernels.sise_path_kernel(seed, p.beta_tx, p.gamma_rec, p.rho, sigma, i0, phi0, t_end, c),
        cap,
    )
    return CtmcPath(
        times=times, i_counts=icounts, phis=phis, t_end=t_end, sigma_pop=sigma, rho=p.rho, seed=seed
    )


def _sis_rhs(p: SisParams, y):
    s, i = y
    flow = p.beta_tx / p.sigma_pop * s * i
    return np.array([-flow + p.gamma_rec * i, flow - p.gamma_rec * i])


def _sise_rhs(p: SiseParams, y):
    s, i, phi = y
    flow = p.beta_tx * s * phi
    return np.array([-flow + p.gamma_rec * i, flow - p.gamma_rec * i, i / p.sigma_pop - p.rho * phi])


def solve_ode(params, init, t_grid, substeps: int = 100) -> np.ndarray:
    """Fixed-step RK4 solution of the SIS or SIS_E ODE on t_grid.

    init is (S0, I0) or (S0, I0, phi0) and must sum (S + I) to sigma_pop;
    conservation is monitored and drift beyond 1e-6 raises.
    """
    if isinstance(params, SisParams):
        rhs, dim = _sis_rhs, 2
    elif isinstance(params, SiseParams):
        rhs, dim = _sise_rhs, 3
    else:
        raise TypeError("params must be SisParams or SiseParams")
    y = np.asarray(init, dtype=float)
    if y.shape != (dim,):
        raise ValueError(f"init must have {dim} components")
    if abs(y[0] + y[1] - params.sigma_pop) > 1e-9 * params.sigma_pop:
        raise ValueError("init must satisfy S + I = sigma_pop")
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.empty((t_grid.size, dim))
    out[0] = y
    for idx in range(1, t_grid.size):
        dt = (t_grid[idx] - t_grid[idx - 1]) / substeps
        for _ in range(substeps):
            k1 = rhs(params, y)
            k2 = rhs(params, y + 0.5 * dt * k1)
            k3 = rhs(params, y + 0.5 * dt * k2)
            k4 = rhs(params, y + dt * k3)
            y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if abs(y[0] + y[1] - params.sigma_pop) > 1e-6:
            raise RuntimeError("conservation drift exceeds 1e-6; reduce the step size")
        out[idx] = y
    return out


def sis_to_ou(p: SisParams) -> OuParams:
    """Linear-noise OU approximation of the infected count around the endemic state."""
    r0 = p.r0
    if r0 <= 1.0:
        raise ValueError(f"R0 must exceed 1 for a positive equilibrium, got {r0}")
    g, sig = p.gamma_rec, p.sigma_pop
    return OuParams(
        k=g * sig * (r0 - 1.0) ** 2 / r0,
        mu=g * (r0 - 1.0),
        sigma=math.sqrt(2.0 * g * sig * (r0 - 1.0) / r0),
    )


def sis_to_canonical(p: SisParams, h: float) -> CanonicalParams:
    """Canonical AR(1) parameters of the linear-noise approximation at step h."""
    r0 = p.r0
    if r0 <= 1.0:
        raise ValueError(f"R0 must exceed 1, got {r0}")
    if h <= 0.0:
        raise ValueError("h must be positive")
    beta = math.exp(-p.gamma_rec * h * (r0 - 1.0))
    gamma = r0 / p.sigma_pop / (1.0 - beta**2)
    return CanonicalParams(alpha=p.sigma_pop * (1.0 - 1.0 / r0), beta=beta, gamma=gamma, h=h)


def ou_to_sis(u: CanonicalParams, h: float | None = None) -> SisParams:
    """Inverse of sis_to_canonical: recover (R0, Sigma, gamma_rec) from (alpha, beta, gamma)."""
    if h is None:
        h = u.h
    prod = u.alpha * (1.0 - u.beta**2) * u.gamma
    if prod <= 0.0:
        raise ValueError("parameters imply R0 <= 1")
    r0 = 1.0 + prod
    sigma_pop = u.alpha + 1.0 / ((1.0 - u.beta**2) * u.gamma)
    if sigma_pop <= u.alpha:
        raise ValueError("parameters imply Sigma <= alpha")
    gamma_rec = -math.log(u.beta) / (h * (r0 - 1.0))
    return SisParams(beta_tx=r0 * gamma_rec, gamma_rec=gamma_rec, sigma_pop=sigma_pop)


def var_r0_asymptotic(p: SisParams, h: float, n: int) -> float:
    """Asymptotic posterior variance of R0 from n full-state samples at spacing h."""
    r0 = p.r0
    if r0 <= 1.0:
        raise ValueError(f"R0 must exceed 1, got {r0}")
    if n < 1:
        raise ValueError("n must be >= 1")
    beta = math.exp(-p.gamma_rec * h * (r0 - 1.0))
    return r0**3 / (p.sigma_pop * n) * (1.0 + beta) / (1.0 - beta)


def quasi_stationary_moments(p: SisParams, seed: int, t_window: float = 500.0, h: float = 0.1):
    """Time-averaged mean and variance of I in quasi-stationarity.

    Starts at the endemic equilibrium and discards a burn-in of 20 relaxation
    times before averaging over t_window.
    """
    mu = sis_to_ou(p).mu
    t_burn = 20.0 / mu
    path = simulate_ctmc_sis(p, i0=round(p.i_inf), t_end=t_burn + t_window, seed=seed)
    traj = path.sample(h)
    vals = traj.values[traj.times >= t_burn]
    return float(vals.mean()), float(vals.var())
