import math

import numpy as np
import pytest

from epiou.censored import BinarySeries, threshold_series
from epiou.epi import SisParams, simulate_ctmc_sis, sis_to_canonical, solve_ode
from epiou.filters import kalman_loglik, particle_kalman_binary_loglik
from epiou.ou import Trajectory, from_canonical, sample_exact
from epiou.seeds import derived_seed

SIS_REF = SisParams(beta_tx=1.5, gamma_rec=1.0, sigma_pop=1000)


def _ctmc_data(p, n, h, seed, i0=None):
    i0 = round(p.i_inf) if i0 is None else i0
    path = simulate_ctmc_sis(p, i0=i0, t_end=n * h, seed=seed)
    return path.sample(h, n)


class TestKalmanLoglik:
    def test_requires_divisible_dt(self):
        data = Trajectory(0.0, 1.0, np.array([300.0, 310.0, 305.0]))
        with pytest.raises(ValueError):
            kalman_loglik(SIS_REF, data, dt=0.3)

    def test_point_at_predictive_mean(self):
        from epiou.filters import _langevin_step

        m, v = 333.0, 0.0
        for _ in range(4):
            m, v, _ = _langevin_step(SIS_REF, 0.25, m, v)
        data = Trajectory(0.0, 1.0, np.array([333.0, m]))
        assert abs(kalman_loglik(SIS_REF, data) - (-0.5 * (math.log(2 * math.pi) + math.log(v)))) < 1e-12

    def test_exact_on_linear_model(self):
        # with the transmission term (numerically) removed the propagation is
        # linear, and the filter must match the closed-form Gaussian
        # likelihood of the corresponding decay chain
        p = SisParams(beta_tx=1e-12, gamma_rec=0.4, sigma_pop=10_000)
        dt, h, nsub = 0.25, 1.0, 4
        a = 1.0 - p.gamma_rec * dt
        values = np.array([900.0, 820.0, 760.0, 710.0, 640.0, 580.0])
        expected = 0.0
        for d0, d1 in zip(values[:-1], values[1:]):
            mean = d0 * a**nsub
            var = p.gamma_rec * dt * d0 * a ** (nsub - 1) * (1.0 - a**nsub) / (1.0 - a)
            expected += -0.5 * (math.log(2 * math.pi * var) + (d1 - mean) ** 2 / var)
        got = kalman_loglik(p, Trajectory(0.0, h, values), dt=dt)
        assert abs(got - expected) < 1e-8 * abs(expected)

    def test_maximized_near_truth_on_ode_data(self):
        # noiseless ODE data in a large population: the grid maximum sits at
        # the generating (R0, gamma_rec)
        grid_r0 = np.linspace(1.2, 2.0, 9)
        grid_g = np.linspace(0.6, 1.4, 9)
        big = SisParams(beta_tx=1.5, gamma_rec=1.0, sigma_pop=100_000)
        t_grid = np.arange(0.0, 31.0)
        sol = solve_ode(big, (big.sigma_pop - 1000.0, 1000.0), t_grid)
        data = Trajectory(0.0, 1.0, sol[:, 1])
        best, arg = -math.inf, None
        for r0 in grid_r0:
            for g in grid_g:
                ll = kalman_loglik(SisParams(r0 * g, g, big.sigma_pop), data)
                if ll > best:
                    best, arg = ll, (r0, g)
        assert abs(arg[0] - 1.5) < 0.11
        assert abs(arg[1] - 1.0) < 0.11

    def test_refinement_shrinks_increments(self):
        data = _ctmc_data(SIS_REF, 60, 1.0, seed=21)
        lls = [kalman_loglik(SIS_REF, data, dt=1.0 / k) for k in (1, 2, 4, 8)]
        d_coarse = abs(lls[0] - lls[1])
        d_fine = abs(lls[2] - lls[3])
        assert d_fine < d_coarse
        assert d_coarse < 0.05 * abs(lls[3])

    def test_clamp_counter(self):
        # absurd parameters drive the mean out of [0, Sigma]
        data = Trajectory(0.0, 1.0, np.array([900.0, 950.0, 990.0]))
        res = kalman_loglik(SisParams(60.0, 0.01, 1000), data, full=True)
        assert res.clamp_count > 0
        assert math.isfinite(res.loglik) or res.loglik == -math.inf


class TestParticleKalman:
    def test_certain_event(self):
        series = BinarySeries(h=1.0, values=np.ones(5, dtype=np.int8), thresholds=(1.0,))
        assert abs(particle_kalman_binary_loglik(SIS_REF, series, c=1.0)) < 1e-9

    def test_median_split(self):
        u = sis_to_canonical(SIS_REF, 1.0)
        series = BinarySeries(h=1.0, values=np.array([1], dtype=np.int8), thresholds=(u.alpha,))
        assert abs(particle_kalman_binary_loglik(SIS_REF, series, c=u.alpha) - math.log(0.5)) < 1e-12

    def test_weights_renormalize(self):
        data = threshold_series(_ctmc_data(SIS_REF, 50, 1.0, seed=22), 300.0)
        res = particle_kalman_binary_loglik(SIS_REF, data, c=300.0, full=True)
        assert abs(res.cloud.weights.sum() - 1.0) < 1e-12
        assert math.isfinite(res.loglik)

    def test_particle_count_consistency(self):
        data = threshold_series(_ctmc_data(SIS_REF, 200, 1.0, seed=23), 320.0)
        ll_100 = particle_kalman_binary_loglik(SIS_REF, data, c=320.0, m=100)
        ll_400 = particle_kalman_binary_loglik(SIS_REF, data, c=320.0, m=400)
        assert abs(ll_100 - ll_400) < 0.005 * abs(ll_400)

    def test_underflow_returns_neg_inf(self):
        # an observation sequence the proposal deems impossible
        series = BinarySeries(h=1.0, values=np.zeros(400, dtype=np.int8), thresholds=(2.0,))
        res = particle_kalman_binary_loglik(SIS_REF, series, c=2.0, full=True)
        assert res.loglik == -math.inf
        assert res.underflow

    def test_rejects_bad_threshold(self):
        series = BinarySeries(h=1.0, values=np.array([1], dtype=np.int8), thresholds=(0.5,))
        with pytest.raises(ValueError):
            particle_kalman_binary_loglik(SIS_REF, series, c=2000.0)
        with pytest.raises(ValueError):
            particle_kalman_binary_loglik(SIS_REF, series, c=300.0, m=1)

    def test_invariant_under_singular_equivalence(self):
        # two SIS triples sharing the canonical (beta, sqrt(gamma)(c - alpha))
        # invariants are indistinguishable from long binary data
        from epiou.censored import singular_curve_in_sis_plane

        h = 1.0
        truth = SisParams(beta_tx=0.15, gamma_rec=0.1, sigma_pop=1000)
        u0 = sis_to_canonical(truth, h)
        c = 0.9 * truth.i_inf
        r0_b = 1.3
        gamma_b = truth.gamma_rec * (truth.r0 - 1.0) / (r0_b - 1.0)
        sigma_b = singular_curve_in_sis_plane(u0, c, gamma_b, h, [r0_b])[0, 1]
        other = SisParams(beta_tx=r0_b * gamma_b, gamma_rec=gamma_b, sigma_pop=sigma_b)
        u1 = sis_to_canonical(other, h)
        assert abs(u1.beta - u0.beta) < 1e-12
        assert abs(math.sqrt(u1.gamma) * (c - u1.alpha) - math.sqrt(u0.gamma) * (c - u0.alpha)) < 1e-9

        x = sample_exact(from_canonical(u0), u0.alpha, h, 2000, seed=derived_seed(24, 1))
        data = threshold_series(x, c)
        ll_truth = particle_kalman_binary_loglik(truth, data, c=c)
        ll_other = particle_kalman_binary_loglik(other, data, c=c)
        assert abs(ll_truth - ll_other) < 0.01 * abs(ll_truth)
