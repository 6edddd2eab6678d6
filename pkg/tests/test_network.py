import math

import numpy as np
import pytest

from epiou.epi import SiseParams, SisParams, simulate_ctmc_sis
from epiou.network import NetworkModel, simulate_network, synthetic_network
from epiou.seeds import derived_seed

DYN = SisParams(beta_tx=0.16, gamma_rec=0.1, sigma_pop=6000)


def _single_node_model(pop, prev, dynamics, period=1.0, threshold=0.3):
    return NetworkModel(
        nodes=np.array([[pop, prev]]),
        movements=np.empty((0, 4)),
        dynamics=dynamics,
        sentinels=np.array([0]),
        sample_period=period,
        threshold_c=threshold,
    )


class TestModelValidation:
    def test_rejects_empty_sentinels(self):
        with pytest.raises(ValueError):
            NetworkModel(
                nodes=np.array([[10.0, 0.1]]),
                movements=np.empty((0, 4)),
                dynamics=DYN,
                sentinels=np.array([], dtype=int),
            )

    def test_rejects_self_movement(self):
        with pytest.raises(ValueError):
            NetworkModel(
                nodes=np.array([[10.0, 0.1], [10.0, 0.1]]),
                movements=np.array([[1.0, 0.0, 0.0, 2.0]]),
                dynamics=DYN,
                sentinels=np.array([0]),
            )

    def test_seeding_rounds_half_up(self):
        model = NetworkModel(
            nodes=np.array([[25.0, 0.1], [10.0, 0.25]]),
            movements=np.empty((0, 4)),
            dynamics=DYN,
            sentinels=np.array([0]),
        )
        s, i = model.initial_counts()
        assert i.tolist() == [3, 3]  # 2.5 rounds up, 2.5 rounds up
        assert (s + i).tolist() == [25, 10]


class TestSyntheticNetwork:
    def test_shapes_and_rates(self):
        net = synthetic_network(50, 728.0, seed=1, dynamics=DYN, n_sentinels=25)
        assert net.n_nodes == 50
        assert net.sentinels.size == 25
        assert np.all(net.nodes[:, 0] >= 2)
        times = net.movements[:, 0]
        assert np.all(np.diff(times) >= 0)
        rate = len(net.movements) / (50 * 728.0)
        assert 0.1 < rate < 0.4

    def test_median_population_scale(self):
        net = synthetic_network(400, 10.0, seed=2, dynamics=DYN)
        med = float(np.median(net.nodes[:, 0]))
        assert 80 < med < 180


class TestSimulateNetwork:
    def test_deterministic(self):
        net = synthetic_network(20, 100.0, seed=3, dynamics=DYN, n_sentinels=10)
        a = simulate_network(net, 100.0, seed=4)
        b = simulate_network(net, 100.0, seed=4)
        assert np.array_equal(a.i_counts, b.i_counts)
        assert np.array_equal(a.pseudo_prevalence.values, b.pseudo_prevalence.values)

    def test_population_conserved(self):
        net = synthetic_network(20, 200.0, seed=5, dynamics=DYN, n_sentinels=10)
        samp = simulate_network(net, 200.0, seed=6)
        total0 = int(net.nodes[:, 0].sum())
        assert np.all(samp.populations.sum(axis=1) == total0)

    def test_single_node_reduces_to_ctmc(self):
        # degenerate network: same law as the single-node chain
        pop, prev = 900, 0.2
        p = SisParams(beta_tx=0.4, gamma_rec=0.1, sigma_pop=pop)
        model = _single_node_model(pop, prev, p, period=20.0)
        reps = 300
        net_final = np.empty(reps)
        ctmc_final = np.empty(reps)
        for r in range(reps):
            samp = simulate_network(model, 20.0, seed=derived_seed(7, r))
            net_final[r] = samp.i_counts[-1, 0]
            path = simulate_ctmc_sis(p, i0=round(pop * prev), t_end=20.0, seed=derived_seed(8, r))
            ctmc_final[r] = path.i_counts[-1]
        se = math.sqrt(net_final.var() / reps + ctmc_final.var() / reps)
        assert abs(net_final.mean() - ctmc_final.mean()) < 4 * se
        ratio = net_final.var() / ctmc_final.var()
        assert 0.6 < ratio < 1.6

    def test_saturated_tests_start_at_one(self):
        dyn = SisParams(beta_tx=0.5, gamma_rec=0.1, sigma_pop=6000)
        net = synthetic_network(
            30, 50.0, seed=9, dynamics=dyn, init_prevalence=0.5, threshold_c=0.3, n_sentinels=15
        )
        samp = simulate_network(net, 50.0, seed=10)
        assert samp.pseudo_prevalence.values[0] == 1.0

    def test_movement_rate_diagnostic(self):
        net = synthetic_network(50, 364.0, seed=11, dynamics=DYN, n_sentinels=25)
        samp = simulate_network(net, 364.0, seed=12)
        assert 0.1 < samp.movements_per_sentinel_day < 0.4

    def test_shortfall_moves_available_and_empty_skipped(self):
        nodes = np.array([[10.0, 0.0], [0.0, 0.0], [8.0, 0.5]])
        movements = np.array(
            [
                [1.0, 0.0, 2.0, 25.0],  # oversized: moves all 10
                [2.0, 1.0, 0.0, 3.0],  # empty source: skipped
            ]
        )
        model = NetworkModel(
            nodes=nodes,
            movements=movements,
            dynamics=SisParams(beta_tx=1e-9, gamma_rec=1e-9, sigma_pop=18),
            sentinels=np.array([2]),
            sample_period=3.0,
        )
        samp = simulate_network(model, 3.0, seed=13)
        assert samp.movements_skipped == 1
        assert samp.populations[0].tolist() == [0, 0, 18]

    def test_sise_network_runs(self):
        dyn = SiseParams(beta_tx=0.054, gamma_rec=0.1, rho=0.44, sigma_pop=6000)
        net = synthetic_network(
            20, 100.0, seed=14, dynamics=dyn, init_prevalence=0.02, threshold_c=0.04, n_sentinels=10
        )
        samp = simulate_network(net, 100.0, seed=15)
        assert samp.i_counts.shape[1] == 20
        assert np.all(samp.i_counts >= 0)
        series = samp.binary_series(0)
        assert set(np.unique(series.values)).issubset({0, 1})
