"""Metapopulation epidemics: nodewise SIS/SIS_E dynamics coupled by movements.

Nodes evolve independently as exact jump processes between scheduled
movement events; a movement transplants individuals whose disease states are
drawn hypergeometrically from the source composition.  Sentinel nodes are
tested periodically against a prevalence threshold, and the
population-weighted fraction of positive sentinels forms the
pseudo-prevalence series used for inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .censored import BinarySeries
from .epi import SiseParams, SisParams
from .ou import Trajectory

__all__ = [
    "NetworkModel",
    "NetworkSample",
    "synthetic_network",
    "simulate_network",
]


@dataclass
class NetworkModel:
    """Node populations/seeding, movement schedule, shared dynamics and sampling plan.

    nodes is an (n, 2) array of (population, initial prevalence fraction);
    movements is an (m, 4) array of (time, src, dst, head count) sorted by
    time.  dynamics.sigma_pop records the total network population; nodal
    rates always use the node's current local population.
    """

    nodes: np.ndarray
    movements: np.ndarray
    dynamics: SisParams | SiseParams
    sentinels: np.ndarray
    sample_period: float = 7.0
    threshold_c: float = 0.3

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.movements = np.asarray(self.movements, dtype=float).reshape(-1, 4)
        self.sentinels = np.asarray(self.sentinels, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2 or self.nodes.shape[0] == 0:
            raise ValueError("nodes must be an (n, 2) array of (population, prevalence)")
        if np.any(self.nodes[:, 0] < 0) or np.any((self.nodes[:, 1] < 0) | (self.nodes[:, 1] > 1)):
            raise ValueError("populations must be nonnegative and prevalences in [0, 1]")
        if self.sentinels.size == 0:
            raise ValueError("sentinel set must be non-empty")
        n = self.n_nodes
        if np.any((self.sentinels < 0) | (self.sentinels >= n)):
            raise ValueError("sentinel index out of range")
        if self.movements.size:
            if np.any(np.diff(self.movements[:, 0]) < 0):
                raise ValueError("movements must be sorted by time")
            src, dst = self.movements[:, 1], self.movements[:, 2]
            if np.any((src < 0) | (src >= n) | (dst < 0) | (dst >= n) | (src == dst)):
                raise ValueError("movement endpoints invalid")
            if np.any(self.movements[:, 3] < 1):
                raise ValueError("movement head counts must be >= 1")
        if not (0.0 < self.threshold_c < 1.0):
            raise ValueError("threshold_c is a prevalence fraction in (0, 1)")
        if self.sample_period <= 0.0:
            raise ValueError("sample_period must be positive")

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def initial_counts(self):
        """Per-node (S, I) seeding; infected = round-half-up of pop * prevalence."""
        pops = self.nodes[:, 0].astype(np.int64)
        infected = np.floor(pops * self.nodes[:, 1] + 0.5).astype(np.int64)
        infected = np.minimum(infected, pops)
        return pops - infected, infected


def synthetic_network(
    n_nodes: int,
    t_end: float,
    seed,
    dynamics: SisParams | SiseParams,
    median_population: float = 120.0,
    population_sigma: float = 0.6,
    movement_rate: float = 0.2,
    movement_size_mean: float = 3.0,
    n_sentinels: int | None = None,
    sample_period: float = 7.0,
    threshold_c: float = 0.3,
    init_prevalence: float = 0.1,
) -> NetworkModel:
    """Generate a synthetic movement network.

    Populations are log-normal around the given median, movement events are
    Poisson in time at `movement_rate` per node-day with uniform distinct
    endpoints and geometric sizes (mean `movement_size_mean`).
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    rng = np.random.default_rng(seed)
    pops = np.maximum(2, np.round(rng.lognormal(math.log(median_population), population_sigma, n_nodes)))
    n_mov = rng.poisson(movement_rate * n_nodes * t_end)
    times = np.sort(rng.uniform(0.0, t_end, n_mov))
    src = rng.integers(0, n_nodes, n_mov)
    shift = rng.integers(1, n_nodes, n_mov)
    dst = (src + shift) % n_nodes
    sizes = rng.geometric(1.0 / movement_size_mean, n_mov)
    movements = np.column_stack([times, src, dst, sizes]).astype(float)
    if n_sentinels is None:
        n_sentinels = max(1, n_nodes // 2)
    sentinels = np.sort(rng.choice(n_nodes, size=n_sentinels, replace=False))
    nodes = np.column_stack([pops, np.full(n_nodes, init_prevalence)])
    return NetworkModel(
        nodes=nodes,
        movements=movements,
        dynamics=dynamics,
        sentinels=sentinels,
        sample_period=sample_period,
        threshold_c=threshold_c,
    )


@dataclass
class NetworkSample:
    """Sentinel test outcomes and the derived pseudo-prevalence series."""

    sample_times: np.ndarray
    positives: np.ndarray
    sentinel_populations: np.ndarray
    pseudo_prevalence: Trajectory
    i_counts: np.ndarray
    populations: np.ndarray
    sentinels: np.ndarray
    threshold_c: float
    movements_skipped: int
    movements_per_sentinel_day: float
    seed: int | None = None

    def binary_series(self, sentinel_index: int) -> BinarySeries:
        """The binary test record of one sentinel node (index into the sentinel list)."""
        return BinarySeries(
            h=float(self.sample_times[1] - self.sample_times[0]) if self.sample_times.size > 1 else 1.0,
            values=self.positives[:, sentinel_index],
            thresholds=None,
            t0=float(self.sample_times[0]),
        )


def simulate_network(model: NetworkModel, t_end: float, seed: int) -> NetworkSample:
    """Simulate the network and sample the sentinels every sample_period.

    A sentinel tests positive when its prevalence I/pop is at or above
    threshold_c; the pseudo-prevalence is the population-weighted fraction of
    positive sentinels.  Movements from empty nodes are skipped (counted),
    oversized ones move everyone available.
    """
    if t_end <= 0.0:
        raise ValueError("t_end must be positive")
    s0, i0 = model.initial_counts()
    n_samples = int(math.floor(t_end / model.sample_period + 1e-9))
    if n_samples < 1:
        raise ValueError("no sample times before t_end")
    sample_t = model.sample_period * np.arange(1, n_samples + 1)
    mov = model.movements[model.movements[:, 0] <= t_end]
    mov_t = np.ascontiguousarray(mov[:, 0])
    mov_src = np.ascontiguousarray(mov[:, 1].astype(np.int64))
    mov_dst = np.ascontiguousarray(mov[:, 2].astype(np.int64))
    mov_cnt = np.ascontiguousarray(mov[:, 3].astype(np.int64))
    dyn = model.dynamics
    if isinstance(dyn, SiseParams):
        phi0 = np.zeros(model.n_nodes)
        out_i, out_pop, skipped = _kernels.network_sise_kernel(
            seed, dyn.beta_tx, dyn.gamma_rec, dyn.rho, s0, i0, phi0,
            mov_t, mov_src, mov_dst, mov_cnt, sample_t,
        )
    else:
        out_i, out_pop, skipped = _kernels.network_sis_kernel(
            seed, dyn.beta_tx, dyn.gamma_rec, s0, i0,
            mov_t, mov_src, mov_dst, mov_cnt, sample_t,
        )
    sent = model.sentinels
    sent_i = out_i[:, sent]
    sent_pop = out_pop[:, sent]
    with np.errstate(invalid="ignore", divide="ignore"):
        prevalence = np.where(sent_pop > 0, sent_i / np.maximum(sent_pop, 1), 0.0)
    positives = (prevalence >= model.threshold_c).astype(np.int8)
    pop_total = sent_pop.sum(axis=1)
    weighted = np.where(pop_total > 0, (sent_pop * positives).sum(axis=1) / np.maximum(pop_total, 1), 0.0)
    pseudo = Trajectory(t0=float(sample_t[0]), h=model.sample_period, values=weighted, seed=seed)
    into_sentinels = int(np.isin(mov_dst, sent).sum())
    return NetworkSample(
        sample_times=sample_t,
        positives=positives,
        sentinel_populations=sent_pop,
        pseudo_prevalence=pseudo,
        i_counts=out_i,
        populations=out_pop,
        sentinels=sent,
        threshold_c=model.threshold_c,
        movements_skipped=int(skipped),
        movements_per_sentinel_day=into_sentinels / (sent.size * t_end),
        seed=seed,
    )
