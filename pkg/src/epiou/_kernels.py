"""Jitted Gillespie kernels for the SIS / SIS_E chains, single node and network.

All kernels seed numba's internal RNG on entry, so a call is bit-reproducible
given its seed.  Infectious-pressure dynamics are integrated exactly between
jump candidates (linear ODE solution) with thinning for the time-varying
infection rate.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def sis_path_kernel(seed, beta, gamma, sigma, i0, t_end, cap):
    np.random.seed(seed)
    times = np.empty(cap)
    icounts = np.empty(cap, np.int64)
    t = 0.0
    ii = i0
    times[0] = 0.0
    icounts[0] = ii
    k = 1
    while True:
        a1 = beta * (sigma - ii) * ii / sigma
        a2 = gamma * ii
        atot = a1 + a2
        if atot <= 0.0:
            break
        t += np.random.exponential(1.0 / atot)
        if t >= t_end:
            break
        if np.random.random() * atot < a1:
            ii += 1
        else:
            ii -= 1
        if k >= cap:
            return times[:k].copy(), icounts[:k].copy(), False
        times[k] = t
        icounts[k] = ii
        k += 1
    return times[:k].copy(), icounts[:k].copy(), True


@njit(cache=True)
def sise_path_kernel(seed, beta, gamma, rho, sigma, i0, phi0, t_end, cap):
    np.random.seed(seed)
    times = np.empty(cap)
    icounts = np.empty(cap, np.int64)
    phis = np.empty(cap)
    t = 0.0
    ii = i0
    ph = phi0
    times[0] = 0.0
    icounts[0] = ii
    phis[0] = ph
    k = 1
    while True:
        ss = sigma - ii
        phi_inf = ii / (sigma * rho)
        lam_rec = gamma * ii
        phi_bound = ph if ph > phi_inf else phi_inf
        lam_inf_bound = beta * ss * phi_bound
        lam_tot = lam_rec + lam_inf_bound
        if lam_tot <= 0.0:
            break
        tau = np.random.exponential(1.0 / lam_tot)
        if t + tau >= t_end:
            break
        ph = phi_inf + (ph - phi_inf) * math.exp(-rho * tau)
        t += tau
        accept = False
        if np.random.random() * lam_tot < lam_rec:
            ii -= 1
            accept = True
        elif np.random.random() * lam_inf_bound < beta * ss * ph:
            ii += 1
            accept = True
        if accept:
            if k >= cap:
                return times[:k].copy(), icounts[:k].copy(), phis[:k].copy(), False
            times[k] = t
            icounts[k] = ii
            phis[k] = ph
            k += 1
    return times[:k].copy(), icounts[:k].copy(), phis[:k].copy(), True


@njit(cache=True)
def _advance_sis_node(s, i, node_t, j, t_target, beta, gamma):
    t = node_t[j]
    sj = s[j]
    ij = i[j]
    pop = sj + ij
    if pop > 0 and ij > 0:
        while True:
            a1 = beta * sj * ij / pop
            a2 = gamma * ij
            atot = a1 + a2
            if atot <= 0.0:
                break
            t += np.random.exponential(1.0 / atot)
            if t >= t_target:
                break
            if np.random.random() * atot < a1:
                sj -= 1
                ij += 1
            else:
                sj += 1
                ij -= 1
    s[j] = sj
    i[j] = ij
    node_t[j] = t_target


@njit(cache=True)
def _advance_sise_node(s, i, phi, node_t, j, t_target, beta, gamma, rho):
    t = node_t[j]
    sj = s[j]
    ij = i[j]
    ph = phi[j]
    while t < t_target:
        pop = sj + ij
        if pop <= 0:
            ph *= math.exp(-rho * (t_target - t))
            t = t_target
            break
        phi_inf = ij / (pop * rho)
        lam_rec = gamma * ij
        phi_bound = ph if ph > phi_inf else phi_inf
        lam_inf_bound = beta * sj * phi_bound
        lam_tot = lam_rec + lam_inf_bound
        if lam_tot <= 0.0:
            ph = phi_inf + (ph - phi_inf) * math.exp(-rho * (t_target - t))
            t = t_target
            break
        tau = np.random.exponential(1.0 / lam_tot)
        if t + tau >= t_target:
            ph = phi_inf + (ph - phi_inf) * math.exp(-rho * (t_target - t))
            t = t_target
            break
        ph = phi_inf + (ph - phi_inf) * math.exp(-rho * tau)
        t += tau
        if np.random.random() * lam_tot < lam_rec:
            sj += 1
            ij -= 1
        elif np.random.random() * lam_inf_bound < beta * sj * ph:
            sj -= 1
            ij += 1
    s[j] = sj
    i[j] = ij
    phi[j] = ph
    node_t[j] = t_target


@njit(cache=True)
def _move_individuals(s, i, src, dst, count):
    """Transplant `count` individuals, infection states drawn hypergeometrically.

    Returns 1 when the movement had to be skipped (empty source).
    """
    avail = s[src] + i[src]
    move = count if count < avail else avail
    if move <= 0:
        return 1
    if i[src] <= 0:
        inf_moved = 0
    elif s[src] <= 0:
        inf_moved = move
    else:
        inf_moved = np.random.hypergeometric(i[src], s[src], move)
    sus_moved = move - inf_moved
    s[src] -= sus_moved
    i[src] -= inf_moved
    s[dst] += sus_moved
    i[dst] += inf_moved
    return 0


@njit(cache=True)
def network_sis_kernel(seed, beta, gamma, s0, i0, mov_t, mov_src, mov_dst, mov_cnt, sample_t):
    np.random.seed(seed)
    n = s0.size
    s = s0.copy()
    i = i0.copy()
    node_t = np.zeros(n)
    nk = sample_t.size
    out_i = np.zeros((nk, n), np.int64)
    out_pop = np.zeros((nk, n), np.int64)
    skipped = 0
    mi = 0
    si = 0
    nm = mov_t.size
    while mi < nm or si < nk:
        if mi < nm and (si >= nk or mov_t[mi] <= sample_t[si]):
            t = mov_t[mi]
            _advance_sis_node(s, i, node_t, mov_src[mi], t, beta, gamma)
            _advance_sis_node(s, i, node_t, mov_dst[mi], t, beta, gamma)
            skipped += _move_individuals(s, i, mov_src[mi], mov_dst[mi], mov_cnt[mi])
            mi += 1
        else:
            t = sample_t[si]
            for j in range(n):
                _advance_sis_node(s, i, node_t, j, t, beta, gamma)
                out_i[si, j] = i[j]
                out_pop[si, j] = s[j] + i[j]
            si += 1
    return out_i, out_pop, skipped


@njit(cache=True)
def network_sise_kernel(seed, beta, gamma, rho, s0, i0, phi0, mov_t, mov_src, mov_dst, mov_cnt, sample_t):
    np.random.seed(seed)
    n = s0.size
    s = s0.copy()
    i = i0.copy()
    phi = phi0.copy()
    node_t = np.zeros(n)
    nk = sample_t.size
    out_i = np.zeros((nk, n), np.int64)
    out_pop = np.zeros((nk, n), np.int64)
    skipped = 0
    mi = 0
    si = 0
    nm = mov_t.size
    while mi < nm or si < nk:
        if mi < nm and (si >= nk or mov_t[mi] <= sample_t[si]):
            t = mov_t[mi]
            _advance_sise_node(s, i, phi, node_t, mov_src[mi], t, beta, gamma, rho)
            _advance_sise_node(s, i, phi, node_t, mov_dst[mi], t, beta, gamma, rho)
            skipped += _move_individuals(s, i, mov_src[mi], mov_dst[mi], mov_cnt[mi])
            mi += 1
        else:
            t = sample_t[si]
            for j in range(n):
                _advance_sise_node(s, i, phi, node_t, j, t, beta, gamma, rho)
                out_i[si, j] = i[j]
                out_pop[si, j] = s[j] + i[j]
            si += 1
    return out_i, out_pop, skipped
