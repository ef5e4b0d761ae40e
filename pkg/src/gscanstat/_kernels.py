"""Compiled kernels for greedy window growth over a space-time lattice.

All arrays use the canonical period-major cell layout (flat = period * n + area).
Kernels are serial per dataset and release the GIL, so callers may run
independent datasets/replicates on a thread pool; results never depend on the
degree of parallelism.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def poisson_loglrt(obs_in, exp_in, total_obs, total_exp, high):
    """Log likelihood ratio of a window, NaN when the indicator fails.

    Caller guarantees 0 < exp_in < total_exp.  Uses the 0*log(0) = 0
    convention for empty windows and for windows holding every case.
    """
    obs_out = total_obs - obs_in
    exp_out = total_exp - exp_in
    lhs = obs_in * exp_out
    rhs = obs_out * exp_in
    if high:
        if not lhs > rhs:
            return np.nan
    else:
        if not lhs < rhs:
            return np.nan
    val = 0.0
    if obs_in > 0:
        val += obs_in * np.log(obs_in / exp_in)
    if obs_out > 0:
        val += obs_out * np.log(obs_out / exp_out)
    return val


@njit(cache=True, nogil=True)
def grow(obs, expv, total_obs, total_exp, indptr, indices, knn, K, T_star,
         n, T, ci, ct, member, infront, in_kset, frontier, cells, touched):
    """Greedy growth from center (ci, ct) inside its limiting window.

    Starts from the singleton, repeatedly appends the frontier cell that gives
    the largest defined statistic, and stops as soon as no candidate strictly
    improves it (or the frontier empties, or every candidate would swallow the
    full expected mass).  The scratch masks must arrive all-False and are
    restored to all-False before returning.

    Returns (length, log_lrt, obs_in, exp_in, is_high); cells[:length] holds
    the window in insertion order.  A singleton with an undefined statistic
    reports log_lrt 0.
    """
    for r in range(K):
        in_kset[knn[ci, r]] = True
    t_lo = ct - T_star
    if t_lo < 0:
        t_lo = 0
    t_hi = ct + T_star
    if t_hi > T - 1:
        t_hi = T - 1

    center = ct * n + ci
    member[center] = True
    cells[0] = center
    length = 1
    n_touch = 0
    touched[n_touch] = center
    n_touch += 1

    obs_in = np.int64(obs[center])
    exp_in = expv[center]
    is_high = obs[center] >= expv[center]
    cur = np.nan
    if exp_in < total_exp:
        cur = poisson_loglrt(obs_in, exp_in, total_obs, total_exp, is_high)
    if np.isnan(cur):
        cur = 0.0  # undefined singleton reports 0 and may still grow

    n_front = 0
    for p in range(indptr[ci], indptr[ci + 1]):
        j = indices[p]
        if in_kset[j]:
            cell = ct * n + j
            frontier[n_front] = cell
            n_front += 1
            infront[cell] = True
            touched[n_touch] = cell
            n_touch += 1
    for tt in (ct - 1, ct + 1):
        if t_lo <= tt <= t_hi:
            cell = tt * n + ci
            frontier[n_front] = cell
            n_front += 1
            infront[cell] = True
            touched[n_touch] = cell
            n_touch += 1

    while n_front > 0:
        best = -np.inf
        best_cell = -1
        best_idx = -1
        for f in range(n_front):
            cell = frontier[f]
            new_exp = exp_in + expv[cell]
            if new_exp >= total_exp:
                continue
            val = poisson_loglrt(obs_in + obs[cell], new_exp,
                                 total_obs, total_exp, is_high)
            # NaN (undefined) fails both comparisons and is never selected
            if val > best or (val == best and cell < best_cell):
                best = val
                best_cell = cell
                best_idx = f
        if best_cell < 0 or best <= cur:
            break
        # accept the candidate
        frontier[best_idx] = frontier[n_front - 1]
        n_front -= 1
        infront[best_cell] = False
        member[best_cell] = True
        cells[length] = best_cell
        length += 1
        obs_in += obs[best_cell]
        exp_in += expv[best_cell]
        cur = best
        bi = best_cell % n
        bt = best_cell // n
        for p in range(indptr[bi], indptr[bi + 1]):
            j = indices[p]
            if in_kset[j]:
                cell = bt * n + j
                if not member[cell] and not infront[cell]:
                    frontier[n_front] = cell
                    n_front += 1
                    infront[cell] = True
                    touched[n_touch] = cell
                    n_touch += 1
        for tt in (bt - 1, bt + 1):
            if t_lo <= tt <= t_hi:
                cell = tt * n + bi
                if not member[cell] and not infront[cell]:
                    frontier[n_front] = cell
                    n_front += 1
                    infront[cell] = True
                    touched[n_touch] = cell
                    n_touch += 1

    for r in range(K):
        in_kset[knn[ci, r]] = False
    for k in range(n_touch):
        member[touched[k]] = False
        infront[touched[k]] = False
    return length, cur, obs_in, exp_in, is_high


@njit(cache=True, nogil=True)
def scan_windows(obs, expv, indptr, indices, knn, K, T_star, n, T, centers,
                 cells_out, lengths, llrs, obs_ins, exp_ins, highs):
    """Grow one window per requested center; fill the preallocated outputs."""
    nT = n * T
    total_obs = np.int64(0)
    for c in range(nT):
        total_obs += obs[c]
    total_exp = 0.0
    for c in range(nT):
        total_exp += expv[c]
    member = np.zeros(nT, dtype=np.bool_)
    infront = np.zeros(nT, dtype=np.bool_)
    in_kset = np.zeros(n, dtype=np.bool_)
    cap = cells_out.shape[1]
    frontier = np.empty(cap + 8, dtype=np.int64)
    touched = np.empty(2 * cap + 8, dtype=np.int64)
    for k in range(len(centers)):
        center = centers[k]
        ci = center % n
        ct = center // n
        length, llr, oin, ein, high = grow(
            obs, expv, total_obs, total_exp, indptr, indices, knn, K, T_star,
            n, T, ci, ct, member, infront, in_kset, frontier,
            cells_out[k], touched)
        lengths[k] = length
        llrs[k] = llr
        obs_ins[k] = oin
        exp_ins[k] = ein
        highs[k] = high


@njit(cache=True, nogil=True)
def scan_maxima(obs, expv, indptr, indices, knn, K, T_star, n, T):
    """Directionwise maxima of the greedy statistic over every center.

    Returns (max_high, max_low); a direction with no grown window reports 0.
    """
    nT = n * T
    total_obs = np.int64(0)
    for c in range(nT):
        total_obs += obs[c]
    total_exp = 0.0
    for c in range(nT):
        total_exp += expv[c]
    member = np.zeros(nT, dtype=np.bool_)
    infront = np.zeros(nT, dtype=np.bool_)
    in_kset = np.zeros(n, dtype=np.bool_)
    band = 2 * T_star + 1
    cap = K * band
    if cap > nT:
        cap = nT
    cells = np.empty(cap, dtype=np.int64)
    frontier = np.empty(cap + 8, dtype=np.int64)
    touched = np.empty(2 * cap + 8, dtype=np.int64)
    max_high = -np.inf
    max_low = -np.inf
    for center in range(nT):
        ci = center % n
        ct = center // n
        _, llr, _, _, high = grow(
            obs, expv, total_obs, total_exp, indptr, indices, knn, K, T_star,
            n, T, ci, ct, member, infront, in_kset, frontier, cells, touched)
        if high:
            if llr > max_high:
                max_high = llr
        else:
            if llr > max_low:
                max_low = llr
    if max_high == -np.inf:
        max_high = 0.0
    if max_low == -np.inf:
        max_low = 0.0
    return max_high, max_low
