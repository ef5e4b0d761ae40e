"""Shared fixtures and independent oracles used across the test suite."""

import itertools

import numpy as np
import pytest

from gscanstat.data import StCell, StDataset
from gscanstat.graph import SpatialGraph, graph_from_edges, grid_graph, limiting_window


@pytest.fixture
def path4_graph():
    return graph_from_edges(["a", "b", "c", "d"],
                            [("a", "b"), ("b", "c"), ("c", "d")],
                            [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)])


@pytest.fixture
def grid3x3():
    return grid_graph(3, 3)


def make_dataset(observed, expected, prefix="a"):
    obs = np.asarray(observed)
    exp = np.asarray(expected, dtype=float)
    n, T = obs.shape
    width = len(str(n - 1))
    ids = tuple(f"{prefix}{i:0{width}d}" for i in range(n))
    labels = tuple(f"p{t}" for t in range(T))
    return StDataset(obs, exp, ids, labels)


def random_tree_graph(rng, n):
    """Uniform-ish random labelled tree with random planar centroids."""
    edges = []
    ids = [f"a{i}" for i in range(n)]
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.append((ids[i], ids[j]))
    cent = rng.uniform(0, 10, size=(n, 2))
    return graph_from_edges(ids, edges, cent)


def oracle_loglrt(obs_in, exp_in, total_obs, total_exp, high):
    """Direct evaluation of the one-sided likelihood-ratio statistic."""
    obs_out = total_obs - obs_in
    exp_out = total_exp - exp_in
    r_in = obs_in / exp_in
    r_out = obs_out / exp_out
    if high and not r_in > r_out:
        return None
    if not high and not r_in < r_out:
        return None
    val = 0.0
    if obs_in > 0:
        val += obs_in * np.log(r_in)
    if obs_out > 0:
        val += obs_out * np.log(r_out)
    return val


def _cell_neighbors(graph, cell, allowed, n_periods):
    out = []
    for j in graph.neighbors(cell.area):
        cand = StCell(int(j), cell.period)
        if cand in allowed:
            out.append(cand)
    for t in (cell.period - 1, cell.period + 1):
        if 0 <= t < n_periods:
            cand = StCell(cell.area, t)
            if cand in allowed:
                out.append(cand)
    return out


def enumerate_connected_windows(graph, dataset, center, K, T_star):
    """Every space-time connected window containing ``center`` inside its
    limiting window.  Exponential; intended for lattices of ~12 cells."""
    lw = limiting_window(graph, center, K, T_star, dataset.n_periods)
    allowed = lw.allowed_cells
    seen = set()
    start = frozenset([center])
    stack = [start]
    seen.add(start)
    while stack:
        win = stack.pop()
        yield win
        frontier = set()
        for cell in win:
            frontier.update(c for c in _cell_neighbors(graph, cell, allowed, dataset.n_periods)
                            if c not in win)
        for cell in frontier:
            nxt = win | {cell}
            key = frozenset(nxt)
            if key not in seen:
                seen.add(key)
                stack.append(key)


def brute_force_best(graph, dataset, center, direction_high, K, T_star):
    """Exhaustive maximum of the statistic over connected windows on a center.

    Only proper windows (expected mass strictly below the total) count.
    Returns 0.0 when no window has a defined statistic.
    """
    obs = dataset.observed
    exp = dataset.expected
    total_obs = int(obs.sum())
    total_exp = float(exp.sum())
    best = 0.0
    for win in enumerate_connected_windows(graph, dataset, center, K, T_star):
        obs_in = sum(int(obs[c.area, c.period]) for c in win)
        exp_in = sum(float(exp[c.area, c.period]) for c in win)
        if exp_in >= total_exp:
            continue
        val = oracle_loglrt(obs_in, exp_in, total_obs, total_exp, direction_high)
        if val is not None and val > best:
            best = val
    return best


def brute_force_global(graph, dataset, K, T_star):
    """Exhaustive directionwise maxima over all connected proper windows."""
    best = {True: 0.0, False: 0.0}
    seen = set()
    obs = dataset.observed
    exp = dataset.expected
    total_obs = int(obs.sum())
    total_exp = float(exp.sum())
    for i in range(dataset.n_areas):
        for t in range(dataset.n_periods):
            for win in enumerate_connected_windows(graph, dataset, StCell(i, t), K, T_star):
                if win in seen:
                    continue
                seen.add(win)
                obs_in = sum(int(obs[c.area, c.period]) for c in win)
                exp_in = sum(float(exp[c.area, c.period]) for c in win)
                if exp_in >= total_exp:
                    continue
                for high in (True, False):
                    val = oracle_loglrt(obs_in, exp_in, total_obs, total_exp, high)
                    if val is not None and val > best[high]:
                        best[high] = val
    return best[True], best[False]


def enumerate_cylinders_oracle(dataset, graph, max_spatial_fraction, max_temporal_fraction):
    """Independent cylinder family enumeration used to cross-check the baseline."""
    n, T = dataset.n_areas, dataset.n_periods
    total_exp = float(dataset.expected.sum())
    area_mass = dataset.expected.sum(axis=1)
    max_len = max(1, int(np.floor(max_temporal_fraction * T)))
    fam = set()
    for center in range(n):
        order = graph.knn_rank[center]
        mass = 0.0
        for k in range(1, n + 1):
            mass += float(area_mass[order[k - 1]])
        # rebuild prefix masses explicitly to mirror the documented rule
        prefixes = []
        running = 0.0
        for k in range(1, n + 1):
            running += float(area_mass[order[k - 1]])
            if k == 1 or running <= max_spatial_fraction * total_exp:
                prefixes.append(tuple(sorted(int(a) for a in order[:k])))
            else:
                break
        for base in prefixes:
            for t1 in range(T):
                for t2 in range(t1, min(T, t1 + max_len)):
                    fam.add((base, t1, t2))
    return fam
