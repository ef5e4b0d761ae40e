"""Greedy space-time scan: statistic, window growth, Monte Carlo calibration.

The detector evaluates, for flexible connected windows ``W`` inside a limiting
window, the Poisson likelihood-ratio statistic

    log lambda = O(W) log(O(W)/E(W)) + (O - O(W)) log((O - O(W)) / (E - E(W)))

subject to a one-sided indicator: the inside rate must strictly exceed
(hot spots) or fall below (cold spots) the outside rate.  Significance comes
from a conditional Monte Carlo null that redistributes the fixed case total
over cells proportionally to the expected counts, with separate one-tailed
tests for the high and low directions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator

from . import _kernels
from .data import StCell, StDataset
from .errors import WindowCoversAll
from .graph import SpatialGraph

_CENTER_CHUNK = 4096  # bounds the (centers x window-cap) scratch matrix


class Direction(str, Enum):
    HIGH = "high"
    LOW = "low"


@dataclass(frozen=True)
class Window:
    """A connected space-time window with its evaluated statistic.

    ``cells`` keeps the insertion order of the greedy growth, so ``cells[0]``
    is the center.  ``log_lrt`` is None when neither one-sided indicator holds
    for an externally supplied window; grown windows always report a value
    (0 for a singleton whose statistic is undefined).
    """

    cells: tuple
    direction: Direction | None
    obs_in: int
    exp_in: float
    log_lrt: float | None

    def cell_set(self) -> frozenset:
        return frozenset(self.cells)


@dataclass(frozen=True)
class ScanParams:
    """Greedy scan configuration.

    K and T_star bound the limiting window (spatial neighbors and period
    band); ``n_replicates`` Monte Carlo replicates calibrate the two one-tailed
    nulls at level ``alpha``.
    """

    K: int
    T_star: int
    n_replicates: int = 999
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.T_star < 0:
            raise ValueError("T_star must be >= 0")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass(frozen=True)
class ClusterSet:
    """Significant, pairwise disjoint clusters ranked by descending statistic."""

    clusters: tuple
    null_high: np.ndarray
    null_low: np.ndarray


def log_lrt(obs_in, exp_in, total_obs, total_exp, direction) -> float | None:
    """Poisson log likelihood ratio of one window, or None.

    Returns None when the strict one-sided inequality between the inside rate
    ``obs_in/exp_in`` and the outside rate ``(total_obs - obs_in) /
    (total_exp - exp_in)`` does not hold for ``direction``.  The value is
    non-negative whenever the grand totals agree (the conditional scale the
    scan runs on), and uses the 0*log(0) = 0 convention.

    Raises
    ------
    WindowCoversAll
        If ``exp_in >= total_exp``: the statistic needs a proper subset.
    """
    if not 0 <= obs_in <= total_obs:
        raise ValueError("need 0 <= obs_in <= total_obs")
    if exp_in <= 0:
        raise ValueError("exp_in must be positive")
    if exp_in >= total_exp:
        raise WindowCoversAll(f"window expected mass {exp_in} >= total {total_exp}")
    obs_out = total_obs - obs_in
    exp_out = total_exp - exp_in
    high = Direction(direction) is Direction.HIGH
    if high and not obs_in * exp_out > obs_out * exp_in:
        return None
    if not high and not obs_in * exp_out < obs_out * exp_in:
        return None
    val = 0.0
    if obs_in > 0:
        val += obs_in * math.log(obs_in / exp_in)
    if obs_out > 0:
        val += obs_out * math.log(obs_out / exp_out)
    return val


def _canonical_arrays(dataset: StDataset, graph: SpatialGraph):
    if graph.n_areas != dataset.n_areas:
        raise ValueError("graph and dataset disagree on the number of areas")
    return dataset.obs_vector(), dataset.exp_vector()


def _window_cap(params: ScanParams, n_cells: int) -> int:
    return min(params.K * (2 * params.T_star + 1), n_cells)


def grow_window(dataset: StDataset, graph: SpatialGraph, center: StCell,
                params: ScanParams) -> Window:
    """Grow the greedy window for one center cell.

    The direction is sign-selected (low when observed < expected at the
    center); growth keeps the frontier cell giving the largest statistic while
    the statistic strictly increases.
    """
    obs, expv = _canonical_arrays(dataset, graph)
    n, T = graph.n_areas, dataset.n_periods
    flat = dataset.cell_index(center)
    cap = _window_cap(params, n * T)
    cells_out = np.empty((1, cap), dtype=np.int64)
    lengths = np.empty(1, dtype=np.int64)
    llrs = np.empty(1, dtype=np.float64)
    obs_ins = np.empty(1, dtype=np.int64)
    exp_ins = np.empty(1, dtype=np.float64)
    highs = np.empty(1, dtype=np.bool_)
    _kernels.scan_windows(obs, expv, graph.adj_indptr, graph.adj_indices,
                          graph.knn_rank, params.K, params.T_star, n, T,
                          np.array([flat], dtype=np.int64),
                          cells_out, lengths, llrs, obs_ins, exp_ins, highs)
    return _make_window(dataset, cells_out[0], int(lengths[0]), float(llrs[0]),
                        int(obs_ins[0]), float(exp_ins[0]), bool(highs[0]))


def _make_window(dataset, flat_cells, length, llr, obs_in, exp_in, high) -> Window:
    cells = tuple(dataset.cell_of(int(c)) for c in flat_cells[:length])
    return Window(cells=cells,
                  direction=Direction.HIGH if high else Direction.LOW,
                  obs_in=obs_in, exp_in=exp_in, log_lrt=llr)


def scan_all(dataset: StDataset, graph: SpatialGraph, params: ScanParams) -> list:
    """Grow one window per lattice cell, in canonical cell order."""
    obs, expv = _canonical_arrays(dataset, graph)
    n, T = graph.n_areas, dataset.n_periods
    nT = n * T
    cap = _window_cap(params, nT)
    out = []
    for start in range(0, nT, _CENTER_CHUNK):
        centers = np.arange(start, min(start + _CENTER_CHUNK, nT), dtype=np.int64)
        m = len(centers)
        cells_out = np.empty((m, cap), dtype=np.int64)
        lengths = np.empty(m, dtype=np.int64)
        llrs = np.empty(m, dtype=np.float64)
        obs_ins = np.empty(m, dtype=np.int64)
        exp_ins = np.empty(m, dtype=np.float64)
        highs = np.empty(m, dtype=np.bool_)
        _kernels.scan_windows(obs, expv, graph.adj_indptr, graph.adj_indices,
                              graph.knn_rank, params.K, params.T_star, n, T,
                              centers, cells_out, lengths, llrs, obs_ins,
                              exp_ins, highs)
        for k in range(m):
            out.append(_make_window(dataset, cells_out[k], int(lengths[k]),
                                    float(llrs[k]), int(obs_ins[k]),
                                    float(exp_ins[k]), bool(highs[k])))
    return out


def replicate_counts(dataset: StDataset, seed: int, replicate: int) -> np.ndarray:
    """Conditional-null counts for one replicate, canonical cell order.

    The fixed case total is redistributed over all cells by a multinomial draw
    with probabilities proportional to the expected counts; the RNG stream
    depends only on (seed, replicate), never on scheduling.
    """
    expv = dataset.exp_vector()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(replicate,)))
    return rng.multinomial(dataset.total_observed(), expv / expv.sum()).astype(np.int64)


def monte_carlo_null(dataset: StDataset, graph: SpatialGraph, params: ScanParams,
                     workers: int | None = None):
    """Null samples of the directionwise maximum statistic.

    Returns (null_high, null_low), each sorted ascending with one entry per
    replicate.  Replicates are independent multinomial redistributions of the
    observed total; results are identical for any worker count.
    """
    _, expv = _canonical_arrays(dataset, graph)
    n, T = graph.n_areas, dataset.n_periods
    draws = [replicate_counts(dataset, params.seed, r + 1)
             for r in range(params.n_replicates)]

    def one(counts):
        return _kernels.scan_maxima(counts, expv, graph.adj_indptr,
                                    graph.adj_indices, graph.knn_rank,
                                    params.K, params.T_star, n, T)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            maxima = list(pool.map(one, draws))
    else:
        maxima = [one(counts) for counts in draws]
    null_high = np.sort(np.array([m[0] for m in maxima]))
    null_low = np.sort(np.array([m[1] for m in maxima]))
    return null_high, null_low


def p_value(stat: float, null_samples) -> float:
    """Monte Carlo p-value: (1 + #{null >= stat}) / (M + 1).  Ties exceed."""
    nulls = np.asarray(null_samples, dtype=np.float64)
    if nulls.size == 0:
        raise ValueError("null_samples must be non-empty")
    return float((1 + int(np.sum(nulls >= stat))) / (nulls.size + 1))


def _center_order_key(dataset: StDataset, window: Window) -> int:
    return dataset.cell_index(window.cells[0])


def significant_clusters(windows, nulls, params, dataset: StDataset) -> ClusterSet:
    """Keep significant windows, most likely first, enforcing disjointness.

    Each window is tested against the null of its own direction.  Candidates
    with p <= alpha are visited in descending statistic order (ties by the
    canonical order of their centers) and accepted only when cell-disjoint
    from every already accepted cluster.  ``params`` may be any configuration
    object exposing ``alpha`` (greedy or cylindrical).
    """
    null_high, null_low = nulls
    candidates = []
    for w in windows:
        if w.log_lrt is None or w.direction is None:
            continue
        nd = null_high if w.direction is Direction.HIGH else null_low
        p = p_value(w.log_lrt, nd)
        if p <= params.alpha:
            candidates.append((w, p))
    candidates.sort(key=lambda wp: (-wp[0].log_lrt, _center_order_key(dataset, wp[0])))
    accepted = []
    used = set()
    for w, p in candidates:
        cells = w.cell_set()
        if cells & used:
            continue
        used |= cells
        accepted.append((w, p))
    return ClusterSet(clusters=tuple(accepted),
                      null_high=np.asarray(null_high, dtype=np.float64),
                      null_low=np.asarray(null_low, dtype=np.float64))


def detect(dataset: StDataset, graph: SpatialGraph, params: ScanParams,
           workers: int | None = None) -> ClusterSet:
    """Full pipeline: scan every center, calibrate, extract ranked clusters."""
    windows = scan_all(dataset, graph, params)
    nulls = monte_carlo_null(dataset, graph, params, workers=workers)
    return significant_clusters(windows, nulls, params, dataset)


class GscanStat(BaseEstimator):
    """Greedy space-time scan detector with an estimator interface.

    Parameters mirror :class:`ScanParams`; defaults suit a region of a few
    hundred areas.  After :meth:`fit`, ``clusters_`` holds the significant
    clusters and ``windows_`` the full per-center scan.
    """

    def __init__(self, K=150, T_star=5, n_replicates=999, alpha=0.05, seed=0,
                 workers=None):
        self.K = K
        self.T_star = T_star
        self.n_replicates = n_replicates
        self.alpha = alpha
        self.seed = seed
        self.workers = workers

    def _params(self, dataset) -> ScanParams:
        return ScanParams(K=min(self.K, dataset.n_areas), T_star=self.T_star,
                          n_replicates=self.n_replicates, alpha=self.alpha,
                          seed=self.seed)

    def fit(self, dataset: StDataset, graph: SpatialGraph):
        params = self._params(dataset)
        self.windows_ = scan_all(dataset, graph, params)
        self.null_high_, self.null_low_ = monte_carlo_null(
            dataset, graph, params, workers=self.workers)
        self.clusters_ = significant_clusters(
            self.windows_, (self.null_high_, self.null_low_), params, dataset)
        return self

    def fit_predict(self, dataset: StDataset, graph: SpatialGraph) -> np.ndarray:
        """Fit and return per-cell labels, (n_areas, n_periods), -1 = no cluster."""
        self.fit(dataset, graph)
        labels = np.full((dataset.n_areas, dataset.n_periods), -1, dtype=np.int64)
        for rank, (w, _) in enumerate(self.clusters_.clusters):
            for cell in w.cells:
                labels[cell.area, cell.period] = rank
        return labels
