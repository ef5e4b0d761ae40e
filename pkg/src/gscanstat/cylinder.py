"""Cylindrical space-time scan used as the comparison baseline.

Candidate windows are cylinders: a centroid-distance prefix of areas around a
center crossed with a period interval.  The spatial base grows while its
expected mass stays within ``max_spatial_fraction`` of the study total
(the nearest area alone is always admissible), and interval lengths are capped
at ``max_temporal_fraction`` of the study span.  Expected counts proxy the
population at risk.  Significance testing reuses the conditional Monte Carlo
null of the greedy scan, maximizing over cylinders instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from sklearn.base import BaseEstimator

from .data import StCell, StDataset
from .graph import SpatialGraph
from .scan import ClusterSet, Direction, Window, replicate_counts, significant_clusters


@dataclass(frozen=True)
class CylinderParams:
    """Cylindrical scan configuration (defaults follow common practice:
    spatial cap half the total at-risk mass, temporal cap 90% of the span)."""

    max_spatial_fraction: float = 0.5
    max_temporal_fraction: float = 0.9
    n_replicates: int = 999
    alpha: float = 0.05
    seed: int = 0
    directions: tuple = (Direction.HIGH, Direction.LOW)

    def __post_init__(self):
        if not 0.0 < self.max_spatial_fraction <= 1.0:
            raise ValueError("max_spatial_fraction must be in (0, 1]")
        if not 0.0 < self.max_temporal_fraction <= 1.0:
            raise ValueError("max_temporal_fraction must be in (0, 1]")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        object.__setattr__(self, "directions",
                           tuple(Direction(d) for d in self.directions))


class CylinderFamily:
    """Deduplicated cylinder windows with a sparse cell-membership matrix."""

    def __init__(self, dataset: StDataset, graph: SpatialGraph,
                 params: CylinderParams):
        n, T = dataset.n_areas, dataset.n_periods
        area_mass = dataset.expected.sum(axis=1)
        total_exp = float(dataset.expected.sum())
        cap_mass = params.max_spatial_fraction * total_exp
        max_len = max(1, int(np.floor(params.max_temporal_fraction * T)))

        seen = {}
        bases = []  # per distinct base: sorted tuple of areas
        base_intervals = []
        for center in range(n):
            order = graph.knn_rank[center]
            running = 0.0
            for k in range(1, n + 1):
                running += float(area_mass[order[k - 1]])
                if k > 1 and running > cap_mass:
                    break
                base = tuple(sorted(int(a) for a in order[:k]))
                if base not in seen:
                    seen[base] = len(bases)
                    bases.append(base)
                    base_intervals.append(set())
                b = seen[base]
                for t1 in range(T):
                    for t2 in range(t1, min(T, t1 + max_len)):
                        base_intervals[b].add((t1, t2))

        rows = []
        self.base_of = []
        self.t1 = []
        self.t2 = []
        indptr = [0]
        indices = []
        for b, base in enumerate(bases):
            for (t1, t2) in sorted(base_intervals[b]):
                self.base_of.append(b)
                self.t1.append(t1)
                self.t2.append(t2)
                for t in range(t1, t2 + 1):
                    indices.extend(t * n + a for a in base)
                indptr.append(len(indices))
        self.bases = bases
        self.n_cylinders = len(self.base_of)
        self.membership = csr_matrix(
            (np.ones(len(indices), dtype=np.float64),
             np.array(indices, dtype=np.int64),
             np.array(indptr, dtype=np.int64)),
            shape=(self.n_cylinders, n * T))
        self.exp_in = self.membership @ dataset.exp_vector()
        self.total_exp = total_exp
        self.n_areas = n

    def obs_in(self, counts: np.ndarray) -> np.ndarray:
        return self.membership @ counts.astype(np.float64)

    def cells(self, k: int) -> tuple:
        base = self.bases[self.base_of[k]]
        return tuple(StCell(a, t) for t in range(self.t1[k], self.t2[k] + 1)
                     for a in base)


def _llr_both(obs_in, exp_in, total_obs, total_exp):
    """Vectorized statistic per window for both directions.

    Returns (llr_high, llr_low); NaN where the direction's indicator fails or
    the window is not a proper subset of the expected mass.
    """
    obs_in = np.asarray(obs_in, dtype=np.float64)
    exp_in = np.asarray(exp_in, dtype=np.float64)
    obs_out = total_obs - obs_in
    exp_out = total_exp - exp_in
    proper = exp_out > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_in = np.where(obs_in > 0, obs_in * np.log(obs_in / exp_in), 0.0)
        t_out = np.where(obs_out > 0, obs_out * np.log(obs_out / exp_out), 0.0)
        val = t_in + t_out
        lhs = obs_in * exp_out
        rhs = obs_out * exp_in
    high = np.where(proper & (lhs > rhs), val, np.nan)
    low = np.where(proper & (lhs < rhs), val, np.nan)
    return high, low


def enumerate_cylinders(dataset: StDataset, graph: SpatialGraph,
                        params: CylinderParams):
    """Yield every distinct cylinder evaluated on the observed data.

    Windows whose statistic is undefined in both directions are yielded with
    ``direction=None`` and ``log_lrt=None``.
    """
    family = CylinderFamily(dataset, graph, params)
    obs_in = family.obs_in(dataset.obs_vector())
    total_obs = float(dataset.total_observed())
    high, low = _llr_both(obs_in, family.exp_in, total_obs, family.total_exp)
    for k in range(family.n_cylinders):
        if not np.isnan(high[k]):
            direction, llr = Direction.HIGH, float(high[k])
        elif not np.isnan(low[k]):
            direction, llr = Direction.LOW, float(low[k])
        else:
            direction, llr = None, None
        yield Window(cells=family.cells(k), direction=direction,
                     obs_in=int(round(obs_in[k])), exp_in=float(family.exp_in[k]),
                     log_lrt=llr)


def _direction_maxima(family, counts, total_obs, use_high, use_low):
    high, low = _llr_both(family.obs_in(counts), family.exp_in,
                          total_obs, family.total_exp)
    mh = np.nanmax(high) if use_high and not np.all(np.isnan(high)) else 0.0
    ml = np.nanmax(low) if use_low and not np.all(np.isnan(low)) else 0.0
    return float(mh), float(ml)


def cylinder_null(dataset: StDataset, graph: SpatialGraph, params: CylinderParams,
                  family: CylinderFamily | None = None):
    """Monte Carlo null of the cylinder maxima, one entry per replicate."""
    if family is None:
        family = CylinderFamily(dataset, graph, params)
    total_obs = float(dataset.total_observed())
    use_high = Direction.HIGH in params.directions
    use_low = Direction.LOW in params.directions
    null_high = np.empty(params.n_replicates)
    null_low = np.empty(params.n_replicates)
    for r in range(params.n_replicates):
        counts = replicate_counts(dataset, params.seed, r + 1)
        null_high[r], null_low[r] = _direction_maxima(
            family, counts, total_obs, use_high, use_low)
    return np.sort(null_high), np.sort(null_low)


def scan_cylindrical(dataset: StDataset, graph: SpatialGraph,
                     params: CylinderParams) -> ClusterSet:
    """Cylindrical scan with Monte Carlo significance and disjoint secondaries."""
    family = CylinderFamily(dataset, graph, params)
    windows = [w for w in enumerate_cylinders(dataset, graph, params)
               if w.direction is not None and w.direction in params.directions]
    nulls = cylinder_null(dataset, graph, params, family=family)
    return significant_clusters(windows, nulls, params, dataset)


class CylindricalScan(BaseEstimator):
    """Cylindrical space-time scan with an estimator interface."""

    def __init__(self, max_spatial_fraction=0.5, max_temporal_fraction=0.9,
                 n_replicates=999, alpha=0.05, seed=0):
        self.max_spatial_fraction = max_spatial_fraction
        self.max_temporal_fraction = max_temporal_fraction
        self.n_replicates = n_replicates
        self.alpha = alpha
        self.seed = seed

    def _params(self) -> CylinderParams:
        return CylinderParams(max_spatial_fraction=self.max_spatial_fraction,
                              max_temporal_fraction=self.max_temporal_fraction,
                              n_replicates=self.n_replicates, alpha=self.alpha,
                              seed=self.seed)

    def fit(self, dataset: StDataset, graph: SpatialGraph):
        self.clusters_ = scan_cylindrical(dataset, graph, self._params())
        return self
