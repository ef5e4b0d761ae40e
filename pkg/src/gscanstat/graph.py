"""Spatial adjacency, neighbor ranking, limiting windows and unit merging."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .data import StCell, StDataset
from .errors import UnknownArea


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected adjacency plus centroid geometry for the study region.

    ``knn_rank[i]`` lists every area sorted by ascending Euclidean centroid
    distance from area ``i`` (the area itself first, distance ties broken by
    ascending area index).
    """

    area_ids: tuple
    adj_indptr: np.ndarray
    adj_indices: np.ndarray
    centroids: np.ndarray
    knn_rank: np.ndarray

    def __post_init__(self):
        for name in ("adj_indptr", "adj_indices", "knn_rank"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        cent = np.ascontiguousarray(self.centroids, dtype=np.float64)
        cent.setflags(write=False)
        object.__setattr__(self, "centroids", cent)
        object.__setattr__(self, "area_ids", tuple(str(a) for a in self.area_ids))

    @property
    def n_areas(self) -> int:
        return len(self.area_ids)

    def neighbors(self, i: int) -> np.ndarray:
        """Area indices adjacent to area ``i`` (sorted ascending)."""
        return self.adj_indices[self.adj_indptr[i]:self.adj_indptr[i + 1]]

    def degree(self, i: int) -> int:
        return int(self.adj_indptr[i + 1] - self.adj_indptr[i])

    def adjacency_matrix(self) -> csr_matrix:
        n = self.n_areas
        data = np.ones(len(self.adj_indices), dtype=np.float64)
        return csr_matrix((data, self.adj_indices, self.adj_indptr), shape=(n, n))

    def n_components(self) -> int:
        return int(connected_components(self.adjacency_matrix(), directed=False)[0])

    def area_index(self, area_id: str) -> int:
        try:
            return self.area_ids.index(area_id)
        except ValueError:
            raise UnknownArea(f"unknown area_id {area_id!r}") from None


def _knn_rank(centroids: np.ndarray) -> np.ndarray:
    n = len(centroids)
    diff = centroids[:, None, :] - centroids[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    idx = np.arange(n)
    rank = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        order = np.lexsort((idx, dist2[i]))
        # self first even when another area shares the centroid
        pos = int(np.nonzero(order == i)[0][0])
        if pos != 0:
            order = np.concatenate(([i], order[:pos], order[pos + 1:]))
        rank[i] = order
    return rank


def graph_from_edges(area_ids, edges, centroids) -> SpatialGraph:
    """Build a graph from an undirected edge list and planar centroids.

    Duplicate and reversed edges collapse to a single adjacency entry;
    self-loops are dropped.  A disconnected graph triggers a warning only.
    """
    area_ids = [str(a) for a in area_ids]
    index = {a: i for i, a in enumerate(area_ids)}
    n = len(area_ids)
    neigh = [set() for _ in range(n)]
    for a, b in edges:
        a, b = str(a), str(b)
        if a not in index or b not in index:
            missing = a if a not in index else b
            raise UnknownArea(f"edge references unknown area {missing!r}")
        i, j = index[a], index[b]
        if i == j:
            continue
        neigh[i].add(j)
        neigh[j].add(i)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        indptr[i + 1] = indptr[i] + len(neigh[i])
    indices = np.empty(indptr[-1], dtype=np.int64)
    for i in range(n):
        indices[indptr[i]:indptr[i + 1]] = sorted(neigh[i])
    cent = np.asarray(centroids, dtype=np.float64).reshape(n, 2)
    graph = SpatialGraph(tuple(area_ids), indptr, indices, cent, _knn_rank(cent))
    if graph.n_components() > 1:
        warnings.warn(f"spatial graph has {graph.n_components()} connected components",
                      stacklevel=2)
    return graph


def build_graph(adjacency_path, centroids_path) -> SpatialGraph:
    """Read a graph from an edge-list CSV and a centroid CSV.

    The edge file needs the header ``area_id_1,area_id_2`` (one undirected
    edge per row); the centroid file needs ``area_id,x,y`` with planar,
    pre-projected coordinates.  The area universe is taken from the centroid
    file.
    """
    with open(centroids_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["area_id", "x", "y"]:
        raise ValueError(f"{centroids_path}: expected header area_id,x,y")
    area_ids, cent = [], []
    for row in rows[1:]:
        if not row:
            continue
        area_ids.append(row[0].strip())
        cent.append((float(row[1]), float(row[2])))
    order = np.argsort(area_ids, kind="stable")
    area_ids = [area_ids[k] for k in order]
    cent = [cent[k] for k in order]

    with open(adjacency_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["area_id_1", "area_id_2"]:
        raise ValueError(f"{adjacency_path}: expected header area_id_1,area_id_2")
    edges = [(row[0].strip(), row[1].strip()) for row in rows[1:] if row]
    return graph_from_edges(area_ids, edges, cent)


def grid_graph(nrows: int, ncols: int, prefix="a") -> SpatialGraph:
    """Regular rook-adjacency grid with unit-spaced centroids (row-major ids)."""
    ids, cent, edges = [], [], []
    width = len(str(nrows * ncols - 1))
    for r in range(nrows):
        for c in range(ncols):
            ids.append(f"{prefix}{r * ncols + c:0{width}d}")
            cent.append((float(c), float(r)))
    for r in range(nrows):
        for c in range(ncols):
            k = r * ncols + c
            if c + 1 < ncols:
                edges.append((ids[k], ids[k + 1]))
            if r + 1 < nrows:
                edges.append((ids[k], ids[k + ncols]))
    return graph_from_edges(ids, edges, cent)


@dataclass(frozen=True)
class LimitingWindow:
    """Cells reachable by window growth around a center cell.

    Areas come from the center's K nearest neighbors; periods from the
    ``center.period +- T_star`` band clipped to the study span.
    """

    center: StCell
    allowed_cells: frozenset


def limiting_window(graph: SpatialGraph, center: StCell, K: int, T_star: int,
                    n_periods: int) -> LimitingWindow:
    """Enumerate the limiting window of a center cell."""
    n = graph.n_areas
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    if T_star < 0:
        raise ValueError("T_star must be >= 0")
    if not (0 <= center.area < n and 0 <= center.period < n_periods):
        raise IndexError(f"center {center} outside the lattice")
    areas = graph.knn_rank[center.area, :K]
    t_lo = max(0, center.period - T_star)
    t_hi = min(n_periods - 1, center.period + T_star)
    cells = frozenset(StCell(int(a), t) for a in areas for t in range(t_lo, t_hi + 1))
    return LimitingWindow(center, cells)


def frontier(window_cells, limiting: LimitingWindow, graph: SpatialGraph) -> set:
    """Cells of the limiting window adjacent to the current window.

    A cell qualifies if it is spatially adjacent to a member at the same
    period, or the same area as a member at an adjacent period, and is not
    itself a member.
    """
    window = set(window_cells)
    if not window <= limiting.allowed_cells:
        raise ValueError("window cells must lie inside the limiting window")
    out = set()
    for cell in window:
        for j in graph.neighbors(cell.area):
            cand = StCell(int(j), cell.period)
            if cand in limiting.allowed_cells and cand not in window:
                out.add(cand)
        for t in (cell.period - 1, cell.period + 1):
            cand = StCell(cell.area, t)
            if cand in limiting.allowed_cells and cand not in window:
                out.add(cand)
    return out


@dataclass(frozen=True)
class AggregationResult:
    """Outcome of the case-threshold unit merge."""

    graph: SpatialGraph
    dataset: StDataset
    mapping: dict
    flagged_units: tuple


def aggregate_units(graph: SpatialGraph, dataset: StDataset, threshold: int,
                    region_labels) -> AggregationResult:
    """Merge low-count units until every unit reaches ``threshold`` observed cases.

    Repeatedly the unit with the smallest all-period case total below the
    threshold absorbs its adjacent neighbor with the same region label that has
    the smallest case total (ties by area index).  Merges never cross region
    labels; a whole region stuck below the threshold is flagged, not fatal.
    Observed and expected counts are summed cell-wise, adjacency is the union
    of member adjacencies and centroids are case-weighted means (plain means
    when a unit has zero cases).  The merged unit keeps the lexicographically
    smallest member id.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    n = graph.n_areas
    if isinstance(region_labels, dict):
        labels = [str(region_labels[a]) for a in graph.area_ids]
    else:
        labels = [str(x) for x in region_labels]
        if len(labels) != n:
            raise ValueError("one region label per area required")

    members = {i: [i] for i in range(n)}
    totals = {i: int(dataset.observed[i].sum()) for i in range(n)}
    neigh = {i: set(int(j) for j in graph.neighbors(i)) for i in range(n)}
    label_of = {i: labels[i] for i in range(n)}
    stuck = set()

    while True:
        pending = [u for u in members if totals[u] < threshold and u not in stuck]
        if not pending:
            break
        u = min(pending, key=lambda k: (totals[k], k))
        same = [v for v in neigh[u] if label_of[v] == label_of[u]]
        if not same:
            stuck.add(u)
            continue
        v = min(same, key=lambda k: (totals[k], k))
        keep, drop = (u, v) if u < v else (v, u)
        members[keep] = members[keep] + members[drop]
        totals[keep] = totals[keep] + totals[drop]
        new_neigh = (neigh[keep] | neigh[drop]) - {keep, drop}
        for w in neigh[drop]:
            neigh[w].discard(drop)
            if w not in (keep, drop):
                neigh[w].add(keep)
        for w in neigh[keep]:
            neigh[w].add(keep)
        neigh[keep] = new_neigh
        del members[drop], totals[drop], neigh[drop], label_of[drop]

    unit_ids = {}
    for u, mem in members.items():
        unit_ids[u] = min(graph.area_ids[i] for i in mem)
    order = sorted(members, key=lambda u: unit_ids[u])

    mapping = {}
    for u in order:
        for i in members[u]:
            mapping[graph.area_ids[i]] = unit_ids[u]

    T = dataset.n_periods
    obs = np.zeros((len(order), T), dtype=np.int64)
    exp = np.zeros((len(order), T), dtype=np.float64)
    cent = np.zeros((len(order), 2), dtype=np.float64)
    for k, u in enumerate(order):
        mem = members[u]
        obs[k] = dataset.observed[mem].sum(axis=0)
        exp[k] = dataset.expected[mem].sum(axis=0)
        weights = dataset.observed[mem].sum(axis=1).astype(np.float64)
        if weights.sum() > 0:
            cent[k] = (graph.centroids[mem] * weights[:, None]).sum(axis=0) / weights.sum()
        else:
            cent[k] = graph.centroids[mem].mean(axis=0)

    pos = {u: k for k, u in enumerate(order)}
    edges = []
    for u in order:
        for v in neigh[u]:
            if v in pos and pos[u] < pos[v]:
                edges.append((unit_ids[u], unit_ids[v]))
    new_ids = [unit_ids[u] for u in order]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        merged_graph = graph_from_edges(new_ids, edges, cent)
    merged_data = StDataset(obs, exp, tuple(new_ids), dataset.period_labels)
    flagged = tuple(sorted(unit_ids[u] for u in stuck))
    return AggregationResult(merged_graph, merged_data, mapping, flagged)


def write_mapping_report(mapping: dict, path) -> None:
    """Write the merge mapping as CSV ``old_area_id,new_unit_id``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["old_area_id", "new_unit_id"])
        for old in sorted(mapping):
            writer.writerow([old, mapping[old]])
