"""Space-time count data: container, CSV ingestion and expected-case computation.

The lattice is ``n_areas`` spatial units observed over ``n_periods`` time
periods.  Cells are linearized period-major, ``flat = period * n_areas + area``,
so a stacked vector reads (all areas of period 1, all areas of period 2, ...).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInput, DuplicateCell, MissingCell, NonPositiveExpected


class StCell(NamedTuple):
    """One spatial unit at one time period (0-based indices)."""

    area: int
    period: int


@dataclass(frozen=True)
class StDataset:
    """Observed and expected case counts on an (area x period) lattice.

    Parameters
    ----------
    observed : (n_areas, n_periods) integer array, all entries >= 0.
    expected : (n_areas, n_periods) float array, all entries > 0.
    area_ids : one opaque string per area.
    period_labels : one opaque string per period.

    Instances are immutable; the arrays are locked after validation and can be
    shared freely across parallel workers.
    """

    observed: np.ndarray
    expected: np.ndarray
    area_ids: tuple
    period_labels: tuple

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=np.int64)
        exp = np.asarray(self.expected, dtype=np.float64)
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "expected", exp)
        object.__setattr__(self, "area_ids", tuple(str(a) for a in self.area_ids))
        object.__setattr__(self, "period_labels", tuple(str(p) for p in self.period_labels))
        if obs.ndim != 2 or exp.shape != obs.shape:
            raise ValueError(f"observed {obs.shape} and expected {exp.shape} must be 2-d and equal")
        n, T = obs.shape
        if len(self.area_ids) != n or len(self.period_labels) != T:
            raise ValueError("id/label lengths do not match the count arrays")
        if np.any(obs < 0):
            raise ValueError("observed counts must be non-negative")
        if not np.all(np.isfinite(exp)) or np.any(exp <= 0):
            raise NonPositiveExpected("expected counts must be positive and finite")
        obs.setflags(write=False)
        exp.setflags(write=False)

    @property
    def n_areas(self) -> int:
        return self.observed.shape[0]

    @property
    def n_periods(self) -> int:
        return self.observed.shape[1]

    @property
    def n_cells(self) -> int:
        return self.observed.size

    def total_observed(self) -> int:
        """Grand total of observed cases, the O entering every scan statistic."""
        return int(self.observed.sum())

    def total_expected(self) -> float:
        return float(self.expected.sum())

    def cell_index(self, cell: StCell) -> int:
        """Period-major flat index of a cell."""
        if not (0 <= cell.area < self.n_areas and 0 <= cell.period < self.n_periods):
            raise IndexError(f"cell {cell} outside the {self.n_areas}x{self.n_periods} lattice")
        return cell.period * self.n_areas + cell.area

    def cell_of(self, flat: int) -> StCell:
        return StCell(int(flat % self.n_areas), int(flat // self.n_areas))

    def obs_vector(self) -> np.ndarray:
        """Observed counts flattened in canonical (period-major) order."""
        return np.ascontiguousarray(self.observed.T.ravel())

    def exp_vector(self) -> np.ndarray:
        """Expected counts flattened in canonical (period-major) order."""
        return np.ascontiguousarray(self.expected.T.ravel())

    def area_index(self, area_id: str) -> int:
        try:
            return self.area_ids.index(area_id)
        except ValueError:
            raise KeyError(f"unknown area_id {area_id!r}") from None

    def period_index(self, label: str) -> int:
        try:
            return self.period_labels.index(label)
        except ValueError:
            raise KeyError(f"unknown period {label!r}") from None


LONG_HEADER = ["area_id", "period", "observed", "expected"]


def _read_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(field.strip() for field in row)]
    if not rows:
        raise MissingCell(f"{path}: empty file")
    return rows


def _read_order_file(path):
    with open(path, encoding="utf-8") as fh:
        order = [line.strip() for line in fh if line.strip()]
    if len(set(order)) != len(order):
        raise DuplicateCell(f"{path}: duplicate area_id in ordering file")
    return order


def load_dataset(counts_path, format="long-csv", order_path=None) -> StDataset:
    """Read a validated :class:`StDataset` from a CSV file.

    ``long-csv`` expects the header ``area_id,period,observed,expected`` and one
    row per cell.  ``wide-csv`` expects one row per area with the header
    ``area_id,obs_<period>...,exp_<period>...`` (matching period suffixes).
    Row/column order is canonicalized by lexicographic (area_id, period) sort
    unless ``order_path`` names a file with one area_id per line.

    Raises
    ------
    MissingCell, DuplicateCell, NonPositiveExpected
        When any (area, period) combination is absent, repeated, or carries a
        non-positive expected count.
    """
    if format == "long-csv":
        cells = _parse_long(counts_path)
    elif format == "wide-csv":
        cells = _parse_wide(counts_path)
    else:
        raise ValueError(f"unknown format {format!r}")

    area_ids = sorted({a for a, _ in cells})
    periods = sorted({p for _, p in cells})
    if order_path is not None:
        explicit = _read_order_file(order_path)
        if set(explicit) != set(area_ids):
            raise MissingCell("ordering file does not list exactly the area ids in the data")
        area_ids = explicit

    n, T = len(area_ids), len(periods)
    a_of = {a: i for i, a in enumerate(area_ids)}
    t_of = {p: t for t, p in enumerate(periods)}
    obs = np.zeros((n, T), dtype=np.int64)
    exp = np.zeros((n, T), dtype=np.float64)
    seen = np.zeros((n, T), dtype=bool)
    for (a, p), (o, e) in cells.items():
        i, t = a_of[a], t_of[p]
        if seen[i, t]:
            raise DuplicateCell(f"duplicate cell ({a!r}, {p!r})")
        seen[i, t] = True
        if o < 0:
            raise ValueError(f"negative observed count at ({a!r}, {p!r})")
        if not e > 0:
            raise NonPositiveExpected(f"expected <= 0 at ({a!r}, {p!r})")
        obs[i, t] = o
        exp[i, t] = e
    if not seen.all():
        i, t = np.argwhere(~seen)[0]
        raise MissingCell(f"missing cell ({area_ids[i]!r}, {periods[t]!r})")
    return StDataset(obs, exp, tuple(area_ids), tuple(periods))


def _parse_long(path):
    rows = _read_csv_rows(path)
    header = [h.strip() for h in rows[0]]
    if header != LONG_HEADER:
        raise ValueError(f"{path}: expected header {','.join(LONG_HEADER)}, got {','.join(header)}")
    cells = {}
    for row in rows[1:]:
        a, p, o, e = (field.strip() for field in row[:4])
        key = (a, p)
        if key in cells:
            raise DuplicateCell(f"duplicate cell ({a!r}, {p!r})")
        cells[key] = (int(o), float(e))
    return cells


def _parse_wide(path):
    rows = _read_csv_rows(path)
    header = [h.strip() for h in rows[0]]
    if header[0] != "area_id":
        raise ValueError(f"{path}: wide header must start with area_id")
    obs_cols = [(j, h[4:]) for j, h in enumerate(header) if h.startswith("obs_")]
    exp_cols = [(j, h[4:]) for j, h in enumerate(header) if h.startswith("exp_")]
    if [p for _, p in obs_cols] != [p for _, p in exp_cols] or not obs_cols:
        raise ValueError(f"{path}: obs_/exp_ period columns must match and be non-empty")
    cells = {}
    for row in rows[1:]:
        a = row[0].strip()
        for (jo, p), (je, _) in zip(obs_cols, exp_cols):
            key = (a, p)
            if key in cells:
                raise DuplicateCell(f"duplicate cell ({a!r}, {p!r})")
            cells[key] = (int(row[jo].strip()), float(row[je].strip()))
    return cells


def write_dataset(dataset: StDataset, path) -> None:
    """Write a dataset in the long CSV format (UTF-8, '.' decimal separator)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LONG_HEADER)
        for i, a in enumerate(dataset.area_ids):
            for t, p in enumerate(dataset.period_labels):
                writer.writerow([a, p, int(dataset.observed[i, t]),
                                 repr(float(dataset.expected[i, t]))])


def expected_crude(population, observed) -> np.ndarray:
    """Expected counts by proportional allocation of the grand total.

    ``E[i, t] = pop[i, t] * (total observed / total population)`` so the
    expected counts sum to the observed total exactly up to round-off.
    """
    pop = np.asarray(population, dtype=np.float64)
    obs = np.asarray(observed, dtype=np.float64)
    if pop.shape != obs.shape:
        raise ValueError("population and observed shapes differ")
    if np.any(pop <= 0):
        raise ValueError("all populations must be positive")
    total_pop = pop.sum()
    if total_pop <= 0:
        raise DegenerateInput("total population is zero")
    return pop * (obs.sum() / total_pop)


def expected_stratified(strata_cases, strata_populations) -> np.ndarray:
    """Internally standardized expected counts.

    Parameters
    ----------
    strata_cases, strata_populations : (n_strata, n_areas, n_periods) arrays.
        Per-stratum observed cases and person counts per cell; strata are
        assumed to partition the population.

    Each stratum contributes its global rate times its local population:
    ``E[i, t] = sum_s (cases_s.sum() / pop_s.sum()) * pop_s[i, t]``.
    """
    cases = np.asarray(strata_cases, dtype=np.float64)
    pops = np.asarray(strata_populations, dtype=np.float64)
    if cases.shape != pops.shape or cases.ndim != 3:
        raise ValueError("strata arrays must share a (n_strata, n_areas, n_periods) shape")
    pop_totals = pops.sum(axis=(1, 2))
    if np.any(pop_totals <= 0):
        raise DegenerateInput("a stratum has zero global population")
    rates = cases.sum(axis=(1, 2)) / pop_totals
    return np.einsum("s,sit->it", rates, pops)
