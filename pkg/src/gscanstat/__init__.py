"""Space-time cluster detection and cluster-aware disease risk estimation."""

from .data import StCell, StDataset, expected_crude, expected_stratified, load_dataset, write_dataset
from .graph import SpatialGraph, aggregate_units, build_graph, frontier, graph_from_edges, grid_graph, limiting_window
from .scan import ClusterSet, Direction, GscanStat, ScanParams, Window, detect, grow_window, log_lrt, monte_carlo_null, p_value, scan_all, significant_clusters

__version__ = "0.1.0"

__all__ = [
    "StCell", "StDataset", "expected_crude", "expected_stratified",
    "load_dataset", "write_dataset",
    "SpatialGraph", "aggregate_units", "build_graph", "frontier",
    "graph_from_edges", "grid_graph", "limiting_window",
    "ClusterSet", "Direction", "GscanStat", "ScanParams", "Window", "detect",
    "grow_window", "log_lrt", "monte_carlo_null", "p_value", "scan_all",
    "significant_clusters",
    "__version__",
]
