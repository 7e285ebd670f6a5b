"""Change-point detection and spatial anomaly ranking for left-censored
water-quality measurements."""

from .anomaly import ClusterScore, StationEmpirical, pareto_levels, rank_clusters, wasserstein1
from .changepoint import PenaltyPath, Segmentation, crops, elbow_select, pelt, segment_pipeline
from .clustering import (ClusterHierarchy, Clustering, greedy_global_hierarchy, select_clustering,
                         ward_hierarchy)
from .graph import RiverNetwork, StationGraph, build_station_graph, induced_subgraph, shortest_path_matrix
from .ingest import CoarseSeries, Measurement, build_coarse_series, parse_measurements
from .weibull import Bounds, CensoredSample, WeibullParams, fit_mle, fit_rate_fixed_shape

__version__ = "0.1.0"

__all__ = [
    "Bounds", "CensoredSample", "ClusterHierarchy", "ClusterScore", "Clustering", "CoarseSeries",
    "Measurement", "PenaltyPath", "RiverNetwork", "Segmentation", "StationEmpirical",
    "StationGraph", "WeibullParams", "build_coarse_series", "build_station_graph", "crops",
    "elbow_select", "fit_mle", "fit_rate_fixed_shape", "greedy_global_hierarchy",
    "induced_subgraph", "parse_measurements", "pareto_levels", "pelt", "rank_clusters",
    "segment_pipeline", "select_clustering", "shortest_path_matrix", "ward_hierarchy",
    "wasserstein1",
]
