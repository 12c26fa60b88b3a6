"""Design-graph guided architecture and hyper-parameter search."""

from ._falcon import (
    ConfigError,
    DataError,
    DesignSpace,
    DomainError,
    EvaluationError,
    FalconError,
    NumericError,
    SearchAborted,
    default_start_count,
    graph_stats,
    label_propagate,
    multi_hop_neighbors,
    ranking_loss,
    search,
    search_callable,
    synthetic_scores,
    top_k_size,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DesignSpace",
    "DomainError",
    "EvaluationError",
    "FalconError",
    "NumericError",
    "SearchAborted",
    "default_start_count",
    "graph_stats",
    "label_propagate",
    "multi_hop_neighbors",
    "ranking_loss",
    "search",
    "search_callable",
    "synthetic_scores",
    "top_k_size",
]
