"""Camera-network re-identification query engine and synthetic benchmark."""

from .graph import CameraGraph, GraphPreset, build_graph, make_preset, shortest_path
from .predict import (
    MlePredictor,
    NeighborDistribution,
    NgramPredictor,
    UniformPredictor,
    predictor_accuracy,
)
from .rnn import RnnConfig, RnnModel, RnnPredictor, train
from .search import (
    CostModel,
    Query,
    QueryResult,
    SearchConfig,
    run_query_adaptive,
    run_query_naive,
    run_query_oracle,
)
from .trajgen import TrajGenConfig, Trajectory, generate_trajectories, split_dataset

__version__ = "0.1.0"

__all__ = [
    "CameraGraph",
    "CostModel",
    "GraphPreset",
    "MlePredictor",
    "NeighborDistribution",
    "NgramPredictor",
    "Query",
    "QueryResult",
    "RnnConfig",
    "RnnModel",
    "RnnPredictor",
    "SearchConfig",
    "TrajGenConfig",
    "Trajectory",
    "UniformPredictor",
    "build_graph",
    "generate_trajectories",
    "make_preset",
    "predictor_accuracy",
    "run_query_adaptive",
    "run_query_naive",
    "run_query_oracle",
    "shortest_path",
    "split_dataset",
    "train",
]
