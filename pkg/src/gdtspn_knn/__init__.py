"""Remaining-time prediction for running cases with stochastic Petri nets
mined from the nearest training traces."""

__version__ = "0.1.0"

from .eventlog import (Event, EventLog, LogError, Trace, descriptive_stats, make_trace,
                       mean_case_duration, parse_csv, parse_xes, prefix_at, read_log,
                       split_out_of_time)
from .petri import PetriNet, ReplayError, Transition, replay
from .discovery import ProcessTree, inductive_miner, tree_to_petri
from .gdtspn import (GDTSPN, DurationDistribution, PredictionFailure, SimulationConfig, enrich,
                     predict_remaining, truncated_sample)
from .knn import NeighborSelection, TrainingSet, select_neighbors, times_to_occurrence
from .predict import (Prediction, benchmark_average, benchmark_knn_average, predict_gdtspn,
                      predict_gdtspn_knn)
from .evaluate import ExperimentConfig, IterationMetrics, run_experiment, write_report

__all__ = [
    "Event", "EventLog", "LogError", "Trace", "descriptive_stats", "make_trace",
    "mean_case_duration", "parse_csv", "parse_xes", "prefix_at", "read_log",
    "split_out_of_time", "PetriNet", "ReplayError", "Transition", "replay", "ProcessTree",
    "inductive_miner", "tree_to_petri", "GDTSPN", "DurationDistribution", "PredictionFailure",
    "SimulationConfig", "enrich", "predict_remaining", "truncated_sample", "NeighborSelection",
    "TrainingSet", "select_neighbors", "times_to_occurrence", "Prediction", "benchmark_average",
    "benchmark_knn_average", "predict_gdtspn", "predict_gdtspn_knn", "ExperimentConfig",
    "IterationMetrics", "run_experiment", "write_report",
]
