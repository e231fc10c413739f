"""Predictive component-level scheduling for multi-stage online services."""

from .contention import ContentionVector, TrainingSample, read_training_csv
from .matrix import MigrationState, NodeState, PerformanceMatrix, PlacementProblem, build_matrix
from .model import CombinedModel, ResourceRegression, build_combined_model, predict_service_time
from .queueing import SATURATED, ComponentLoad, ServiceTopology, mg1_latency, overall_latency, stage_latency
from .scheduler import PCSScheduler, SchedulerConfig, brute_force_allocate, schedule

__version__ = "0.1.0"

__all__ = [
    "SATURATED",
    "CombinedModel",
    "ComponentLoad",
    "ContentionVector",
    "MigrationState",
    "NodeState",
    "PCSScheduler",
    "PerformanceMatrix",
    "PlacementProblem",
    "ResourceRegression",
    "SchedulerConfig",
    "ServiceTopology",
    "TrainingSample",
    "brute_force_allocate",
    "build_combined_model",
    "build_matrix",
    "mg1_latency",
    "overall_latency",
    "predict_service_time",
    "read_training_csv",
    "schedule",
    "stage_latency",
]
