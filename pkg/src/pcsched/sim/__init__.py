from .engine import MigrationCostModel, Service, SimConfig, Simulation, run_simulation
from .groundtruth import GroundTruth, ServiceClass
from .metrics import RunMetrics, compute_metrics, nearest_rank
from .policies import PCS, Basic, Redundancy, Reissue, parse_policy
from .trace import SimulationTrace
from .workload import BatchJobSpec, JobClass, PoissonArrivals, SizeLevel, generate_interference_trace

__all__ = [
    "PCS",
    "Basic",
    "BatchJobSpec",
    "GroundTruth",
    "JobClass",
    "MigrationCostModel",
    "PoissonArrivals",
    "Redundancy",
    "Reissue",
    "RunMetrics",
    "Service",
    "ServiceClass",
    "SimConfig",
    "Simulation",
    "SimulationTrace",
    "SizeLevel",
    "compute_metrics",
    "generate_interference_trace",
    "nearest_rank",
    "parse_policy",
    "run_simulation",
]
