from .experiment import CSV_HEADER, CellResult, MetricsReport, run_experiment
from .reports import PredictionErrorReport, ScalabilityReport, prediction_error_report, scalability_report
from .scenario import ScenarioConfig, load_scenario, parse_scenario, serialize_scenario

__all__ = [
    "CSV_HEADER",
    "CellResult",
    "MetricsReport",
    "PredictionErrorReport",
    "ScalabilityReport",
    "ScenarioConfig",
    "load_scenario",
    "parse_scenario",
    "prediction_error_report",
    "run_experiment",
    "scalability_report",
    "serialize_scenario",
]
