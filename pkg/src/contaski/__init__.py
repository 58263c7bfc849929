"""Capability-similarity clustering and quorum-gated task allocation for IIoT networks."""

from .config import ScenarioError, load_json, validate_scenario
from .metrics import aggregate_replications, compute_run_metrics, metrics_from_trace
from .model import Task, TaskStatus
from .similarity import capability_similarity, is_similar, required_subset
from .sim import RunResult, Simulator, run

__all__ = [
    "RunResult",
    "ScenarioError",
    "Simulator",
    "Task",
    "TaskStatus",
    "aggregate_replications",
    "capability_similarity",
    "compute_run_metrics",
    "is_similar",
    "load_json",
    "metrics_from_trace",
    "required_subset",
    "run",
    "validate_scenario",
]
