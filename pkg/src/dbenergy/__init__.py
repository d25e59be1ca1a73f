"""
dbenergy: energy profiler for database queries.

Measures the CPU and RAM energy (joules) a query costs on MySQL, PostgreSQL,
MongoDB and Couchbase by sampling utilization during execution and applying
a TDP-based power model.
"""

from dbenergy.adapters import connect, mock_adapter
from dbenergy.experiment import (
    ExperimentPlan,
    aggregate,
    build_schedule,
    disparity,
    most_efficient,
    run_experiment,
)
from dbenergy.manager import ConnectionManager
from dbenergy.tdp import detect_cpu, load_bundled_registry, resolve_tdp
from dbenergy.tracker import Tracker

__all__ = [
    "ConnectionManager",
    "ExperimentPlan",
    "Tracker",
    "aggregate",
    "build_schedule",
    "connect",
    "detect_cpu",
    "disparity",
    "load_bundled_registry",
    "mock_adapter",
    "most_efficient",
    "resolve_tdp",
    "run_experiment",
]

__version__ = "0.1.0"
