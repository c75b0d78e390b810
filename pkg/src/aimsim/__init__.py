"""Simulation and coordination of autonomous vehicles at an unsignalized intersection."""

from .engine import RunConfig, RunResult, config_from_dict, lane_rates_for, load_config, run
from .harness import BoxStats, ComparisonSpec, avg_objective, avg_ttc, box_stats, run_comparison
from .model import ConfigError, LaneGeometry, PhysicalParams, default_geometry

__all__ = [
    "BoxStats",
    "ComparisonSpec",
    "ConfigError",
    "LaneGeometry",
    "PhysicalParams",
    "RunConfig",
    "RunResult",
    "avg_objective",
    "avg_ttc",
    "box_stats",
    "config_from_dict",
    "default_geometry",
    "lane_rates_for",
    "load_config",
    "run",
    "run_comparison",
]
