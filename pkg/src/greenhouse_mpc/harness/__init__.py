"""Experiment harness: configuration, pipeline stages, CLI, SVG plots."""
from .config import ConfigError, ExperimentConfig, load_config
from .manifest import RunManifest
from .pipeline import HarnessError, build_report, evaluate_runs, generate_data, simulate, train_grid
from .svg import emit_svg

__all__ = [
    "ConfigError", "ExperimentConfig", "HarnessError", "RunManifest", "build_report", "emit_svg",
    "evaluate_runs", "generate_data", "load_config", "simulate", "train_grid",
]
