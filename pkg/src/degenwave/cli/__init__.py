"""Run orchestration: config parsing, stage pipeline, plots, CLI entry."""

from .config import ConfigError, RunConfig, load_config
from .pipeline import PipelineRunner, StageFailure, emit_plot_data, run_pipeline

__all__ = ["ConfigError", "RunConfig", "load_config", "PipelineRunner",
           "StageFailure", "emit_plot_data", "run_pipeline"]
