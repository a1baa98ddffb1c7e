"""Configuration, orchestration and output emission for experiments."""
from .config import ConfigError, ExperimentConfig, load_config, parse_config, serialize_config
from .experiments import ExperimentResult, Table, run_experiment
from .outputs import emit_outputs

__all__ = ["ConfigError", "ExperimentConfig", "ExperimentResult", "Table", "emit_outputs",
           "load_config", "parse_config", "run_experiment", "serialize_config"]
