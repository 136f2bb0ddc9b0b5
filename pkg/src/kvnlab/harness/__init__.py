"""Config-driven experiment runner, reports and command line."""
from .config import ConfigError, ExperimentConfig, default_config, parse_config, parse_config_text
from .experiments import run_experiment
from .report import RunReport, strip_runtime
