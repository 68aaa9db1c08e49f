"""Configuration, experiment presets and the command line."""

from .cli import main
from .config import SCHEMA, Config, ConfigError, default_config, format_config, parse_config, parse_config_text, validate
from .presets import COLUMNS, PRESETS, run_preset, task_seed

__all__ = [
    "COLUMNS",
    "PRESETS",
    "SCHEMA",
    "Config",
    "ConfigError",
    "default_config",
    "format_config",
    "main",
    "parse_config",
    "parse_config_text",
    "run_preset",
    "task_seed",
    "validate",
]
