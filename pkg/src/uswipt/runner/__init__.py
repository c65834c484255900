"""Command-line experiment driver: configs, presets, seeded sweeps, CSV output."""

from .config import ConfigError, ExperimentConfig, parse_file, parse_text, validate
from .experiments import PRESETS, list_presets, load_preset, run

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESETS",
    "list_presets",
    "load_preset",
    "parse_file",
    "parse_text",
    "run",
    "validate",
]
