"""
Configuration Module for BundleLab.

This module provides centralized configuration management with environment
variable loading, validation, and sensible defaults, plus the run-config
model used by the command line.
"""

from config.config import (
    LabConfig,
    NumericsConfig,
    OutputConfig,
    AppConfig,
    LogLevel,
    OUTPUT_FORMATS,
    get_config,
    reset_config
)
from config.run_config import RunConfig, load_run_config, parse_matrices

__all__ = [
    "LabConfig",
    "NumericsConfig",
    "OutputConfig",
    "AppConfig",
    "LogLevel",
    "OUTPUT_FORMATS",
    "get_config",
    "reset_config",
    "RunConfig",
    "load_run_config",
    "parse_matrices",
]
