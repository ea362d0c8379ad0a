"""
Configuration Management for BundleLab.

This module provides centralized configuration management with validation,
environment variable loading, and sensible defaults.
"""

import os
from dataclasses import dataclass, field
from typing import Optional, List, Tuple
from enum import Enum
import logging


logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("csv", "report")


class LogLevel(Enum):
    """Supported log levels."""
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


def parse_formats(text: str) -> Tuple[str, ...]:
    """Comma list of output formats, e.g. "csv,report"."""
    return tuple(f.strip().lower() for f in text.split(",") if f.strip())


@dataclass
class NumericsConfig:
    """Configuration for the integrators and extension runs.

    Attributes:
        step: RK4 step
        agreement_tolerance: Max allowed deviation of an extension from its input
        residual_tolerance: Max allowed covariant residual on asserted axes
        depth: Construction depth of Cantor-like sets
        window: Window width of the maximal-extension scan
        resolution: Default grid nodes per axis
    """
    step: float = 1e-3
    agreement_tolerance: float = 1e-6
    residual_tolerance: float = 1e-5
    depth: int = 12
    window: int = 5
    resolution: int = 128

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")

        if self.agreement_tolerance <= 0 or self.residual_tolerance <= 0:
            raise ValueError("Tolerances must be positive")

        if self.depth < 1:
            raise ValueError(f"depth must be at least 1, got {self.depth}")

        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and at least 3, got {self.window}")

        if self.resolution < 8:
            raise ValueError(f"resolution must be at least 8, got {self.resolution}")

    @classmethod
    def from_env(cls) -> 'NumericsConfig':
        """Load configuration from environment variables.

        Returns:
            NumericsConfig instance populated from environment
        """
        return cls(
            step=float(os.getenv("BUNDLELAB_STEP", "1e-3")),
            agreement_tolerance=float(os.getenv("BUNDLELAB_AGREEMENT_TOL", "1e-6")),
            residual_tolerance=float(os.getenv("BUNDLELAB_RESIDUAL_TOL", "1e-5")),
            depth=int(os.getenv("BUNDLELAB_DEPTH", "12")),
            window=int(os.getenv("BUNDLELAB_WINDOW", "5")),
            resolution=int(os.getenv("BUNDLELAB_RESOLUTION", "128"))
        )


@dataclass
class OutputConfig:
    """Configuration for run artifacts.

    Attributes:
        output_dir: Directory receiving CSV files and reports
        formats: Artifact formats to write
        significant_digits: Digits of every printed number
    """
    output_dir: str = "./bundlelab-output"
    formats: Tuple[str, ...] = OUTPUT_FORMATS
    significant_digits: int = 12

    def __post_init__(self):
        """Validate configuration after initialization."""
        unknown = set(self.formats) - set(OUTPUT_FORMATS)
        if unknown:
            raise ValueError(f"Unknown output formats {sorted(unknown)}; choose from {', '.join(OUTPUT_FORMATS)}")

        if not 1 <= self.significant_digits <= 17:
            raise ValueError(f"significant_digits must be between 1 and 17, got {self.significant_digits}")

    @classmethod
    def from_env(cls) -> 'OutputConfig':
        """Load configuration from environment variables.

        Returns:
            OutputConfig instance populated from environment
        """
        return cls(
            output_dir=os.getenv("BUNDLELAB_OUTPUT_DIR", "./bundlelab-output"),
            formats=parse_formats(os.getenv("BUNDLELAB_FORMATS", ",".join(OUTPUT_FORMATS))),
            significant_digits=int(os.getenv("BUNDLELAB_SIGNIFICANT_DIGITS", "12"))
        )


@dataclass
class AppConfig:
    """Application-level configuration.

    Attributes:
        debug: Enable debug mode
        log_level: Logging level
        log_format: Log message format (text or json)
        log_file: Optional log file
    """
    debug: bool = False
    log_level: LogLevel = LogLevel.WARNING
    log_format: str = "text"  # "text" or "json"
    log_file: Optional[str] = None

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.log_format not in ["text", "json"]:
            raise ValueError(f"log_format must be 'text' or 'json', got {self.log_format}")

    @classmethod
    def from_env(cls) -> 'AppConfig':
        """Load configuration from environment variables.

        Returns:
            AppConfig instance populated from environment
        """
        debug = os.getenv("DEBUG", "false").lower() == "true"

        log_level_str = os.getenv("LOG_LEVEL", "DEBUG" if debug else "WARNING").upper()
        log_level = LogLevel[log_level_str]

        return cls(
            debug=debug,
            log_level=log_level,
            log_format=os.getenv("LOG_FORMAT", "text").lower(),
            log_file=os.getenv("LOG_FILE") or None
        )


@dataclass
class LabConfig:
    """Main configuration for BundleLab.

    This is the top-level configuration that combines all sub-configurations.
    """
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    app: AppConfig = field(default_factory=AppConfig)

    @classmethod
    def from_env(cls) -> 'LabConfig':
        """Load complete configuration from environment variables.

        Returns:
            LabConfig instance with all sub-configs loaded from environment
        """
        return cls(
            numerics=NumericsConfig.from_env(),
            output=OutputConfig.from_env(),
            app=AppConfig.from_env()
        )

    def validate(self) -> List[str]:
        """Validate the complete configuration.

        Returns:
            List of validation warnings (empty if all good)
        """
        warnings = []

        if self.numerics.step > 1e-2:
            warnings.append(f"RK4 step {self.numerics.step} is coarse; agreement at 1e-6 is unlikely")

        if self.numerics.depth > 16:
            warnings.append("Grid sweeps clamp Cantor depth at 16 generations")

        if not self.output.formats:
            warnings.append("No output formats selected; runs write no artifacts")

        if self.numerics.resolution > 512:
            warnings.append(f"Resolution {self.numerics.resolution} per axis makes scans slow")

        return warnings

    def summary(self) -> str:
        """Get a human-readable summary of the configuration.

        Returns:
            Configuration summary string
        """
        return f"""
BundleLab Configuration:
========================
Numerics:
  RK4 Step: {self.numerics.step}
  Agreement Tolerance: {self.numerics.agreement_tolerance}
  Residual Tolerance: {self.numerics.residual_tolerance}
  Cantor Depth: {self.numerics.depth}
  Scan Window: {self.numerics.window}
  Resolution: {self.numerics.resolution}

Output:
  Directory: {self.output.output_dir}
  Formats: {', '.join(self.output.formats) or 'none'}
  Significant Digits: {self.output.significant_digits}

Application:
  Debug Mode: {self.app.debug}
  Log Level: {self.app.log_level.value}
  Log Format: {self.app.log_format}
"""


# Global configuration instance
_config: Optional[LabConfig] = None


def get_config(reload: bool = False) -> LabConfig:
    """Get the global configuration instance.

    Args:
        reload: If True, reload configuration from environment

    Returns:
        LabConfig instance
    """
    global _config

    if _config is None or reload:
        _config = LabConfig.from_env()

        # Log any validation warnings
        warnings = _config.validate()
        if warnings:
            for warning in warnings:
                logger.warning(f"Config warning: {warning}")

    return _config


def reset_config() -> None:
    """Reset the global configuration (useful for testing)."""
    global _config
    _config = None
