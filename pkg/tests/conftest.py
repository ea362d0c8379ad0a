"""Shared fixtures for the BundleLab test suite."""

import numpy as np
import pytest
from click.testing import CliRunner

from config import reset_config
from transport_core.sets import OpenBox


ENV_KEYS = (
    "BUNDLELAB_STEP", "BUNDLELAB_AGREEMENT_TOL", "BUNDLELAB_RESIDUAL_TOL", "BUNDLELAB_DEPTH",
    "BUNDLELAB_WINDOW", "BUNDLELAB_RESOLUTION", "BUNDLELAB_OUTPUT_DIR",
    "BUNDLELAB_FORMATS", "BUNDLELAB_SIGNIFICANT_DIGITS", "DEBUG", "LOG_LEVEL", "LOG_FORMAT", "LOG_FILE",
)


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch, tmp_path):
    """Every test sees default settings and writes artifacts under tmp_path."""
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)
    monkeypatch.setenv("BUNDLELAB_OUTPUT_DIR", str(tmp_path / "artifacts"))
    reset_config()
    yield
    reset_config()


@pytest.fixture
def unit_square() -> OpenBox:
    return OpenBox(((0.0, 1.0), (0.0, 1.0)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def cli_runner() -> CliRunner:
    return CliRunner()
