"""Tests for environment configuration and run-config files."""

import textwrap

import pytest

from config import (
    AppConfig,
    LabConfig,
    LogLevel,
    NumericsConfig,
    OutputConfig,
    RunConfig,
    get_config,
    load_run_config,
    parse_matrices,
    reset_config,
)
from transport_core.exceptions import InvalidConfigurationError


# ============================================================================
# Environment configuration
# ============================================================================

def test_numerics_defaults():
    numerics = NumericsConfig()
    assert numerics.step == 1e-3
    assert numerics.agreement_tolerance == 1e-6
    assert numerics.residual_tolerance == 1e-5
    assert (numerics.depth, numerics.window, numerics.resolution) == (12, 5, 128)


@pytest.mark.parametrize("overrides", [
    {"step": 0.0},
    {"agreement_tolerance": -1e-6},
    {"depth": 0},
    {"window": 4},
    {"resolution": 4},
])
def test_numerics_validation(overrides):
    with pytest.raises(ValueError):
        NumericsConfig(**overrides)


def test_numerics_from_env(monkeypatch):
    monkeypatch.setenv("BUNDLELAB_STEP", "5e-4")
    monkeypatch.setenv("BUNDLELAB_WINDOW", "7")
    monkeypatch.setenv("BUNDLELAB_RESOLUTION", "64")
    numerics = NumericsConfig.from_env()
    assert (numerics.step, numerics.window, numerics.resolution) == (5e-4, 7, 64)


def test_output_formats_are_checked(monkeypatch):
    with pytest.raises(ValueError, match="Unknown output formats"):
        OutputConfig(formats=("csv", "pdf"))
    monkeypatch.setenv("BUNDLELAB_FORMATS", " report ")
    assert OutputConfig.from_env().formats == ("report",)


def test_app_config_from_env(monkeypatch):
    monkeypatch.setenv("DEBUG", "true")
    monkeypatch.setenv("LOG_FORMAT", "JSON")
    app = AppConfig.from_env()
    assert app.debug
    assert app.log_level == LogLevel.DEBUG
    assert app.log_format == "json"
    with pytest.raises(ValueError):
        AppConfig(log_format="xml")


def test_get_config_caches_until_reset(monkeypatch, tmp_path):
    first = get_config()
    assert get_config() is first
    assert first.output.output_dir == str(tmp_path / "artifacts")
    monkeypatch.setenv("BUNDLELAB_DEPTH", "9")
    assert get_config().numerics.depth == 12
    reset_config()
    assert get_config().numerics.depth == 9
    assert get_config(reload=True) is not first


def test_validate_warns_about_costly_settings():
    config = LabConfig(
        numerics=NumericsConfig(step=0.05, depth=20, resolution=1024),
        output=OutputConfig(formats=()),
    )
    warnings = config.validate()
    assert len(warnings) == 4
    assert LabConfig().validate() == []
    assert "Resolution: 128" in LabConfig().summary()


# ============================================================================
# Run configuration
# ============================================================================

def test_parse_matrices():
    assert parse_matrices("1, 2; 3, 4") == [[1.0, 2.0], [3.0, 4.0]]
    with pytest.raises(InvalidConfigurationError):
        parse_matrices("1,2;3")
    with pytest.raises(InvalidConfigurationError):
        parse_matrices("1,x")


@pytest.mark.parametrize("options, message", [
    ({"box": [(0.0, 1.0), (0.0, 1.0)]}, "box and obstacle"),
    ({"box": [(1.0, 0.0)], "obstacle": "empty"}, "lo < hi"),
    ({"scenario": "standard", "window": 4}, "odd"),
    ({"scenario": "standard", "formats": "csv,pdf"}, "unknown formats"),
    ({"scenario": "cantor-c0", "assert_c1": True, "assert_c0_only": True}, "exclude"),
    ({"box": [(0.0, 1.0)], "obstacle": "empty", "connection": "constant"}, "one matrix per axis"),
    ({"scenario": "standard", "colour": "blue"}, "colour"),
])
def test_run_config_validation(options, message):
    with pytest.raises(InvalidConfigurationError, match=message):
        RunConfig.from_options(**options)


def test_run_config_drops_unset_options():
    run = RunConfig.from_options(scenario="standard", resolution=None, formats="report")
    assert not run.is_inline
    assert run.resolution is None
    assert run.formats == ("report",)


def test_load_run_config_reads_inline_experiment(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(textwrap.dedent("""
        [run]
        expected = extended

        [grid]
        box = 0,1; 0,1
        resolution = 256

        [connection]
        kind = constant
        omega1 = 0.3
        omega2 = -0.7

        [obstacle]
        descriptor = halfslab:b1=0.5,thin=2,C=ternary:0|1

        [section]
        kind = parallel
        value = 1
    """), encoding="utf-8")
    run = load_run_config(path)
    assert run.is_inline
    assert run.box == [(0.0, 1.0), (0.0, 1.0)]
    assert run.matrices == [[[0.3]], [[-0.7]]]
    assert run.section_kind == "parallel"
    assert run.resolution == 256


def test_load_run_config_overrides_win(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nscenario = standard\n\n[numerics]\nresidual = 1e-4\n", encoding="utf-8")
    run = load_run_config(path, resolution=32, residual_tolerance=None)
    assert run.scenario == "standard"
    assert run.resolution == 32
    assert run.residual_tolerance == 1e-4


def test_load_run_config_defaults_fill_missing_keys(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nscenario = noextension\n\n[numerics]\ndepth = 9\n", encoding="utf-8")
    run = load_run_config(path, defaults={"window": 7, "depth": 14, "step": 5e-4})
    assert run.window == 7
    assert run.step == 5e-4
    assert run.depth == 9


@pytest.mark.parametrize("content, message", [
    ("[plot]\ncolour = red\n", "unknown section"),
    ("[grid]\nspacing = 2\n", "unknown key"),
    ("[connection]\nkind = constant\nomega2 = 1\n", "without gaps"),
    ("[connection]\nkind = constant\ntorsion = 1\n", "unknown keys"),
    ("no section header\n", "Cannot parse"),
])
def test_load_run_config_rejects_malformed_files(tmp_path, content, message):
    path = tmp_path / "run.ini"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(InvalidConfigurationError, match=message):
        load_run_config(path)


def test_missing_run_config_raises(tmp_path):
    with pytest.raises(InvalidConfigurationError, match="not found"):
        load_run_config(tmp_path / "absent.ini")
