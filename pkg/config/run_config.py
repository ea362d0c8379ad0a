"""
Run configuration for the command line.

A run is either a registry scenario or an inline experiment (box, constant
connection matrices, obstacle descriptor and section). Run files are flat
``key = value`` text with section headers::

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

Matrices are row-major, entries separated by commas and rows by ';'.
"""

from configparser import ConfigParser, Error as ConfigParserError
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.config import OUTPUT_FORMATS, parse_formats
from transport_core.exceptions import InvalidConfigurationError


logger = logging.getLogger(__name__)

Matrix = List[List[float]]


def parse_matrices(text: str) -> Matrix:
    """Parse "a,b;c,d" into [[a, b], [c, d]].

    Raises:
        InvalidConfigurationError: On ragged rows or non-numeric entries
    """
    rows = [row for row in (r.strip() for r in text.split(";")) if row]
    try:
        matrix = [[float(v) for v in row.split(",")] for row in rows]
    except ValueError as e:
        raise InvalidConfigurationError(f"Invalid matrix '{text}': {e}") from e
    if not matrix or any(len(row) != len(matrix[0]) for row in matrix):
        raise InvalidConfigurationError(f"Matrix '{text}' has ragged or missing rows")
    return matrix


class RunConfig(BaseModel):
    """Validated description of one run.

    Attributes:
        scenario: Registry scenario name; None for an inline experiment
        dim: Dimension override for registry scenarios
        variant: Scenario variant (cantor-c0: cantor | smooth; hyperplane-patch: patch | full)
        patch_connection: Connection of the hyperplane-patch scenario
        lambda0: Measure bound of the big-measure scenario
        offset: Translation of the noextension scenario
        assert_c1: Force the asserted residual policy on every axis
        assert_c0_only: Run the Cantor geometry under its C^1 variant with reported residuals
        box: Box intervals (inline runs, or overrides where a scenario allows them)
        connection: "standard" or "constant"
        matrices: One r x r matrix per axis for constant connections
        obstacle: Obstacle descriptor of an inline run
        section_kind: "constant" or "parallel" (inline runs)
        section_value: Section value (constant) or value at the box low corner (parallel)
        expected: Expected verdict of an inline run
        resolution: Grid nodes per axis
        step: RK4 step
        agreement_tolerance: Agreement tolerance override
        residual_tolerance: Residual tolerance override
        depth: Construction depth of Cantor-like sets
        window: Scan window width
        output_dir: Artifact directory
        formats: Artifact formats
    """
    model_config = ConfigDict(extra="forbid")

    scenario: Optional[str] = None
    dim: Optional[int] = Field(default=None, ge=1)
    variant: Optional[str] = None
    patch_connection: str = "standard"
    lambda0: float = 1.2
    offset: Optional[List[float]] = None
    assert_c1: bool = False
    assert_c0_only: bool = False

    box: Optional[List[Tuple[float, float]]] = None
    connection: str = "standard"
    matrices: Optional[List[Matrix]] = None
    obstacle: Optional[str] = None
    section_kind: str = "constant"
    section_value: List[float] = Field(default_factory=lambda: [1.0])
    expected: Optional[str] = None

    resolution: Optional[int] = Field(default=None, ge=8)
    step: float = Field(default=1e-3, gt=0)
    agreement_tolerance: Optional[float] = Field(default=None, gt=0)
    residual_tolerance: Optional[float] = Field(default=None, gt=0)
    depth: int = Field(default=12, ge=1)
    window: int = Field(default=5, ge=3)

    output_dir: Optional[str] = None
    formats: Tuple[str, ...] = OUTPUT_FORMATS

    @field_validator("formats", mode="before")
    @classmethod
    def _split_formats(cls, value):
        if isinstance(value, str):
            value = parse_formats(value)
        unknown = set(value) - set(OUTPUT_FORMATS)
        if unknown:
            raise ValueError(f"unknown formats {sorted(unknown)}; choose from {', '.join(OUTPUT_FORMATS)}")
        return tuple(value)

    @field_validator("box")
    @classmethod
    def _ordered_box(cls, value):
        if value is not None and any(lo >= hi for lo, hi in value):
            raise ValueError("box intervals need lo < hi")
        return value

    @field_validator("window")
    @classmethod
    def _odd_window(cls, value):
        if value % 2 == 0:
            raise ValueError("window must be odd")
        return value

    @model_validator(mode="after")
    def _scenario_or_inline(self):
        if self.scenario is None:
            if self.box is None or self.obstacle is None:
                raise ValueError("an inline run needs both box and obstacle")
            if self.connection not in ("standard", "constant"):
                raise ValueError(f"unknown connection '{self.connection}' (standard, constant)")
            if self.connection == "constant" and not self.matrices:
                raise ValueError("a constant connection needs one matrix per axis")
            if self.section_kind not in ("constant", "parallel"):
                raise ValueError(f"unknown section kind '{self.section_kind}' (constant, parallel)")
            if self.expected not in (None, "extended", "obstructed"):
                raise ValueError(f"expected must be 'extended' or 'obstructed', got '{self.expected}'")
        if self.assert_c1 and self.assert_c0_only:
            raise ValueError("assert_c1 and assert_c0_only exclude each other")
        return self

    @property
    def is_inline(self) -> bool:
        return self.scenario is None

    @classmethod
    def from_options(cls, **options) -> 'RunConfig':
        """Validate keyword options, dropping unset (None) values.

        Raises:
            InvalidConfigurationError: If validation fails
        """
        try:
            return cls.model_validate({k: v for k, v in options.items() if v is not None})
        except ValidationError as e:
            raise InvalidConfigurationError(_describe(e)) from e


def _describe(error: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(p) for p in item['loc']) or 'run'}: {item['msg']}"
        for item in error.errors()
    )


_FIELDS = {
    "run": {"scenario": "scenario", "dim": "dim", "variant": "variant", "connection": "patch_connection",
            "lambda0": "lambda0", "offset": "offset", "expected": "expected",
            "assert_c1": "assert_c1", "assert_c0_only": "assert_c0_only"},
    "grid": {"box": "box", "resolution": "resolution"},
    "numerics": {"step": "step", "agreement": "agreement_tolerance", "residual": "residual_tolerance",
                 "depth": "depth", "window": "window"},
    "obstacle": {"descriptor": "obstacle"},
    "section": {"kind": "section_kind", "value": "section_value"},
    "output": {"dir": "output_dir", "formats": "formats"},
}


def _convert(key: str, raw: str):
    if key == "box":
        return [tuple(row) for row in parse_matrices(raw)]
    if key in ("offset", "section_value"):
        return [float(v) for v in raw.split(",") if v.strip()]
    if key in ("assert_c1", "assert_c0_only"):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return raw.strip()


def load_run_config(path: Union[str, Path], defaults: Optional[Dict[str, Any]] = None, **overrides) -> RunConfig:
    """Read a run file; keyword overrides that are not None win.

    ``defaults`` fill keys the file leaves out.

    Raises:
        InvalidConfigurationError: If the file is missing, malformed or invalid
    """
    path = Path(path)
    if not path.exists():
        raise InvalidConfigurationError(f"Run config not found: {path}")

    parser = ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except ConfigParserError as e:
        raise InvalidConfigurationError(f"Cannot parse {path}: {e}") from e

    options = dict(defaults or {})
    for section in parser.sections():
        if section == "connection":
            options.update(_connection_options(parser[section]))
            continue
        known = _FIELDS.get(section)
        if known is None:
            raise InvalidConfigurationError(f"{path}: unknown section [{section}]")
        for key, raw in parser[section].items():
            if key not in known:
                raise InvalidConfigurationError(f"{path}: unknown key '{key}' in [{section}]")
            options[known[key]] = _convert(known[key], raw)

    options.update({k: v for k, v in overrides.items() if v is not None})
    logger.debug(f"Run config {path}: {sorted(options)}")
    return RunConfig.from_options(**options)


def _connection_options(section) -> dict:
    options = {"connection": section.get("kind", "standard").strip()}
    omegas = sorted(
        (int(key[len("omega"):]), value) for key, value in section.items()
        if key.startswith("omega") and key[len("omega"):].isdigit()
    )
    unknown = [k for k in section if k != "kind" and not (k.startswith("omega") and k[len("omega"):].isdigit())]
    if unknown:
        raise InvalidConfigurationError(f"unknown keys in [connection]: {', '.join(unknown)}")
    if omegas:
        if [i for i, _ in omegas] != list(range(1, len(omegas) + 1)):
            raise InvalidConfigurationError("[connection] needs omega1..omegaN without gaps")
        options["matrices"] = [parse_matrices(value) for _, value in omegas]
    return options
