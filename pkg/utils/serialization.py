"""
Artifact writers: CSV grids, text reports and terminal summaries.

Every number is written in positional decimal with a fixed count of
significant digits, so identical runs give byte-identical files. Report
lines after ``HASH_MARKER`` carry timings and are excluded from comparisons.
"""

from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence
import logging
import numbers

import pandas as pd
from jinja2 import Environment, FileSystemLoader
from rich.console import Console
from rich.table import Table

from utils.numerics import SIGNIFICANT_DIGITS, format_number


logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "scenarios" / "templates"
HASH_MARKER = "-- run metadata (not part of the reproducible report) --"


def render_value(value: Any, digits: int = SIGNIFICANT_DIGITS) -> str:
    """Decimal rendering for reals; str() for everything else."""
    if value is None:
        return "-"
    if isinstance(value, (bool, str)) or isinstance(value, numbers.Integral):
        return str(value)
    if isinstance(value, numbers.Real):
        return format_number(float(value), digits)
    return str(value)


def render_vector(values: Iterable[Any], digits: int = SIGNIFICANT_DIGITS) -> str:
    return ", ".join(render_value(v, digits) for v in values)


def write_frame(frame: pd.DataFrame, path: Path, digits: int = SIGNIFICANT_DIGITS) -> Path:
    """Write a DataFrame as CSV with fixed-precision floats and 'nan' for gaps."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, na_rep="nan", float_format=lambda v: format_number(v, digits))
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def write_section_csv(section, path: Path, digits: int = SIGNIFICANT_DIGITS) -> Path:
    """One row per node: index_i, x_i, defined, s_k."""
    return write_frame(section.to_dataframe(), Path(path), digits)


def write_fundamental_csv(solution, path: Path, digits: int = SIGNIFICANT_DIGITS) -> Path:
    """One row per (time, parameter): time, y_k, x_ab."""
    return write_frame(solution.to_dataframe(), Path(path), digits)


def write_decomposition_csv(decomposition, path: Path, digits: int = SIGNIFICANT_DIGITS) -> Path:
    """One row per dyadic cube."""
    return write_frame(decomposition.to_dataframe(), Path(path), digits)


def _environment(digits: int) -> Environment:
    env = Environment(
        loader=FileSystemLoader(str(TEMPLATE_DIR)),
        keep_trailing_newline=True,
        trim_blocks=True,
        lstrip_blocks=True,
    )
    env.filters["num"] = lambda v: render_value(v, digits)
    env.filters["vec"] = lambda v: render_vector(v, digits)
    return env


def render_report(
    result,
    digits: int = SIGNIFICANT_DIGITS,
    generated_at: Optional[str] = None
) -> str:
    """Render the text report of a run result."""
    generated_at = generated_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
    template = _environment(digits).get_template("report.txt.j2")
    return template.render(
        run=result.to_dict(),
        marker=HASH_MARKER,
        generated_at=generated_at,
        elapsed=round(result.elapsed_s, 3),
    )


def reproducible_part(report: str) -> str:
    """Report text before the metadata marker."""
    return report.split(HASH_MARKER, 1)[0]


def write_run_artifacts(
    result,
    output_dir: Path,
    formats: Sequence[str],
    digits: int = SIGNIFICANT_DIGITS
) -> List[Path]:
    """Write the CSV grids and the report of a run.

    Returns:
        Paths written, in a fixed order
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    stem = result.scenario.name
    written: List[Path] = []

    if "csv" in formats:
        written.append(write_section_csv(result.input_section, output_dir / f"{stem}-input.csv", digits))
        if result.extended is not None:
            written.append(write_section_csv(result.extended, output_dir / f"{stem}-extended.csv", digits))
    if "report" in formats:
        path = output_dir / f"{stem}-report.txt"
        path.write_text(render_report(result, digits), encoding="utf-8")
        written.append(path)

    logger.info(f"Wrote {len(written)} artifacts to {output_dir}")
    return written


def summary_table(result, digits: int = SIGNIFICANT_DIGITS) -> Table:
    """Rich table with the headline facts of a run."""
    data = result.to_dict()
    table = Table(title=f"{data['scenario']}: {data['title']}", show_header=True)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right")

    table.add_row("grid", " x ".join(str(c) for c in data["grid"]))
    table.add_row("expected", data["expected_verdict"])
    style = "green" if data["matches"] else "red"
    table.add_row("verdict", f"[{style}]{data['verdict']}[/{style}]")
    if "extension" in data:
        table.add_row("agreement", render_value(data["extension"]["agreement"], digits))
        for residual in data["extension"]["residuals"]:
            table.add_row(f"residual x{residual['axis']} ({residual['policy']})", render_value(residual["max"], digits))
    if "scan" in data:
        table.add_row("extended nodes", f"{data['scan']['extended_nodes']}/{data['scan']['obstacle_nodes']}")
        table.add_row("frontier nodes", str(data["scan"]["frontier_nodes"]))
    if "jump" in data:
        table.add_row("jump", render_value(data["jump"]["jump"], digits))
    for key, value in sorted(data["measurements"].items()):
        table.add_row(key, render_value(value, digits))
    for evidence in data["evidence"]:
        table.add_row(f"evidence: {evidence['kind']}", render_value(evidence["magnitude"], digits))
    return table


def print_summary(result, console: Optional[Console] = None, digits: int = SIGNIFICANT_DIGITS) -> None:
    (console or Console(stderr=True)).print(summary_table(result, digits))
