"""
BundleLab - Connection Extension Laboratory

Command-line front end: runs named scenarios or config-described experiments
and exposes the transport, extension, scan, detector and set-construction
operations one subcommand each. Results go to stdout, logs to stderr.

Exit status: 0 when a run's verdict matches the expected one, 2 on a
mismatch, 1 on usage or configuration errors.
"""

import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import click
import numpy as np
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from config import RunConfig, get_config, load_run_config, parse_matrices
from obstacles import BiSlab, HalfSlab, parse_obstacle
from scenarios.registry import get_registry, inline_scenario
from scenarios.runner import ScenarioRunner
from transport_core.connection import (
    PiecewisePath,
    SampledSection,
    constant_connection,
    parallel_transport,
    standard_connection,
    transport_certified,
)
from transport_core.exceptions import BundleLabError, ConfigurationError
from transport_core.extension import (
    ResidualPolicy,
    Tolerances,
    detect_jump,
    extend_bidirectional,
    extend_slab,
    maximal_extension_scan,
)
from transport_core.logging_config import get_logger, setup_logging
from transport_core.sets import Grid, OpenBox, complement_components, dyadic_decompose, fat_cantor_build
from utils.numerics import format_number, format_vector
from utils.serialization import (
    print_summary,
    write_decomposition_csv,
    write_fundamental_csv,
    write_run_artifacts,
    write_section_csv,
)


logger = get_logger(__name__)

EXIT_MATCH = 0
EXIT_ERROR = 1
EXIT_MISMATCH = 2

_TUPLE = re.compile(r"\(([^()]*)\)")


# ============================================================================
# Argument Parsing Helpers
# ============================================================================

def parse_floats(text: str) -> List[float]:
    """Comma list of reals."""
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Expected comma-separated numbers, got '{text}'") from e


def parse_box(text: str) -> OpenBox:
    """Box as "lo,hi; lo,hi; ..."."""
    rows = parse_matrices(text)
    if any(len(row) != 2 for row in rows):
        raise ConfigurationError(f"Box intervals need two endpoints each, got '{text}'")
    try:
        return OpenBox(tuple((lo, hi) for lo, hi in rows))
    except ValueError as e:
        raise ConfigurationError(str(e)) from e


def parse_path(text: str) -> PiecewisePath:
    """Path as "segment:(a,b)->(c,d)" or "polyline:(a,b)->(c,d)->(e,f)"."""
    kind, _, body = text.partition(":")
    vertices = [parse_floats(v) for v in _TUPLE.findall(body)]
    if kind == "segment" and len(vertices) == 2:
        return PiecewisePath.segment(*vertices)
    if kind == "polyline" and len(vertices) >= 2:
        return PiecewisePath.polyline(vertices)
    raise ConfigurationError(f"Invalid path '{text}'; use segment:(x)->(y) or polyline:(x)->(y)->...")


def _fail(message: str) -> int:
    click.echo(f"Error: {message}", err=True)
    return EXIT_ERROR


class LabGroup(click.Group):
    """Click group mapping usage errors and lab errors to exit status 1."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.ClickException as e:
            e.show()
            rv = EXIT_ERROR
        except click.Abort:
            click.echo("Aborted!", err=True)
            rv = EXIT_ERROR
        except BundleLabError as e:
            logger.error(f"{type(e).__name__}: {e}")
            rv = _fail(str(e))
        code = rv if isinstance(rv, int) else EXIT_MATCH
        if standalone_mode:
            sys.exit(code)
        return code


# ============================================================================
# CLI
# ============================================================================

@click.group(cls=LabGroup)
@click.option("--log-level", default=None, help="Log level (default from LOG_LEVEL)")
@click.option("--log-format", type=click.Choice(["text", "json"]), default=None, help="Log format")
@click.option("--log-file", type=click.Path(), default=None, help="Also log to this file")
@click.pass_context
def cli(ctx, log_level: Optional[str], log_format: Optional[str], log_file: Optional[str]):
    """BundleLab: parallel sections of connections on trivial bundles over boxes."""
    config = get_config()
    setup_logging(
        level=(log_level or config.app.log_level.value),
        format_type=(log_format or config.app.log_format),
        log_file=(log_file or config.app.log_file)
    )
    ctx.obj = config


@cli.command()
@click.argument("scenario", required=False)
@click.option("--config", "config_path", type=click.Path(), help="Run-config file")
@click.option("--dim", type=int, help="Dimension of the scenario")
@click.option("--variant", help="Scenario variant")
@click.option("--connection", "patch_connection", help="Connection of the hyperplane-patch scenario")
@click.option("--box", help='Box override, "lo,hi; lo,hi"')
@click.option("--lambda0", type=float, help="Measure bound of the big-measure scenario")
@click.option("--offset", help="Translation of the noextension scenario, comma list")
@click.option("--obstacle", help="Obstacle descriptor of an inline run")
@click.option("--matrix", "matrices", multiple=True, help='Constant connection matrix per axis, "a,b;c,d"')
@click.option("--section", "section_kind", type=click.Choice(["constant", "parallel"]), help="Inline section kind")
@click.option("--value", "section_value", help="Inline section value, comma list")
@click.option("--expected", type=click.Choice(["extended", "obstructed"]), help="Expected verdict of an inline run")
@click.option("--assert-c1", is_flag=True, default=None, help="Assert residuals on every axis")
@click.option("--assert-c0-only", is_flag=True, default=None, help="Run the C^1 variant with reported residuals")
@click.option("--res", "resolution", type=int, help="Grid nodes per axis")
@click.option("--step", type=float, help="RK4 step")
@click.option("--agreement-tol", "agreement_tolerance", type=float, help="Agreement tolerance")
@click.option("--residual-tol", "residual_tolerance", type=float, help="Residual tolerance")
@click.option("--depth", type=int, help="Cantor construction depth")
@click.option("--window", type=int, help="Scan window width")
@click.option("--output-dir", help="Artifact directory (default BUNDLELAB_OUTPUT_DIR)")
@click.option("--formats", help="Artifact formats, comma list of csv, report")
@click.pass_obj
def run(config, scenario, config_path, box, offset, matrices, section_value, **options):
    """Run a named scenario (or an inline experiment) end to end."""
    options.update(
        scenario=scenario,
        box=None if box is None else [tuple(i) for i in parse_box(box).intervals],
        offset=None if offset is None else parse_floats(offset),
        matrices=[parse_matrices(m) for m in matrices] or None,
        section_value=None if section_value is None else parse_floats(section_value),
        assert_c1=options["assert_c1"] or None,
        assert_c0_only=options["assert_c0_only"] or None,
    )
    if options.get("matrices"):
        options["connection"] = "constant"

    numerics = config.numerics
    defaults = {"step": numerics.step, "depth": numerics.depth, "window": numerics.window}
    if config_path:
        run_config = load_run_config(config_path, defaults=defaults, **options)
    else:
        run_config = RunConfig.from_options(**{**defaults, **{k: v for k, v in options.items() if v is not None}})

    scenario_obj = _build_run_scenario(config, run_config)
    tolerances = replace(
        scenario_obj.tolerances,
        agreement=run_config.agreement_tolerance or scenario_obj.tolerances.agreement,
        step=run_config.step,
    )
    if run_config.residual_tolerance:
        tolerances = replace(tolerances, residual=run_config.residual_tolerance, residual_slope=0.0)
    policy = None
    if run_config.assert_c1:
        policy = ResidualPolicy.ASSERT
    elif run_config.assert_c0_only:
        policy = ResidualPolicy.REPORT

    runner = ScenarioRunner(window=run_config.window, depth=run_config.depth, policy=policy)
    result = runner.run(scenario_obj, resolution=run_config.resolution, tolerances=tolerances)

    digits = config.output.significant_digits
    output_dir = Path(run_config.output_dir or config.output.output_dir)
    formats = run_config.formats if "formats" in run_config.model_fields_set else config.output.formats
    for path in write_run_artifacts(result, output_dir, formats, digits):
        click.echo(f"wrote {path}", err=True)
    print_summary(result, digits=digits)

    click.echo(f"scenario: {scenario_obj.name}")
    click.echo(f"verdict: {result.verdict.value}")
    click.echo(f"expected: {result.expected.value}")
    if result.jump is not None:
        click.echo(f"jump: {format_number(result.jump.jump, digits)}")
    if result.region is not None:
        click.echo(f"frontier: {len(result.region.frontier)}")
    for key, value in sorted(result.measurements.items()):
        shown = format_number(value, digits) if isinstance(value, float) else value
        click.echo(f"{key}: {shown}")
    return EXIT_MATCH if result.matches else EXIT_MISMATCH


def _build_run_scenario(config, run_config: RunConfig):
    box = None if run_config.box is None else OpenBox(tuple(run_config.box))
    if run_config.is_inline:
        return inline_scenario(
            box=box,
            obstacle=run_config.obstacle,
            matrices=run_config.matrices if run_config.connection == "constant" else None,
            section_kind=run_config.section_kind,
            section_value=run_config.section_value,
            expected=run_config.expected,
            tolerances=Tolerances(
                agreement=run_config.agreement_tolerance or config.numerics.agreement_tolerance,
                residual=run_config.residual_tolerance or config.numerics.residual_tolerance,
                step=run_config.step,
            ),
            resolution=run_config.resolution or config.numerics.resolution,
            depth=run_config.depth,
        )
    variant = run_config.variant
    if run_config.assert_c0_only:
        if run_config.scenario != "cantor-c0":
            raise ConfigurationError("--assert-c0-only applies to the cantor-c0 scenario")
        variant = "smooth"
    return get_registry().build(
        run_config.scenario,
        dim=run_config.dim,
        variant=variant,
        connection=run_config.patch_connection,
        box=box,
        lambda0=run_config.lambda0,
        offset=run_config.offset,
        depth=run_config.depth,
    )


@cli.command()
@click.option("--connection", "connection_name", default="standard",
              help='"standard", "constant" (with --matrix) or a registry scenario name')
@click.option("--matrix", "matrices", multiple=True, help='Constant connection matrix per axis, "a,b;c,d"')
@click.option("--path", "path_text", required=True, help='e.g. "segment:(0,0)->(1,1)"')
@click.option("--v0", required=True, help="Initial vector, comma list")
@click.option("--step", type=float, default=None, help="RK4 step")
@click.option("--certify", is_flag=True, help="Also print the step-halving defect")
@click.pass_obj
def transport(config, connection_name, matrices, path_text, v0, step, certify):
    """Parallel transport of a vector along a piecewise-linear path."""
    path = parse_path(path_text)
    v = np.asarray(parse_floats(v0))
    if connection_name == "standard":
        conn = standard_connection(path.start.size, v.size)
    elif connection_name == "constant":
        if not matrices:
            raise ConfigurationError("--connection constant needs --matrix for every axis")
        conn = constant_connection([parse_matrices(m) for m in matrices])
    else:
        conn = get_registry().build(connection_name, dim=path.start.size).connection

    step = step or config.numerics.step
    digits = config.output.significant_digits
    if certify:
        certificate = transport_certified(conn, path, v, step)
        click.echo(format_vector(certificate.value, digits))
        click.echo(f"defect: {format_number(certificate.defect, digits)}")
    else:
        click.echo(format_vector(parallel_transport(conn, path, v, step), digits))
    return EXIT_MATCH


@cli.command()
@click.argument("scenario")
@click.option("--dim", type=int, help="Dimension of the scenario")
@click.option("--variant", help="Scenario variant")
@click.option("--a1", type=float, help="Start coordinate on the first slab axis")
@click.option("--a2", type=float, help="Start coordinate on the second slab axis (bi-slabs)")
@click.option("--policy", type=click.Choice(["assert", "report"]), help="Residual policy of the non-slab axes")
@click.option("--res", "resolution", type=int, help="Grid nodes per axis")
@click.option("--csv", "csv_path", type=click.Path(), help="Write the extended section here")
@click.option("--fundamental-csv", "fundamental_path", type=click.Path(), help="Write the fundamental solution of the slab sweep here")
@click.pass_obj
def extend(config, scenario, dim, variant, a1, a2, policy, resolution, csv_path, fundamental_path):
    """Extend a scenario's section over its half-slab or bi-slab obstacle."""
    built = get_registry().build(scenario, dim=dim, variant=variant)
    depth = config.numerics.depth
    grid = built.grid(resolution)
    section = SampledSection.from_closed_form(grid, built.section, obstacle=built.obstacle, depth=depth)
    tolerances = replace(built.tolerances, step=config.numerics.step)

    if isinstance(built.obstacle, HalfSlab):
        report = extend_slab(
            built.connection, section, built.obstacle, a1=a1, tolerances=tolerances,
            policy=None if policy is None else ResidualPolicy(policy), depth=depth
        )
    elif isinstance(built.obstacle, BiSlab):
        report = extend_bidirectional(
            built.connection, section, built.obstacle, a1=a1, a2=a2, tolerances=tolerances, depth=depth
        )
    else:
        raise ConfigurationError(f"Scenario '{scenario}' has no slab obstacle; use the scan command")

    digits = config.output.significant_digits
    click.echo(f"verdict: {report.verdict.value}")
    click.echo(f"a1: {format_number(report.a1, digits)}")
    click.echo(f"agreement: {format_number(report.agreement, digits)}")
    for axis, value in sorted(report.residuals.items()):
        click.echo(f"residual x{axis + 1} ({report.policies[axis].value}): {format_number(value, digits)}")
    for key, value in sorted(report.notes.items()):
        click.echo(f"{key}: {format_number(value, digits)}")
    if csv_path:
        write_section_csv(report.extended, Path(csv_path), digits)
    if fundamental_path:
        write_fundamental_csv(report.fundamental, Path(fundamental_path), digits)
    return EXIT_MATCH


@cli.command()
@click.argument("scenario")
@click.option("--dim", type=int, help="Dimension of the scenario")
@click.option("--variant", help="Scenario variant")
@click.option("--connection", "patch_connection", help="Connection of the hyperplane-patch scenario")
@click.option("--res", "resolution", type=int, help="Grid nodes per axis")
@click.option("--window", type=int, default=None, help="Scan window width")
@click.option("--csv", "csv_path", type=click.Path(), help="Write the region's section here")
@click.pass_obj
def scan(config, scenario, dim, variant, patch_connection, resolution, window, csv_path):
    """Maximal extension region of a scenario's section."""
    built = get_registry().build(scenario, dim=dim, variant=variant, connection=patch_connection)
    depth = config.numerics.depth
    grid = built.grid(resolution)
    section = SampledSection.from_closed_form(grid, built.section, obstacle=built.obstacle, depth=depth)
    tolerances = replace(built.tolerances, step=config.numerics.step)
    region = maximal_extension_scan(
        built.connection, section, built.obstacle, window=window or config.numerics.window,
        tolerances=tolerances, depth=depth
    )

    click.echo(f"obstacle nodes: {int(region.obstacle_mask.sum())}")
    click.echo(f"extended nodes: {region.extended_count}")
    click.echo(f"frontier: {len(region.frontier)}")
    click.echo(f"full: {'yes' if region.is_full else 'no'}")
    if csv_path:
        write_section_csv(region.section, Path(csv_path), config.output.significant_digits)
    return EXIT_MATCH


@cli.command()
@click.argument("scenario", default="noextension")
@click.option("--dim", type=int, help="Dimension of the scenario")
@click.option("--axis", type=int, help="Normal axis (1-based; default from the scenario)")
@click.option("--base", help="Base point, comma list (default from the scenario)")
@click.option("--eps", help="Decreasing epsilons, comma list")
@click.pass_obj
def jump(config, scenario, dim, axis, base, eps):
    """One-sided limits of a scenario's section across a hyperplane."""
    built = get_registry().build(scenario, dim=dim)
    site = built.jump_site
    if site is None and (axis is None or base is None):
        raise ConfigurationError(f"Scenario '{scenario}' has no jump site; pass --axis and --base")
    axis0 = axis - 1 if axis is not None else site.axis
    base_point = parse_floats(base) if base is not None else site.base
    epsilons = parse_floats(eps) if eps is not None else (site.eps if site else tuple(10.0 ** -k for k in range(2, 9)))

    result = detect_jump(
        built.connection, built.section, axis0, base_point, epsilons,
        agreement_tolerance=built.tolerances.agreement
    )
    digits = config.output.significant_digits
    click.echo(f"limit below: {format_vector(result.limit_below, digits)}")
    click.echo(f"limit above: {format_vector(result.limit_above, digits)}")
    click.echo(f"jump: {format_number(result.jump, digits)}")
    click.echo(f"detected: {'yes' if result.detected else 'no'}")
    return EXIT_MATCH


@cli.command()
@click.option("--ambient", default="0,1", help='Ambient interval "lo,hi"')
@click.option("--target", type=float, required=True, help="Residual measure to exceed")
@click.option("--depth", type=int, default=None, help="Construction depth")
@click.option("--stage", type=int, default=8, help="Stage of the nowhere-density check")
@click.pass_obj
def fatcantor(config, ambient, target, depth, stage):
    """Fat Cantor set with residual measure above a target."""
    lo, hi = parse_floats(ambient)
    C = fat_cantor_build((lo, hi), target, depth=depth or config.numerics.depth)
    measure = C.residual_measure()
    digits = config.output.significant_digits
    click.echo(f"removal ratio: {C.removal_ratio}")
    click.echo(f"residual measure: {measure} = {format_number(float(measure), digits)}")
    click.echo(f"nowhere dense at stage {stage}: {'yes' if C.refines_everywhere(stage) else 'no'}")
    return EXIT_MATCH


@cli.command()
@click.option("--box", "box_text", default="0,1;0,1", help='Open box "lo,hi; lo,hi"')
@click.option("--max-level", type=int, default=4, help="Finest dyadic level")
@click.option("--csv", "csv_path", type=click.Path(), help="Write the cubes here")
@click.pass_obj
def decompose(config, box_text, max_level, csv_path):
    """Maximal closed dyadic cubes inside an open box."""
    decomposition = dyadic_decompose(parse_box(box_text), max_level)
    union = decomposition.union_measure()
    click.echo(f"cubes: {len(decomposition.cubes)}")
    click.echo(f"union measure: {union} = {format_number(float(union), config.output.significant_digits)}")
    if csv_path:
        write_decomposition_csv(decomposition, Path(csv_path), config.output.significant_digits)
    return EXIT_MATCH


@cli.command()
@click.option("--obstacle", "descriptor", required=True, help="Obstacle descriptor")
@click.option("--box", "box_text", default="0,1;0,1", help='Open box "lo,hi; lo,hi"')
@click.option("--res", "resolution", type=int, default=64, help="Grid nodes per axis")
@click.option("--depth", type=int, default=None, help="Construction depth")
@click.pass_obj
def components(config, descriptor, box_text, resolution, depth):
    """Connected components of the grid complement of an obstacle."""
    box = parse_box(box_text)
    depth = depth or config.numerics.depth
    F = parse_obstacle(descriptor, box, depth)
    count, _ = complement_components(box, F, Grid.uniform(box, resolution), depth)
    click.echo(count)
    return EXIT_MATCH


if __name__ == "__main__":
    cli()
