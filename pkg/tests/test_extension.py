"""Tests for slab extensions, maximal-extension scans and obstruction detectors."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obstacles import BiSlab, HalfSlab
from scenarios.counterexamples import (
    CONVERGENT_POINTS,
    DIVERGENT_POINTS,
    TERNARY_STEPS,
    cantor_c0_scenario,
    fat_cantor_box_scenario,
    hyperplane_patch_scenario,
    noextension_scenario,
    standard_scenario,
)
from transport_core.connection import SampledSection, constant_connection, standard_connection
from transport_core.exceptions import InputIntegrityError, PreconditionError, SectionDomainError
from transport_core.extension import (
    ResidualPolicy,
    Tolerances,
    Verdict,
    classify_quotients,
    detect_jump,
    detect_nondifferentiability,
    extend_bidirectional,
    extend_slab,
    maximal_extension_scan,
    slab_policy,
    snap_start,
)
from transport_core.sets import CantorLikeSet, Grid, OpenBox, fat_cantor_build


def sampled(scenario, resolution):
    grid = scenario.grid(resolution)
    return SampledSection.from_closed_form(grid, scenario.section, obstacle=scenario.obstacle, rank=scenario.rank)


def exponential_setup(unit_square):
    """Constant connection 0.3 dx1 - 0.7 dx2, its parallel section and a ternary half-slab."""
    conn = constant_connection([[[0.3]], [[-0.7]]], box=unit_square)
    F = HalfSlab(b=0.5, slab_axis=0, thin_axis=1, C=CantorLikeSet.ternary(0.0, 1.0))

    def exact(points):
        return np.exp(-0.3 * points[:, 0] + 0.7 * points[:, 1])[:, None]

    return conn, F, exact


# ============================================================================
# Slab extension
# ============================================================================

def test_standard_section_extends_over_ternary_half_slab():
    scenario = standard_scenario()
    section = sampled(scenario, 64)
    report = extend_slab(scenario.connection, section, scenario.obstacle, tolerances=scenario.tolerances)
    assert report.verdict == Verdict.EXTENDED
    assert report.extended.is_total
    assert report.agreement <= 1e-12
    assert report.a1 < scenario.obstacle.b
    assert report.policies == {0: ResidualPolicy.ASSERT, 1: ResidualPolicy.ASSERT}


@pytest.mark.parametrize("resolution", [128, pytest.param(256, marks=pytest.mark.slow)])
def test_exponential_section_extension_matches_closed_form(unit_square, resolution):
    conn, F, exact = exponential_setup(unit_square)
    grid = Grid.uniform(unit_square, resolution)
    report = extend_slab(conn, SampledSection.from_closed_form(grid, exact, obstacle=F), F)
    error, _ = report.extended.max_difference(SampledSection.from_closed_form(grid, exact))
    assert report.verdict == Verdict.EXTENDED
    assert error <= 1e-6
    assert max(report.residuals.values()) <= 1e-5


def test_extension_of_a_total_parallel_section_is_idempotent(unit_square):
    conn, F, exact = exponential_setup(unit_square)
    grid = Grid.uniform(unit_square, 64)
    tolerances = Tolerances(residual=1e-4)
    first = extend_slab(conn, SampledSection.from_closed_form(grid, exact, obstacle=F), F, tolerances=tolerances)
    again = extend_slab(conn, first.extended, F, a1=first.a1, tolerances=tolerances)
    difference, _ = again.extended.max_difference(first.extended)
    assert again.verdict == Verdict.EXTENDED
    assert difference <= 1e-12


def test_slab_report_keeps_the_fundamental_solution(unit_square):
    conn, F, exact = exponential_setup(unit_square)
    grid = Grid.uniform(unit_square, 32)
    report = extend_slab(conn, SampledSection.from_closed_form(grid, exact, obstacle=F), F,
                         tolerances=Tolerances(residual=1e-3))
    fs = report.fundamental
    assert fs.t0 == report.a1
    assert fs.matrices.shape == (32, 32, 1, 1)
    np.testing.assert_allclose(fs.matrices[:, 0, 0, 0], np.exp(-0.3 * (fs.times - fs.t0)), atol=1e-10)


def test_residual_tolerance_widens_with_grid_spacing():
    tolerances = Tolerances(residual=0.05, residual_slope=1.5)
    box = OpenBox(((-3.0, 3.0), (-3.0, 3.0)))
    assert tolerances.for_grid(Grid.uniform(box, 32)).residual == pytest.approx(0.28125)
    assert tolerances.for_grid(Grid.uniform(box, 64)).residual == pytest.approx(0.140625)
    assert tolerances.for_grid(Grid.uniform(box, 256)).residual == 0.05
    assert Tolerances(residual=0.05).for_grid(Grid.uniform(box, 8)).residual == 0.05


def test_negative_residual_slope_is_rejected():
    with pytest.raises(ValueError):
        Tolerances(residual_slope=-1.0)


def test_start_coordinate_snaps_below_obstacle(unit_square):
    grid = Grid.uniform(unit_square, 16)
    index, coordinate = snap_start(grid, 0, 0.2, 0.5)
    assert (index, coordinate) == (3, 0.21875)
    assert snap_start(grid, 0, 0.9, 0.5)[1] < 0.5


@pytest.mark.parametrize("a1", [0.5, 0.7, -0.1])
def test_start_must_lie_between_box_and_obstacle(unit_square, a1):
    conn, F, exact = exponential_setup(unit_square)
    grid = Grid.uniform(unit_square, 32)
    with pytest.raises(PreconditionError):
        extend_slab(conn, SampledSection.from_closed_form(grid, exact, obstacle=F), F, a1=a1,
                    tolerances=Tolerances(residual=1e-3))


def test_non_parallel_input_is_rejected(unit_square):
    conn, F, _ = exponential_setup(unit_square)
    section = SampledSection.constant(Grid.uniform(unit_square, 32), [1.0], obstacle=F)
    with pytest.raises(InputIntegrityError) as excinfo:
        extend_slab(conn, section, F)
    assert excinfo.value.residual > 0.1


def test_section_undefined_off_obstacle_is_rejected(unit_square):
    conn, F, exact = exponential_setup(unit_square)
    grid = Grid.uniform(unit_square, 32)
    section = SampledSection.from_closed_form(grid, exact, obstacle=F)
    mask = section.mask.copy()
    mask[0, 0] = False
    with pytest.raises(PreconditionError):
        extend_slab(conn, SampledSection(grid, section.values, mask), F)


@pytest.mark.parametrize("thin, connection, expected", [
    (CantorLikeSet.discrete([0.5], 0.0, 1.0), "cantor-c0", ResidualPolicy.ASSERT),
    (CantorLikeSet.ternary(0.0, 1.0), "cantor-c0", ResidualPolicy.REPORT),
    (CantorLikeSet.ternary(0.0, 1.0), "standard", ResidualPolicy.ASSERT),
    (fat_cantor_build((0.0, 1.0), 0.5), "standard", ResidualPolicy.ASSERT),
])
def test_slab_policy(thin, connection, expected):
    conn = cantor_c0_scenario().connection if connection == "cantor-c0" else standard_connection(2, 1)
    F = HalfSlab(b=0.0, slab_axis=0, thin_axis=1, C=thin)
    assert slab_policy(conn, F) == expected


def test_reported_axis_does_not_gate_the_verdict():
    scenario = cantor_c0_scenario()
    report = extend_slab(scenario.connection, sampled(scenario, 64), scenario.obstacle,
                         tolerances=scenario.tolerances)
    assert report.policies[1] == ResidualPolicy.REPORT
    assert report.verdict == Verdict.EXTENDED
    assert report.to_dict()["residuals"][1]["policy"] == "report"


def test_bidirectional_extensions_agree_on_fat_cantor_product():
    scenario = fat_cantor_box_scenario()
    report = extend_bidirectional(scenario.connection, sampled(scenario, 64), scenario.obstacle,
                                  tolerances=scenario.tolerances)
    assert report.verdict == Verdict.EXTENDED
    assert report.notes["discrepancy"] <= 1e-6
    assert report.policies == {0: ResidualPolicy.ASSERT, 1: ResidualPolicy.ASSERT}


def test_bidirectional_needs_swapped_axes(unit_square):
    half = HalfSlab(b=0.5, slab_axis=0, thin_axis=1, C=CantorLikeSet.ternary(0.0, 1.0))
    F = BiSlab(first=half, second=half)
    section = SampledSection.constant(Grid.uniform(unit_square, 16), [1.0])
    with pytest.raises(PreconditionError):
        extend_bidirectional(standard_connection(2, 1, unit_square), section, F)


# ============================================================================
# Maximal extension scan
# ============================================================================

def test_scan_crosses_hyperplane_patch_with_boundary():
    scenario = hyperplane_patch_scenario("standard")
    region = maximal_extension_scan(scenario.connection, sampled(scenario, 32), scenario.obstacle,
                                    tolerances=scenario.tolerances)
    assert region.is_full
    assert region.frontier == []
    assert region.extended_count == int(region.obstacle_mask.sum())


def test_scan_stops_at_full_hyperplane():
    scenario = hyperplane_patch_scenario("standard", variant="full")
    region = maximal_extension_scan(scenario.connection, sampled(scenario, 32), scenario.obstacle,
                                    tolerances=scenario.tolerances)
    assert not region.is_full
    assert region.extended_count == 0
    assert len(region.frontier) == int(region.obstacle_mask.sum()) == 64


@pytest.mark.slow
@pytest.mark.parametrize("connection", ["noextension", "cantor-c0"])
def test_scan_crosses_patches_in_flat_regions(connection):
    scenario = hyperplane_patch_scenario(connection)
    region = maximal_extension_scan(scenario.connection, sampled(scenario, 64), scenario.obstacle,
                                    tolerances=scenario.tolerances)
    assert region.is_full


@pytest.mark.parametrize("window", [4, 1])
def test_scan_window_must_be_odd_and_wide(window):
    scenario = hyperplane_patch_scenario("standard")
    with pytest.raises(PreconditionError):
        maximal_extension_scan(scenario.connection, sampled(scenario, 16), scenario.obstacle, window=window)


def test_scan_rejects_foreign_grid():
    scenario = hyperplane_patch_scenario("standard")
    with pytest.raises(PreconditionError):
        maximal_extension_scan(scenario.connection, sampled(scenario, 16), scenario.obstacle,
                               grid=scenario.grid(8))


# ============================================================================
# Detectors
# ============================================================================

@pytest.mark.parametrize("quotients, verdict", [
    ([1.0, 1.5, 2.25, 3.375], "divergent"),
    ([2.0, 2.001, 2.002], "convergent"),
    ([0.0, 0.0, 0.0], "convergent"),
    ([1.0, 0.5, 3.0], "inconclusive"),
    ([1.0, 1.2, 1.44], "inconclusive"),
])
def test_classify_quotients(quotients, verdict):
    assert classify_quotients(np.array(quotients)) == verdict


@given(st.floats(1e-3, 10.0), st.floats(1.6, 4.0), st.integers(3, 8))
@settings(max_examples=50, deadline=None)
def test_geometric_growth_is_divergent(start, ratio, count):
    assert classify_quotients(start * ratio ** np.arange(count)) == "divergent"


def test_smooth_function_has_convergent_quotients():
    verdicts = detect_nondifferentiability(
        lambda p: np.sin(p[:, 1])[:, None], axis=1, points=[(0.0, 0.3)], hs=(1e-2, 5e-3, 2.5e-3)
    )
    assert verdicts[0].verdict == "convergent"
    assert verdicts[0].derivative == pytest.approx(math.cos(0.3), abs=1e-4)


@pytest.mark.parametrize("hs", [(1e-2, 1e-3), (1e-2, 1e-2, 1e-3), (1e-2, -1e-3, -1e-2)])
def test_step_sequence_must_be_long_and_decreasing(hs):
    with pytest.raises(PreconditionError):
        detect_nondifferentiability(lambda p: p[:, :1], 0, [(0.0, 0.0)], hs)


@pytest.mark.parametrize("n", [2, 3])
def test_noextension_section_jumps_by_bump_power(n):
    scenario = noextension_scenario(n)
    site = scenario.jump_site
    result = detect_jump(scenario.connection, scenario.section, site.axis, site.base, site.eps)
    assert result.detected
    assert result.jump == pytest.approx(math.exp(-(n - 1)), abs=1e-6)
    np.testing.assert_allclose(result.limit_below, [1.0])


def test_noextension_section_is_undefined_on_interface():
    scenario = noextension_scenario(2)
    with pytest.raises(SectionDomainError):
        scenario.section(np.array([[0.25, 0.0]]))


def test_cantor_section_quotients_diverge_on_cantor_set():
    section = cantor_c0_scenario().section
    verdicts = detect_nondifferentiability(section, 1, DIVERGENT_POINTS, TERNARY_STEPS)
    controls = detect_nondifferentiability(section, 1, CONVERGENT_POINTS, TERNARY_STEPS)
    assert [v.verdict for v in verdicts] == ["divergent"] * len(DIVERGENT_POINTS)
    assert [v.verdict for v in controls] == ["convergent"] * len(CONVERGENT_POINTS)
    assert all(r >= 1.5 * (1 - 1e-5) for v in verdicts for r in v.ratios)
