"""Tests for the closed-form gallery, the scenario registry and the pipeline runner."""

from dataclasses import replace
from fractions import Fraction
import math

import numpy as np
import pytest

from scenarios import ScenarioRunner, build_scenario, get_registry, inline_scenario, load_catalog
from scenarios.counterexamples import fat_cantor_product, noextension_scenario
from scenarios.gallery import bump, expected_jump, positive_power, reflected_step, smooth_step
from transport_core.exceptions import ConfigurationError, InfeasibleError, UnknownScenarioError
from transport_core.extension import Tolerances, Verdict
from transport_core.sets import OpenBox
from utils.serialization import HASH_MARKER, render_report, reproducible_part, write_run_artifacts


# ============================================================================
# Gallery
# ============================================================================

def test_bump_values():
    assert float(bump(0.0)) == pytest.approx(0.3678794, abs=1e-7)
    np.testing.assert_array_equal(bump(np.array([-1.0, 1.0, 2.0])), [0.0, 0.0, 0.0])


def test_smooth_step_rises_from_zero_to_one():
    assert smooth_step(-1.5) == 0.0
    assert smooth_step(-0.5) == pytest.approx(0.5, abs=1e-10)
    assert smooth_step(0.25) == 1.0


@pytest.mark.parametrize("x", [-0.9, -0.7, -0.3, -0.05])
def test_smooth_step_is_symmetric(x):
    assert smooth_step(x) + smooth_step(-1.0 - x) == pytest.approx(1.0, abs=1e-10)


def test_reflected_step_and_positive_power():
    np.testing.assert_allclose(reflected_step(np.array([-1.0, 0.0, 1.0, 2.0])), [1.0, 1.0, 0.0, 0.0])
    np.testing.assert_allclose(positive_power(np.array([-2.0, 0.0, 3.0]), 2), [0.0, 0.0, 9.0])


def test_expected_jump_is_bump_power():
    assert expected_jump(2) == pytest.approx(float(bump(0.0)))
    assert expected_jump(3) == pytest.approx(math.exp(-2))


# ============================================================================
# Registry
# ============================================================================

def test_registry_names_match_catalog():
    names = get_registry().names
    assert names == ["standard", "noextension", "cantor-c0", "fat-cantor-box", "big-measure", "hyperplane-patch"]
    assert set(load_catalog()) == set(names)


def test_catalog_verdicts_match_built_scenarios():
    catalog = load_catalog()
    for name in ("standard", "cantor-c0", "fat-cantor-box", "hyperplane-patch"):
        scenario = build_scenario(name)
        assert scenario.expected_verdict.value == catalog[name]["expected_verdict"]
        assert scenario.pipeline == catalog[name]["pipeline"]


def test_unknown_scenario_lists_registered_names():
    with pytest.raises(UnknownScenarioError, match="Registered scenarios: standard, noextension"):
        build_scenario("mobius")


@pytest.mark.parametrize("name, overrides", [
    ("noextension", {"box": OpenBox.cube(2, 0.0, 1.0)}),
    ("fat-cantor-box", {"dim": 3}),
    ("standard", {"box": OpenBox.cube(3, 0.0, 1.0), "dim": 2}),
])
def test_inapplicable_overrides_raise(name, overrides):
    with pytest.raises(ConfigurationError):
        build_scenario(name, **overrides)


def test_standard_scenario_accepts_box_and_dim():
    scenario = build_scenario("standard", box=OpenBox(((0.0, 2.0), (0.0, 1.0), (0.0, 1.0))))
    assert scenario.dim == 3
    assert scenario.obstacle.b == 1.0
    assert build_scenario("standard", dim=3).resolution == 32


def test_noextension_offset_translates_box():
    scenario = build_scenario("noextension", offset=[1.0, -1.0])
    assert scenario.box == OpenBox(((-2.0, 4.0), (-4.0, 2.0)))
    assert scenario.jump_site.base == (1.0, -1.0)


def test_big_measure_obstacle_exceeds_bound():
    scenario = build_scenario("big-measure")
    assert Fraction(scenario.metadata["obstacle_measure"]) > Fraction(6, 5)
    assert scenario.box.volume == 2


def test_big_measure_bound_must_stay_below_volume():
    with pytest.raises(InfeasibleError):
        build_scenario("big-measure", lambda0=2.0)


def test_fat_cantor_product_measure_beats_target():
    box = OpenBox(((0.0, 1.0), (0.0, 0.5)))
    product = fat_cantor_product(box, 0.4)
    assert product.exact_measure() > Fraction(2, 5)


# ============================================================================
# Inline experiments
# ============================================================================

def test_inline_pipeline_follows_obstacle_kind(unit_square):
    cases = {
        "halfslab:b1=0.5,thin=2,C=ternary:0|1": "slab",
        "bislab:b1=0.25,b2=0.25,C1=fat:0.25|0.75|0.25,C2=fat:0.25|0.75|0.25": "bislab",
        "hyperplane:axis=2,level=0.5,min1=0.25": "scan",
    }
    for descriptor, pipeline in cases.items():
        assert inline_scenario(unit_square, descriptor).pipeline == pipeline


def test_inline_parallel_section_needs_commuting_matrices(unit_square):
    with pytest.raises(ConfigurationError, match="commuting"):
        inline_scenario(
            unit_square, "halfslab:b1=0.5,thin=2,C=ternary:0|1",
            matrices=[[[0.0, 1.0], [-1.0, 0.0]], [[1.0, 0.0], [0.0, -1.0]]],
            section_kind="parallel", section_value=(1.0, 0.0),
        )


@pytest.mark.parametrize("matrices, value", [
    ([[[0.3]]], (1.0,)),
    ([[[0.3]], [[-0.7]]], (1.0, 2.0)),
])
def test_inline_shapes_must_agree(unit_square, matrices, value):
    with pytest.raises(ConfigurationError):
        inline_scenario(unit_square, "halfslab:b1=0.5,thin=2,C=ternary:0|1", matrices=matrices, section_value=value)


def test_inline_parallel_section_extends(unit_square):
    scenario = inline_scenario(
        unit_square, "halfslab:b1=0.5,thin=2,C=ternary:0|1",
        matrices=[[[0.3]], [[-0.7]]], section_kind="parallel",
        tolerances=Tolerances(residual=1e-4), resolution=64,
    )
    result = ScenarioRunner().run(scenario)
    assert result.verdict == Verdict.EXTENDED
    assert result.matches


# ============================================================================
# Runner
# ============================================================================

@pytest.fixture
def runner() -> ScenarioRunner:
    return ScenarioRunner(window=5, depth=12)


def test_standard_run_extends(runner):
    result = runner.run(build_scenario("standard"), resolution=32)
    assert result.verdict == Verdict.EXTENDED
    assert result.matches
    assert result.evidence == []
    assert result.extended.is_total


def test_cantor_run_collects_divergence_evidence(runner):
    result = runner.run(build_scenario("cantor-c0"), resolution=64)
    assert result.verdict == Verdict.OBSTRUCTED
    assert result.measurements["divergent_points"] == 5
    assert result.measurements["convergent_controls"] == 3
    assert {e.kind for e in result.evidence} == {"divergence"}


def test_smooth_cantor_variant_extends(runner):
    result = runner.run(build_scenario("cantor-c0", variant="smooth"), resolution=128)
    assert result.verdict == Verdict.EXTENDED
    assert result.matches


def test_fat_cantor_box_run_extends(runner):
    result = runner.run(build_scenario("fat-cantor-box"), resolution=64)
    assert result.verdict == Verdict.EXTENDED
    assert result.measurements["discrepancy"] <= 1e-6
    assert result.measurements["obstacle_measure"] == "9/64"


def test_full_hyperplane_run_is_obstructed(runner):
    result = runner.run(build_scenario("hyperplane-patch", variant="full"), resolution=32)
    assert result.verdict == Verdict.OBSTRUCTED
    assert result.matches
    assert [e.kind for e in result.evidence] == ["frontier"]
    assert result.to_dict()["scan"]["frontier_nodes"] == 64


@pytest.mark.slow
def test_noextension_run_reports_jump_and_frontier(runner):
    result = runner.run(noextension_scenario(2))
    kinds = {e.kind for e in result.evidence}
    assert result.verdict == Verdict.OBSTRUCTED
    assert {"jump", "frontier"} <= kinds
    assert result.jump.jump == pytest.approx(math.exp(-1), abs=1e-6)
    # the frontier stays inside Q
    for index in result.region.frontier:
        point = result.grid.coordinate(index)
        assert np.all(np.abs(point) <= 1.0 + result.grid.spacing)


@pytest.mark.parametrize("resolution", [32, 64])
def test_noextension_run_on_coarse_grids(runner, resolution):
    result = runner.run(noextension_scenario(2), resolution=resolution)
    assert result.verdict == Verdict.OBSTRUCTED
    assert result.matches
    assert result.tolerances.residual == pytest.approx(1.5 * 6.0 / resolution)
    assert result.jump.jump == pytest.approx(math.exp(-1), abs=1e-6)


@pytest.mark.slow
def test_noextension_run_in_three_dimensions(runner):
    scenario = noextension_scenario(3)
    result = runner.run(scenario)
    assert result.grid.shape == (32, 32, 32)
    assert result.verdict == Verdict.OBSTRUCTED
    assert "jump" in {e.kind for e in result.evidence}
    assert result.jump.jump == pytest.approx(math.exp(-2), abs=1e-6)


def test_component_count_follows_scenario_flag(runner):
    assert build_scenario("big-measure").count_components
    assert not build_scenario("standard").count_components
    counted = replace(build_scenario("hyperplane-patch", variant="full"), count_components=True)
    result = runner.run(counted, resolution=32)
    assert result.measurements["components"] == 2
    plain = runner.run(build_scenario("hyperplane-patch", variant="full"), resolution=32)
    assert "components" not in plain.measurements


@pytest.mark.slow
def test_big_measure_run_extends_over_connected_complement(runner):
    result = runner.run(build_scenario("big-measure"))
    assert result.verdict == Verdict.EXTENDED
    assert result.measurements["components"] == 1
    assert result.region.is_full


@pytest.mark.slow
@pytest.mark.parametrize("connection", ["standard", "noextension", "cantor-c0"])
def test_hyperplane_patch_runs_extend(runner, connection):
    result = runner.run(build_scenario("hyperplane-patch", connection=connection))
    assert result.verdict == Verdict.EXTENDED
    assert result.region.is_full


def test_run_summary_is_deterministic(runner):
    first = runner.run(build_scenario("standard"), resolution=16)
    second = runner.run(build_scenario("standard"), resolution=16)
    assert first.to_dict() == second.to_dict()
    assert "elapsed_s" not in first.to_dict()


def test_report_metadata_is_kept_out_of_reproducible_part(runner):
    result = runner.run(build_scenario("standard"), resolution=16)
    one = render_report(result, 12, generated_at="2024-01-01T00:00:00+00:00")
    two = render_report(result, 12, generated_at="2025-06-30T12:00:00+00:00")
    assert one != two
    assert reproducible_part(one) == reproducible_part(two)
    assert HASH_MARKER in one
    assert "status      MATCH" in one


def test_run_artifacts_are_written(runner, tmp_path):
    result = runner.run(build_scenario("standard"), resolution=16)
    paths = write_run_artifacts(result, tmp_path, ("csv", "report"), digits=12)
    assert [p.name for p in paths] == ["standard-input.csv", "standard-extended.csv", "standard-report.txt"]
    header = paths[0].read_text(encoding="utf-8").splitlines()[0]
    assert header == "index_1,index_2,x_1,x_2,defined,s_1"
    assert write_run_artifacts(result, tmp_path / "none", ()) == []
