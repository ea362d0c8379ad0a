"""Tests for boxes, grids, Cantor-like sets and dyadic decompositions."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obstacles import HalfSlab, HyperplanePatch
from transport_core.exceptions import DomainError, InfeasibleError, PreconditionError
from transport_core.sets import (
    CantorLikeSet,
    Grid,
    OpenBox,
    cantor_contains,
    cantor_function,
    cantor_function_array,
    complement_components,
    dyadic_decompose,
    fat_cantor_build,
)


# ============================================================================
# Boxes and grids
# ============================================================================

def test_open_box_excludes_its_boundary(unit_square):
    points = np.array([[0.5, 0.5], [0.0, 0.5], [1.0, 0.2], [0.999, 0.001]])
    assert unit_square.contains(points).tolist() == [True, False, False, True]


def test_box_volume_is_exact():
    box = OpenBox(((0.0, 2.0), (0.25, 1.0)))
    assert box.volume == Fraction(3, 2)


def test_grid_nodes_are_cell_centred(unit_square):
    grid = Grid.uniform(unit_square, 4)
    np.testing.assert_allclose(grid.axes[0], [0.125, 0.375, 0.625, 0.875])
    assert grid.nodes.shape == (4, 4, 2)
    assert unit_square.contains(grid.points).all()


def test_grid_cell_bounds_tile_the_box(unit_square):
    grid = Grid(unit_square, (4, 8))
    lo, hi = grid.cell_bounds()
    np.testing.assert_allclose(lo[0, 0], [0.0, 0.0])
    np.testing.assert_allclose(hi[-1, -1], [1.0, 1.0])
    np.testing.assert_allclose(hi[0, 0] - lo[0, 0], [0.25, 0.125])


def test_grid_rejects_mismatched_resolution(unit_square):
    with pytest.raises(ValueError):
        Grid(unit_square, (4,))


# ============================================================================
# Cantor-like sets
# ============================================================================

@pytest.mark.parametrize("x, inside", [(0.0, True), (0.25, True), (0.75, True), (1.0, True), (0.5, False), (0.2, False)])
def test_ternary_membership(x, inside):
    C = CantorLikeSet.ternary(0.0, 1.0)
    assert cantor_contains(C, x, 40) is inside


def test_ternary_membership_outside_ambient_raises():
    with pytest.raises(DomainError):
        cantor_contains(CantorLikeSet.ternary(0.0, 1.0), 1.5, 10)


def test_ternary_stage_measure_is_two_thirds_power():
    C = CantorLikeSet.ternary(0.0, 1.0)
    for k in range(6):
        assert C.stage_measure(k) == Fraction(2, 3) ** k
    assert C.residual_measure() == 0


def test_vectorised_membership_matches_exact_stage_cover():
    C = CantorLikeSet.ternary(0.0, 1.0, depth=6)
    xs = np.linspace(0.0, 1.0, 1001)
    expected = [cantor_contains(C, float(x), 6) for x in xs]
    assert C.contains_array(xs, depth=6).tolist() == expected


def test_discrete_set_is_its_points():
    C = CantorLikeSet.discrete([0.5], 0.0, 1.0)
    assert C.contains(0.5)
    assert not C.contains(0.5000001)
    assert C.refines_everywhere(8)


@pytest.mark.parametrize("x, value", [(0.0, 0.0), (1 / 3, 0.5), (0.5, 0.5), (2 / 3, 0.5), (0.25, 1 / 3), (1.0, 1.0), (-2.0, 0.0), (3.0, 1.0)])
def test_cantor_function_values(x, value):
    assert cantor_function(x) == pytest.approx(value, abs=1e-9)


def test_cantor_function_array_agrees_away_from_gap_ends():
    xs = np.array([0.1, 0.25, 0.4, 0.75, 0.9])
    np.testing.assert_allclose(cantor_function_array(xs), [cantor_function(x) for x in xs], atol=1e-8)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_cantor_function_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert 0.0 <= cantor_function(lo) <= cantor_function(hi) <= 1.0


# ============================================================================
# Fat Cantor sets
# ============================================================================

@pytest.mark.parametrize("target", [0.3, 0.5, 0.9])
def test_fat_cantor_beats_target_and_is_nowhere_dense(target):
    C = fat_cantor_build((0.0, 1.0), target)
    assert C.residual_measure() > Fraction(target)
    assert C.refines_everywhere(8)


def test_fat_cantor_half_target_has_three_quarters_measure():
    C = fat_cantor_build((0.0, 1.0), 0.5)
    assert C.removal_ratio == Fraction(1, 2)
    assert C.residual_measure() == Fraction(3, 4)


@given(st.floats(0.0, 0.99), st.integers(0, 10))
@settings(max_examples=50, deadline=None)
def test_fat_cantor_stage_measures_approach_residual(target, depth):
    C = fat_cantor_build((0.0, 1.0), target)
    excess = C.stage_measure(depth) - C.residual_measure()
    assert excess == C.removal_ratio * C.length / 2 ** (depth + 1)
    assert C.residual_measure() > Fraction(target)


def test_fat_cantor_membership_respects_removed_gaps():
    C = fat_cantor_build((0.0, 1.0), 0.5)
    assert not C.contains(0.5)
    assert C.contains(0.0)
    assert C.contains(1.0)


@pytest.mark.parametrize("target, error", [(1.0, InfeasibleError), (2.0, InfeasibleError), (-0.1, PreconditionError)])
def test_fat_cantor_rejects_impossible_targets(target, error):
    with pytest.raises(error):
        fat_cantor_build((0.0, 1.0), target)


# ============================================================================
# Dyadic decompositions
# ============================================================================

def test_unit_square_decomposition_at_level_two(unit_square):
    decomposition = dyadic_decompose(unit_square, 2)
    assert len(decomposition.cubes) == 4
    assert all(cube.level == 2 for cube in decomposition.cubes)
    assert decomposition.union_measure() == Fraction(1, 4)
    assert decomposition.is_interior_disjoint()


def test_big_box_decomposition_exceeds_measure_bound():
    decomposition = dyadic_decompose(OpenBox(((0.0, 2.0), (0.0, 1.0))), 6)
    assert decomposition.union_measure() > Fraction(6, 5)
    assert decomposition.is_interior_disjoint()
    levels = [cube.level for cube in decomposition.cubes]
    assert levels == sorted(levels)


@given(st.integers(1, 5))
@settings(max_examples=5, deadline=None)
def test_decomposition_measure_grows_with_level(level):
    box = OpenBox(((0.0, 1.0), (0.0, 1.0)))
    assert dyadic_decompose(box, level).union_measure() <= dyadic_decompose(box, level + 1).union_measure()


def test_decomposition_frame_lists_levels_and_corners(unit_square):
    frame = dyadic_decompose(unit_square, 2).to_dataframe()
    assert list(frame.columns) == ["level", "corner_1", "corner_2"]
    assert len(frame) == 4


def test_indicator_decomposition_needs_bounds():
    with pytest.raises(PreconditionError):
        dyadic_decompose(lambda pts: np.ones(len(pts), dtype=bool), 2)


# ============================================================================
# Complement components
# ============================================================================

@pytest.mark.parametrize("resolution", [32, 64, 128])
def test_half_slab_complement_is_connected(unit_square, resolution):
    F = HalfSlab(b=0.5, slab_axis=0, thin_axis=1, C=CantorLikeSet.discrete([0.5], 0.0, 1.0))
    grid = Grid.uniform(unit_square, resolution)
    count, labels = complement_components(unit_square, F, grid, depth=12)
    assert count == 1
    assert labels.shape == grid.shape


@pytest.mark.parametrize("resolution", [32, 64, 128])
def test_full_hyperplane_splits_the_square(unit_square, resolution):
    grid = Grid.uniform(unit_square, resolution)
    count, labels = complement_components(unit_square, HyperplanePatch(axis=1, level=0.5), grid, depth=12)
    assert count == 2
    # the two sides keep distinct labels at every refinement
    assert labels[0, 0] != labels[0, -1]


def test_components_reject_foreign_grid(unit_square):
    other = Grid.uniform(OpenBox(((0.0, 2.0), (0.0, 1.0))), 8)
    with pytest.raises(PreconditionError):
        complement_components(unit_square, HyperplanePatch(axis=1, level=0.5), other, depth=12)
