"""Tests for connections, parallel transport, pullbacks and covariant residuals."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from scenarios.counterexamples import noextension_scenario
from transport_core.connection import (
    ConnectionForm,
    Diffeo,
    PiecewisePath,
    SampledSection,
    Smoothness,
    constant_connection,
    covariant_residual,
    edge_propagators,
    parallel_transport,
    pullback,
    standard_connection,
    transport_certified,
)
from transport_core.exceptions import DomainError, EvaluationError, PreconditionError
from transport_core.sets import Grid, OpenBox


COMMUTING = [np.diag([0.3, -0.2]), np.diag([-0.7, 0.1])]
TWISTED = [np.array([[0.0, 1.0], [-1.0, 0.0]]), np.array([[0.5, 0.0], [0.2, -0.3]])]

matrix_entries = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)
matrices_2x2 = st.lists(matrix_entries, min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2))


# ============================================================================
# Transport
# ============================================================================

def test_standard_connection_transport_is_identity():
    conn = standard_connection(2, 1)
    value = parallel_transport(conn, PiecewisePath.segment((0, 0), (1, 1)), [1.0])
    np.testing.assert_allclose(value, [1.0], atol=1e-14)


def test_rank_one_constant_transport_is_exponential():
    conn = constant_connection([[[0.3]], [[-0.7]]])
    end = np.array([0.8, 0.6])
    value = parallel_transport(conn, PiecewisePath.segment((0, 0), end), [1.0])
    assert value[0] == pytest.approx(math.exp(-(0.3 * end[0] - 0.7 * end[1])), abs=1e-10)


def test_commuting_transport_matches_matrix_exponential():
    conn = constant_connection(COMMUTING)
    end = np.array([0.4, -0.9])
    v = np.array([1.0, 2.0])
    value = parallel_transport(conn, PiecewisePath.polyline([(0, 0), (0.4, 0), end]), v)
    expected = expm(-(end[0] * COMMUTING[0] + end[1] * COMMUTING[1])) @ v
    np.testing.assert_allclose(value, expected, atol=1e-10)


def test_transport_of_matrix_columns_matches_vectors():
    conn = constant_connection(TWISTED)
    path = PiecewisePath.polyline([(0, 0), (0.3, 0.7), (1.0, -0.2)])
    columns = parallel_transport(conn, path, np.eye(2))
    for k in range(2):
        np.testing.assert_allclose(columns[:, k], parallel_transport(conn, path, np.eye(2)[k]), atol=1e-14)


@given(matrices_2x2, matrices_2x2)
@settings(max_examples=25, deadline=None)
def test_reversed_path_undoes_transport(A1, A2):
    conn = constant_connection([A1, A2])
    path = PiecewisePath.polyline([(0, 0), (0.5, 0.2), (0.1, 0.9)])
    v = np.array([1.0, -0.5])
    there = parallel_transport(conn, path, v)
    back = parallel_transport(conn, path.reversed(), there)
    np.testing.assert_allclose(back, v, atol=1e-8)


vectors_2 = st.lists(matrix_entries, min_size=2, max_size=2).map(np.array)


@given(matrix_entries, matrix_entries, vectors_2, vectors_2)
@settings(max_examples=25, deadline=None)
def test_transport_is_linear(a, b, v, w):
    conn = constant_connection(TWISTED)
    path = PiecewisePath.polyline([(0, 0), (0.5, 0), (0.5, 0.5)])
    combined = parallel_transport(conn, path, a * v + b * w)
    separate = a * parallel_transport(conn, path, v) + b * parallel_transport(conn, path, w)
    np.testing.assert_allclose(combined, separate, atol=1e-10)


def test_concatenated_path_composes_transport():
    conn = constant_connection(TWISTED)
    first = PiecewisePath.segment((0, 0), (0.5, 0.5))
    second = PiecewisePath.segment((0.5, 0.5), (1.0, 0.0))
    v = np.array([0.2, 1.0])
    whole = parallel_transport(conn, first.concatenated(second), v)
    stepwise = parallel_transport(conn, second, parallel_transport(conn, first, v))
    np.testing.assert_allclose(whole, stepwise, atol=1e-12)


def test_certified_transport_reports_small_defect():
    conn = constant_connection(TWISTED)
    certificate = transport_certified(conn, PiecewisePath.segment((0, 0), (1, 1)), [1.0, 0.0], step=1e-2)
    assert certificate.defect < 1e-8
    assert certificate.step == 1e-2


def test_transport_leaving_the_box_raises():
    conn = constant_connection(TWISTED, box=OpenBox.cube(2, 0.0, 1.0))
    with pytest.raises(DomainError):
        parallel_transport(conn, PiecewisePath.segment((0.5, 0.5), (2.0, 0.5)), [1.0, 0.0])


@pytest.mark.parametrize("step, v0", [(0.0, [1.0, 0.0]), (-1e-3, [1.0, 0.0]), (1e-3, [1.0, 0.0, 0.0])])
def test_transport_rejects_bad_arguments(step, v0):
    with pytest.raises(PreconditionError):
        parallel_transport(constant_connection(TWISTED), PiecewisePath.segment((0, 0), (1, 1)), v0, step)


def test_non_finite_field_raises_evaluation_error():
    def broken(points):
        return np.full((np.atleast_2d(points).shape[0], 1, 1), np.nan)

    conn = ConnectionForm(dim=1, rank=1, components=(broken,), smoothness=Smoothness.C0, name="broken")
    with pytest.raises(EvaluationError):
        parallel_transport(conn, PiecewisePath.segment((0.0,), (1.0,)), [1.0])


def test_discontinuous_polyline_is_rejected():
    with pytest.raises(ValueError):
        PiecewisePath((0.0, 1.0, 2.0), (lambda t: np.zeros(2), lambda t: np.ones(2)), (lambda t: np.zeros(2),) * 2)


# ============================================================================
# Pullbacks
# ============================================================================

def random_paths(box: OpenBox, count: int, rng: np.random.Generator):
    """Polylines with three vertices inside the central 90% of ``box``."""
    lows = box.lows + 0.05 * box.lengths
    highs = box.highs - 0.05 * box.lengths
    return [PiecewisePath.polyline(rng.uniform(lows, highs, size=(3, box.dim))) for _ in range(count)]


PULLBACK_CASES = {
    "translation": lambda: Diffeo.translation((0.5, -0.25), OpenBox(((-3.5, 2.5), (-2.75, 3.25)))),
    "axis swap": lambda: Diffeo.axis_swap(0, 1, OpenBox(((-3.0, 3.0), (-3.0, 3.0)))),
    "rotation": lambda: Diffeo.rotation(math.pi / 6, OpenBox(((-2.1, 2.1), (-2.1, 2.1)))),
}


@pytest.mark.parametrize("case", sorted(PULLBACK_CASES))
def test_pullback_transport_matches_transport_along_image(case, rng):
    conn = noextension_scenario(2).connection
    d = PULLBACK_CASES[case]()
    d.validate()
    pulled = pullback(conn, d)
    for path in random_paths(d.source, 10, rng):
        direct = parallel_transport(pulled, path, [1.0], step=1e-2)
        image = parallel_transport(conn, path.mapped(d), [1.0], step=1e-2)
        np.testing.assert_allclose(direct, image, atol=2e-6)


def test_translation_onto_noextension_box_has_box_target():
    d = PULLBACK_CASES["translation"]()
    assert d.target == OpenBox(((-3.0, 3.0), (-3.0, 3.0)))
    assert PULLBACK_CASES["rotation"]().target is None


def test_pullback_outside_connection_box_raises():
    conn = noextension_scenario(2).connection
    d = Diffeo.translation((5.0, 0.0), OpenBox(((-3.0, 3.0), (-3.0, 3.0))))
    with pytest.raises(DomainError):
        pullback(conn, d)


def test_pullback_of_standard_connection_is_standard(rng):
    conn = standard_connection(2, 1, OpenBox(((-2.0, 2.0), (-2.0, 2.0))))
    pulled = pullback(conn, Diffeo.rotation(math.pi / 5, OpenBox(((-1.0, 1.0), (-1.0, 1.0)))))
    points = rng.uniform(-1.0, 1.0, size=(50, 2))
    np.testing.assert_array_equal(pulled.evaluate_all(points), np.zeros((2, 50, 1, 1)))


def test_pullback_by_translation_shifts_the_form(rng):
    conn = noextension_scenario(2).connection
    d = PULLBACK_CASES["translation"]()
    pulled = pullback(conn, d)
    points = rng.uniform(d.source.lows, d.source.highs, size=(200, 2))
    for axis in range(2):
        np.testing.assert_allclose(
            pulled.evaluate(axis, points), conn.evaluate(axis, points + np.array([0.5, -0.25])), rtol=0, atol=1e-15
        )


def test_euclidean_move_needs_orthogonal_matrix():
    with pytest.raises(PreconditionError):
        Diffeo.euclidean_move(np.array([[2.0, 0.0], [0.0, 1.0]]), (0.0, 0.0), OpenBox.cube(2, 0.0, 1.0))


def test_pullback_of_constant_connection_by_swap_swaps_components():
    conn = constant_connection(TWISTED)
    pulled = pullback(conn, Diffeo.axis_swap(0, 1, OpenBox.cube(2, 0.0, 1.0)))
    point = np.array([[0.3, 0.4]])
    np.testing.assert_allclose(pulled.evaluate(0, point)[0], TWISTED[1])
    np.testing.assert_allclose(pulled.evaluate(1, point)[0], TWISTED[0])


# ============================================================================
# No-extension connection
# ============================================================================

@pytest.mark.parametrize("n", [2, 3])
def test_noextension_form_vanishes_on_the_shell(n, rng):
    conn = noextension_scenario(n).connection
    points = rng.uniform(-1.25, 1.25, size=(40 * n, n))
    for k in range(points.shape[0]):
        points[k, k % n] = 1.25 if k % 2 else -1.25
    np.testing.assert_allclose(conn.evaluate_all(points), 0.0, rtol=0, atol=1e-14)


@pytest.mark.parametrize("vertices", [
    [(-2.0, 0.5), (0.0, 0.5)],
    [(-2.0, -2.0), (2.0, -2.0)],
    [(-2.0, -2.0), (-2.0, 2.0), (0.3, 0.4)],
    [(1.5, -0.5), (1.5, 0.6), (-0.2, 0.6)],
])
def test_noextension_section_is_parallel_along_paths_avoiding_q(vertices):
    scenario = noextension_scenario(2)
    start = scenario.section(np.array([vertices[0]]))[0]
    end = scenario.section(np.array([vertices[-1]]))[0]
    value = parallel_transport(scenario.connection, PiecewisePath.polyline(vertices), start)
    np.testing.assert_allclose(value, end, atol=1e-6)


# ============================================================================
# Residuals and propagators
# ============================================================================

def test_parallel_section_has_small_residual(unit_square):
    conn = constant_connection([[[0.3]], [[-0.7]]], box=unit_square)
    grid = Grid.uniform(unit_square, 128)
    section = SampledSection.from_closed_form(grid, lambda p: np.exp(-0.3 * p[:, 0] + 0.7 * p[:, 1])[:, None])
    for axis in range(2):
        assert covariant_residual(conn, section, axis).maximum < 1e-5


def test_non_parallel_section_has_large_residual(unit_square):
    conn = constant_connection([[[0.3]], [[-0.7]]], box=unit_square)
    section = SampledSection.constant(Grid.uniform(unit_square, 16), [1.0])
    assert covariant_residual(conn, section, 0).maximum == pytest.approx(0.3)
    assert covariant_residual(conn, section, 1).maximum == pytest.approx(0.7)


def test_residual_skips_nodes_next_to_gaps(unit_square):
    grid = Grid.uniform(unit_square, 8)
    mask = np.ones(grid.shape, dtype=bool)
    mask[4, :] = False
    values = np.where(mask[..., None], 1.0, np.nan)
    section = SampledSection(grid, values, mask)
    field_ = covariant_residual(standard_connection(2, 1, unit_square), section, 0)
    # nodes on the boundary rows and beside the gap have no central difference
    assert field_.skipped == 8 * 8 - 8 * 3
    assert field_.maximum == 0.0


def test_residual_step_must_be_multiple_of_spacing(unit_square):
    section = SampledSection.constant(Grid.uniform(unit_square, 8), [1.0])
    with pytest.raises(PreconditionError):
        covariant_residual(standard_connection(2, 1, unit_square), section, 0, h=0.1)


def test_edge_propagators_match_exponentials(unit_square):
    conn = constant_connection(TWISTED, box=unit_square)
    grid = Grid.uniform(unit_square, 8)
    P = edge_propagators(conn, grid, 1, step=1e-3)
    np.testing.assert_allclose(P[2, 3], expm(-grid.spacing[1] * TWISTED[1]), atol=1e-12)
    assert np.isnan(P[:, -1]).all()


def test_sampled_section_frame_layout(unit_square):
    section = SampledSection.constant(Grid.uniform(unit_square, 4), [1.0, 2.0])
    frame = section.to_dataframe()
    assert list(frame.columns) == ["index_1", "index_2", "x_1", "x_2", "defined", "s_1", "s_2"]
    assert len(frame) == 16
