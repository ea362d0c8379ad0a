"""
Extension of parallel sections across obstacles.

``extend_slab`` integrates a section off a half-slab obstacle along the slab
axis starting from a slice left of the obstacle. ``extend_bidirectional``
runs it in both axis orders of a bi-slab and requires the results to agree.
``maximal_extension_scan`` grows the region a section extends to by local
windowed extensions. The detectors collect evidence for obstructions.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging
import time

import numpy as np
from scipy import ndimage

from obstacles.base import ObstacleSet
from obstacles.slabs import BiSlab, HalfSlab
from transport_core.connection import (
    ConnectionForm,
    SampledSection,
    Smoothness,
    covariant_residual,
    edge_propagators,
)
from transport_core.exceptions import (
    InconsistencyError,
    InputIntegrityError,
    PreconditionError,
)
from transport_core.fundamental import FundamentalSolution, fundamental_matrix
from transport_core.logging_config import StructuredLogger
from transport_core.sets import CantorVariant, Grid


logger = logging.getLogger(__name__)
structured = StructuredLogger(__name__)

# (N, n) points -> (N, r) or (N,) section values
SectionFunction = Callable[[np.ndarray], np.ndarray]

DIVERGENCE_FACTOR = 1.5
DIVERGENCE_ALLOWANCE = 1e-5
CONVERGENCE_RELATIVE = 0.01
NEGLIGIBLE_QUOTIENT = 1e-12
JUMP_FACTOR = 10.0


class Verdict(str, Enum):
    EXTENDED = "extended"
    OBSTRUCTED = "obstructed"


class ResidualPolicy(str, Enum):
    """Whether an axis residual of the extension gates the verdict."""
    ASSERT = "assert"
    REPORT = "report"


@dataclass(frozen=True)
class Tolerances:
    """Tolerances of an extension run.

    Attributes:
        agreement: Max allowed ||s~ - s|| on off-obstacle nodes
        residual: Max allowed covariant residual on asserted axes
        step: RK4 step of the fundamental-solution sweeps
        residual_slope: Residual allowance per unit of grid spacing; the
            tolerance on a grid is max(residual, residual_slope * spacing)
    """
    agreement: float = 1e-6
    residual: float = 1e-5
    step: float = 1e-3
    residual_slope: float = 0.0

    def __post_init__(self):
        """Validate tolerances after initialization."""
        if self.agreement <= 0 or self.residual <= 0:
            raise ValueError("Tolerances must be positive")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.residual_slope < 0:
            raise ValueError(f"residual_slope must be non-negative, got {self.residual_slope}")

    def for_grid(self, grid: Grid) -> 'Tolerances':
        """Tolerances with the residual widened to the grid's coarsest spacing."""
        widened = max(self.residual, self.residual_slope * float(np.max(grid.spacing)))
        return replace(self, residual=widened)


@dataclass(frozen=True)
class Evidence:
    """Evidence attached to an obstructed verdict.

    Attributes:
        kind: "residual", "agreement", "inconsistency", "jump", "divergence"
            or "frontier"
        location: Coordinates of the offending point
        magnitude: Jump size, residual or discrepancy
        sequence: Difference-quotient sequence for divergence evidence
        detail: Free text
    """
    kind: str
    location: Tuple[float, ...]
    magnitude: float
    sequence: Tuple[float, ...] = ()
    detail: str = ""

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "location": list(self.location),
            "magnitude": self.magnitude,
            "sequence": list(self.sequence),
            "detail": self.detail,
        }


@dataclass(eq=False)
class ExtensionReport:
    """Outcome of an extension run.

    Attributes:
        extended: s~ on the full grid
        residuals: Max covariant residual of s~ per axis (0-based keys)
        policies: Residual policy per axis
        agreement: max ||s~ - s|| over off-obstacle nodes
        verdict: Extended or obstructed
        tolerances: Tolerances the verdict was taken at
        evidence: Evidence for an obstructed verdict
        a1: Start coordinate actually used on the slab axis
        slab_axis: Axis of integration (0-based)
        notes: Additional measurements (e.g. bidirectional discrepancy)
        fundamental: Fundamental solution of the slab sweep (first axis for bi-slabs)
    """
    extended: SampledSection
    residuals: Dict[int, float]
    policies: Dict[int, ResidualPolicy]
    agreement: float
    verdict: Verdict
    tolerances: Tolerances
    evidence: List[Evidence] = field(default_factory=list)
    a1: Optional[float] = None
    slab_axis: Optional[int] = None
    notes: Dict[str, float] = field(default_factory=dict)
    fundamental: Optional[FundamentalSolution] = None

    def __post_init__(self):
        """Check verdict consistency after initialization."""
        if self.verdict == Verdict.OBSTRUCTED and not self.evidence:
            raise ValueError("An obstructed verdict needs evidence")
        if self.verdict == Verdict.EXTENDED:
            asserted = [self.residuals[a] for a, p in self.policies.items() if p == ResidualPolicy.ASSERT]
            if self.agreement > self.tolerances.agreement or any(r > self.tolerances.residual for r in asserted):
                raise ValueError("An extended verdict needs agreement and asserted residuals within tolerance")

    @property
    def is_extended(self) -> bool:
        return self.verdict == Verdict.EXTENDED

    def to_dict(self) -> Dict:
        return {
            "verdict": self.verdict.value,
            "agreement": self.agreement,
            "tolerances": {
                "agreement": self.tolerances.agreement,
                "residual": self.tolerances.residual,
                "step": self.tolerances.step,
            },
            "residuals": [
                {"axis": axis + 1, "max": value, "policy": self.policies[axis].value}
                for axis, value in sorted(self.residuals.items())
            ],
            "a1": self.a1,
            "slab_axis": None if self.slab_axis is None else self.slab_axis + 1,
            "evidence": [e.to_dict() for e in self.evidence],
            "notes": dict(self.notes),
        }


# ============================================================================
# Slab extension
# ============================================================================

def slab_policy(conn: ConnectionForm, F: HalfSlab, depth: int = 12) -> ResidualPolicy:
    """Default policy for the non-slab axes.

    Asserted for a discrete thin set, or for a nowhere-dense thin set under
    a connection of class C^1; reported otherwise.
    """
    if F.C.variant == CantorVariant.DISCRETE:
        return ResidualPolicy.ASSERT
    if conn.smoothness.at_least(Smoothness.C1) and F.C.refines_everywhere(min(depth, 8)):
        return ResidualPolicy.ASSERT
    return ResidualPolicy.REPORT


def snap_start(grid: Grid, axis: int, a1: float, b: float) -> Tuple[int, float]:
    """Grid index and coordinate on ``axis`` closest to a1 and strictly below b."""
    coords = grid.axes[axis]
    below = np.flatnonzero(coords < b)
    if below.size == 0:
        raise PreconditionError(f"No grid node lies below b1={b} on axis {axis + 1}")
    index = int(below[np.argmin(np.abs(coords[below] - a1))])
    return index, float(coords[index])


def _check_input(
    conn: ConnectionForm,
    s: SampledSection,
    axes: Sequence[int],
    tolerance: float
) -> None:
    for axis in axes:
        field_ = covariant_residual(conn, s, axis)
        if field_.maximum > tolerance:
            point = tuple(s.grid.coordinate(field_.argmax))
            raise InputIntegrityError(
                f"Input section is not parallel off the obstacle: axis {axis + 1} residual "
                f"{field_.maximum:.3e} at {point} exceeds {tolerance:.1e}",
                axis=axis, residual=field_.maximum
            )


def _integrate_from_slice(
    conn: ConnectionForm,
    s: SampledSection,
    axis: int,
    start: int,
    t0: float,
    step: float
) -> Tuple[SampledSection, FundamentalSolution]:
    """s~(x) = X(x_axis, x') s(t0, x') on the whole grid."""
    grid = s.grid
    nodes = np.take(grid.nodes, start, axis=axis)
    params = np.delete(nodes.reshape(-1, grid.dim), axis, axis=1)
    start_values = np.take(s.values, start, axis=axis).reshape(-1, s.rank)

    def A(t: float, Y: np.ndarray) -> np.ndarray:
        points = np.insert(Y, axis, t, axis=1)
        return -conn.evaluate(axis, points)

    fs = fundamental_matrix(A, t0, grid.axes[axis], params, step)
    values = np.einsum("tpab,pb->tpa", fs.matrices, start_values)
    other_shape = tuple(c for i, c in enumerate(grid.shape) if i != axis)
    values = np.moveaxis(values.reshape((grid.shape[axis],) + other_shape + (s.rank,)), 0, axis)
    return SampledSection(grid, values, np.ones(grid.shape, dtype=bool)), fs


def _extend_along(
    conn: ConnectionForm,
    s: SampledSection,
    off_mask: np.ndarray,
    slab_axis: int,
    b: float,
    a1: Optional[float],
    policies: Dict[int, ResidualPolicy],
    tolerances: Tolerances
) -> ExtensionReport:
    grid = s.grid
    lo = grid.box.intervals[slab_axis][0]
    if a1 is None:
        a1 = (lo + b) / 2
    if a1 >= b:
        raise PreconditionError(f"a1={a1} must lie below b1={b}")
    if a1 <= lo:
        raise PreconditionError(f"a1={a1} must lie inside the box interval on axis {slab_axis + 1}")

    start, t0 = snap_start(grid, slab_axis, a1, b)
    if not np.take(s.mask, start, axis=slab_axis).all():
        raise PreconditionError(f"The start slice x{slab_axis + 1}={t0:.6g} is not fully outside the obstacle")

    started = time.perf_counter()
    extended, fs = _integrate_from_slice(conn, s, slab_axis, start, t0, tolerances.step)
    agreement, agreement_index = extended.max_difference(s, where=off_mask)

    residuals: Dict[int, float] = {}
    evidence: List[Evidence] = []
    for axis in range(grid.dim):
        field_ = covariant_residual(conn, extended, axis)
        residuals[axis] = field_.maximum
        if policies[axis] == ResidualPolicy.ASSERT and field_.maximum > tolerances.residual:
            evidence.append(Evidence(
                kind="residual", location=tuple(grid.coordinate(field_.argmax)),
                magnitude=field_.maximum, detail=f"axis {axis + 1} residual exceeds tolerance"
            ))
    if agreement > tolerances.agreement:
        evidence.append(Evidence(
            kind="agreement", location=tuple(grid.coordinate(agreement_index)),
            magnitude=agreement, detail="extension disagrees with the input off the obstacle"
        ))

    verdict = Verdict.OBSTRUCTED if evidence else Verdict.EXTENDED
    structured.info("Slab extension complete", extra={
        "connection": conn.name,
        "grid": list(grid.shape),
        "slab_axis": slab_axis + 1,
        "a1": t0,
        "verdict": verdict.value,
        "agreement": agreement,
        "residuals": {str(a + 1): r for a, r in residuals.items()},
        "elapsed_s": round(time.perf_counter() - started, 3),
    })
    return ExtensionReport(
        extended=extended, residuals=residuals, policies=policies, agreement=agreement,
        verdict=verdict, tolerances=tolerances, evidence=evidence, a1=t0, slab_axis=slab_axis,
        fundamental=fs
    )


def extend_slab(
    conn: ConnectionForm,
    s: SampledSection,
    F: HalfSlab,
    a1: Optional[float] = None,
    tolerances: Tolerances = Tolerances(),
    policy: Optional[ResidualPolicy] = None,
    depth: int = 12
) -> ExtensionReport:
    """Extend a parallel section off a half-slab to the whole grid.

    The slab-axis residual is always asserted; the other axes follow
    ``policy`` (default from ``slab_policy``).

    Args:
        conn: Connection over the grid box
        s: Section defined (at least) on every node off F
        F: Half-slab obstacle
        a1: Start coordinate below F.b (default: midpoint of the interval start and F.b)
        tolerances: Agreement and residual tolerances and RK4 step
        policy: Override of the residual policy for non-slab axes
        depth: Construction depth for grid membership of F

    Raises:
        PreconditionError: If a1 >= b1, a1 is outside the box, or s is undefined off F
        InputIntegrityError: If s is not parallel off F on an asserted axis
    """
    grid = s.grid
    if conn.dim != grid.dim or max(F.slab_axis, F.thin_axis) >= grid.dim:
        raise PreconditionError("Connection, grid and obstacle dimensions do not match")

    off_mask = ~F.grid_mask(grid, depth)
    if not s.mask[off_mask].all():
        raise PreconditionError("The section must be defined at every node off the obstacle")

    tolerances = tolerances.for_grid(grid)
    side = policy or slab_policy(conn, F, depth)
    policies = {axis: ResidualPolicy.ASSERT if axis == F.slab_axis else side for axis in range(grid.dim)}
    asserted = [a for a, p in policies.items() if p == ResidualPolicy.ASSERT]
    _check_input(conn, s, asserted, tolerances.residual)

    return _extend_along(conn, s, off_mask, F.slab_axis, F.b, a1, policies, tolerances)


def extend_bidirectional(
    conn: ConnectionForm,
    s: SampledSection,
    F: BiSlab,
    a1: Optional[float] = None,
    a2: Optional[float] = None,
    tolerances: Tolerances = Tolerances(),
    depth: int = 12
) -> ExtensionReport:
    """Extend off a bi-slab in both axis orders and merge the two results.

    Each run asserts the residual of its own integration axis; agreement of
    the two runs on every node makes the merged section parallel in both.

    Raises:
        InconsistencyError: If the two extensions differ beyond the agreement tolerance
    """
    if not F.is_swapped_pair:
        raise PreconditionError("extend_bidirectional needs a bi-slab with swapped axes")
    grid = s.grid
    off_mask = ~F.grid_mask(grid, depth)
    if not s.mask[off_mask].all():
        raise PreconditionError("The section must be defined at every node off the obstacle")

    first_axis, second_axis = F.first.slab_axis, F.second.slab_axis
    tolerances = tolerances.for_grid(grid)
    _check_input(conn, s, (first_axis, second_axis), tolerances.residual)

    runs = []
    for half, start in ((F.first, a1), (F.second, a2)):
        policies = {
            axis: ResidualPolicy.ASSERT if axis == half.slab_axis else ResidualPolicy.REPORT
            for axis in range(grid.dim)
        }
        runs.append(_extend_along(conn, s, off_mask, half.slab_axis, half.b, start, policies, tolerances))
    one, two = runs

    discrepancy, index = one.extended.max_difference(two.extended)
    if discrepancy > tolerances.agreement:
        point = tuple(grid.coordinate(index))
        structured.error("Bidirectional extensions disagree", extra={
            "index": list(index), "point": list(point), "discrepancy": discrepancy
        })
        raise InconsistencyError(
            f"Extensions along axes {first_axis + 1} and {second_axis + 1} differ by "
            f"{discrepancy:.3e} at {point}",
            index=index, point=point, discrepancy=discrepancy
        )

    residuals = dict(one.residuals)
    residuals[second_axis] = two.residuals[second_axis]
    policies = {axis: ResidualPolicy.REPORT for axis in range(grid.dim)}
    policies[first_axis] = policies[second_axis] = ResidualPolicy.ASSERT
    evidence = one.evidence + two.evidence
    return ExtensionReport(
        extended=one.extended,
        residuals=residuals,
        policies=policies,
        agreement=max(one.agreement, two.agreement),
        verdict=Verdict.OBSTRUCTED if evidence else Verdict.EXTENDED,
        tolerances=tolerances,
        evidence=evidence,
        a1=one.a1,
        slab_axis=first_axis,
        notes={"discrepancy": discrepancy, "a2": two.a1},
        fundamental=one.fundamental,
    )


# ============================================================================
# Maximal extension scan
# ============================================================================

@dataclass(eq=False)
class MaximalRegion:
    """Grid region a section extends to.

    Attributes:
        mask: Nodes of the extension region (contains every off-obstacle node)
        section: Section values on ``mask``
        frontier: Obstacle nodes outside the region that touch it
        obstacle_mask: Grid nodes of the obstacle
        iterations: Scan iterations until the fixed point
    """
    mask: np.ndarray
    section: SampledSection
    frontier: List[Tuple[int, ...]]
    obstacle_mask: np.ndarray
    iterations: int

    @property
    def is_full(self) -> bool:
        return bool(self.mask.all())

    @property
    def extended_count(self) -> int:
        return int((self.mask & self.obstacle_mask).sum())


def _thin_axis(pending: np.ndarray) -> int:
    counts = [
        int(np.any(pending, axis=tuple(a for a in range(pending.ndim) if a != axis)).sum())
        for axis in range(pending.ndim)
    ]
    return int(np.argmin(counts))


def _transport_window(values: np.ndarray, props: np.ndarray, start: int) -> np.ndarray:
    """Fill a window (axis 0 = integration axis) from slice ``start`` with propagators."""
    out = np.empty_like(values)
    out[start] = values[start]
    for k in range(start + 1, values.shape[0]):
        out[k] = np.einsum("...ab,...b->...a", props[k - 1], out[k - 1])
    for k in range(start - 1, -1, -1):
        out[k] = np.linalg.solve(props[k], out[k + 1][..., None])[..., 0]
    return out


def _local_extension(
    p: Tuple[int, ...],
    U: np.ndarray,
    values: np.ndarray,
    props: List[np.ndarray],
    omegas: List[np.ndarray],
    spacing: np.ndarray,
    half: int,
    tolerances: Tolerances
) -> Optional[np.ndarray]:
    """Value at node p from a windowed slab extension, or None if none passes."""
    dim = U.ndim
    lows = [max(i - half, 0) for i in p]
    window = tuple(slice(lo, min(i + half + 1, n)) for lo, i, n in zip(lows, p, U.shape))
    local_p = tuple(i - lo for i, lo in zip(p, lows))
    Uw, Vw = U[window], values[window]

    thin = _thin_axis(~Uw)
    order = [a for a in range(dim) if a != thin] + [thin]
    for axis in order:
        others = tuple(a for a in range(dim) if a != axis)
        full = np.flatnonzero(Uw.all(axis=others))
        if full.size == 0:
            continue
        start = int(full[np.argmin(np.abs(full - local_p[axis]))])

        moved = np.moveaxis(Vw, axis, 0)
        window_props = np.moveaxis(props[axis][window], axis, 0)
        with np.errstate(all="ignore"):
            local = np.moveaxis(_transport_window(moved, window_props, start), 0, axis)
        if not np.isfinite(local).all():
            continue

        known = np.linalg.norm(local[Uw] - Vw[Uw], axis=-1)
        if known.size and known.max() > tolerances.agreement:
            continue

        consistent = True
        for other in others:
            idx = local_p[other]
            if idx == 0 or idx == local.shape[other] - 1:
                continue
            up = list(local_p)
            down = list(local_p)
            up[other] += 1
            down[other] -= 1
            derivative = (local[tuple(up)] - local[tuple(down)]) / (2 * spacing[other])
            residual = np.linalg.norm(derivative + omegas[other][p] @ local[local_p])
            if residual > tolerances.residual:
                consistent = False
                break
        if consistent:
            return local[local_p]
    return None


def maximal_extension_scan(
    conn: ConnectionForm,
    s: SampledSection,
    F: ObstacleSet,
    grid: Optional[Grid] = None,
    window: int = 5,
    tolerances: Tolerances = Tolerances(),
    depth: int = 12,
    max_iterations: Optional[int] = None
) -> MaximalRegion:
    """Grow the region a parallel section extends to, node by node.

    Each pending obstacle node tries a local slab extension on its window:
    integration axes other than the window's thin axis come first, the start
    slice is the nearest window slice already inside the region, and the
    local values must agree with known region values and pass the residual
    test in the other axes. Nodes accepted in one sweep are merged only if
    adjacent new nodes are transport-consistent. Sweeps repeat until no node
    is added; a node is retried only after its window changed.
    """
    grid = s.grid if grid is None else grid
    if grid != s.grid:
        raise PreconditionError("The section does not live on the scan grid")
    if window < 3 or window % 2 == 0:
        raise PreconditionError(f"window must be odd and at least 3, got {window}")
    tolerances = tolerances.for_grid(grid)

    obstacle = F.grid_mask(grid, depth)
    if not s.mask[~obstacle].all():
        raise PreconditionError("The section must be defined at every node off the obstacle")

    started = time.perf_counter()
    structured.info("Maximal extension scan started", extra={
        "connection": conn.name, "obstacle": F.describe(), "grid": list(grid.shape),
        "window": window, "obstacle_nodes": int(obstacle.sum())
    })

    U = ~obstacle
    values = np.where(U[..., None], np.nan_to_num(s.values), np.nan)
    props = [edge_propagators(conn, grid, axis, tolerances.step) for axis in range(grid.dim)]
    omegas = [conn.evaluate(axis, grid.points).reshape(grid.shape + (conn.rank, conn.rank))
              for axis in range(grid.dim)]
    half = window // 2
    reach = np.ones((window,) * grid.dim, dtype=bool)

    dirty = obstacle.copy()
    iterations = 0
    while dirty.any() and (max_iterations is None or iterations < max_iterations):
        iterations += 1
        accepted: Dict[Tuple[int, ...], np.ndarray] = {}
        for p in zip(*np.nonzero(dirty & ~U)):
            p = tuple(int(i) for i in p)
            value = _local_extension(p, U, values, props, omegas, grid.spacing, half, tolerances)
            if value is not None:
                accepted[p] = value

        rejected = set()
        for p, value in accepted.items():
            for axis in range(grid.dim):
                q = list(p)
                q[axis] += 1
                q = tuple(q)
                if q in accepted:
                    moved = props[axis][p] @ value
                    if np.linalg.norm(moved - accepted[q]) > tolerances.agreement:
                        rejected.update((p, q))

        new = np.zeros(grid.shape, dtype=bool)
        for p, value in accepted.items():
            if p not in rejected:
                new[p] = True
                values[p] = value
        U |= new
        dirty = ndimage.binary_dilation(new, structure=reach) & ~U
        logger.debug(f"Scan iteration {iterations}: {int(new.sum())} nodes added, {len(rejected)} rejected")

    pending = obstacle & ~U
    face = ndimage.generate_binary_structure(grid.dim, 1)
    frontier_mask = pending & ndimage.binary_dilation(U, structure=face)
    frontier = [tuple(int(i) for i in p) for p in zip(*np.nonzero(frontier_mask))]

    structured.info("Maximal extension scan complete", extra={
        "iterations": iterations,
        "extended": int((obstacle & U).sum()),
        "pending": int(pending.sum()),
        "frontier": len(frontier),
        "elapsed_s": round(time.perf_counter() - started, 3),
    })
    section = SampledSection(grid, values, U)
    return MaximalRegion(mask=U, section=section, frontier=frontier, obstacle_mask=obstacle, iterations=iterations)


# ============================================================================
# Obstruction detectors
# ============================================================================

@dataclass(frozen=True)
class JumpResult:
    """One-sided limits of a section across a hyperplane.

    Attributes:
        limit_below: Value at the smallest epsilon on the negative side
        limit_above: Value at the smallest epsilon on the positive side
        jump: ||limit_above - limit_below||
        threshold: Jump size above which a jump is declared
    """
    limit_below: np.ndarray
    limit_above: np.ndarray
    jump: float
    threshold: float

    @property
    def detected(self) -> bool:
        return self.jump > self.threshold


def _section_values(section: SectionFunction, points: np.ndarray) -> np.ndarray:
    values = np.asarray(section(points), dtype=float)
    return values.reshape(points.shape[0], -1)


def _check_decreasing(sequence: Sequence[float], name: str, minimum: int = 1) -> np.ndarray:
    seq = np.asarray(sequence, dtype=float)
    if seq.size < minimum:
        raise PreconditionError(f"The {name} sequence needs at least {minimum} entries")
    if np.any(seq <= 0) or np.any(np.diff(seq) >= 0):
        raise PreconditionError(f"The {name} sequence must be positive and strictly decreasing")
    return seq


def detect_jump(
    conn: ConnectionForm,
    section: SectionFunction,
    axis: int,
    base: Sequence[float],
    eps: Sequence[float],
    agreement_tolerance: float = 1e-6
) -> JumpResult:
    """Evaluate the section at base -/+ eps e_axis and compare the one-sided limits.

    The limits are the values at the last (smallest) epsilon.

    Raises:
        PreconditionError: If eps is not positive and strictly decreasing
    """
    eps = _check_decreasing(eps, "epsilon")
    base = np.asarray(base, dtype=float)
    if base.size != conn.dim:
        raise PreconditionError(f"Base point needs {conn.dim} coordinates")

    offsets = np.zeros((eps.size, conn.dim))
    offsets[:, axis] = eps
    below = _section_values(section, base - offsets)
    above = _section_values(section, base + offsets)
    jump = float(np.linalg.norm(above[-1] - below[-1]))
    result = JumpResult(
        limit_below=below[-1], limit_above=above[-1], jump=jump,
        threshold=JUMP_FACTOR * agreement_tolerance
    )
    structured.info("Jump detection complete", extra={
        "connection": conn.name, "axis": axis + 1, "base": base.tolist(), "jump": jump
    })
    return result


@dataclass(frozen=True)
class DifferentiabilityVerdict:
    """Behaviour of symmetric difference quotients at one point.

    Attributes:
        point: Evaluation point
        quotients: Norms of the quotients, one per step
        verdict: "divergent", "convergent" or "inconclusive"
        derivative: Last quotient for convergent points
    """
    point: Tuple[float, ...]
    quotients: Tuple[float, ...]
    verdict: str
    derivative: Optional[float] = None

    @property
    def ratios(self) -> Tuple[float, ...]:
        q = self.quotients
        return tuple(b / a if a > 0 else float("inf") for a, b in zip(q[:-1], q[1:]))


def classify_quotients(quotients: np.ndarray) -> str:
    """Divergent, convergent or inconclusive for a quotient-norm sequence."""
    q = np.asarray(quotients, dtype=float)
    if np.all(q < NEGLIGIBLE_QUOTIENT):
        return "convergent"
    if np.all(q[:-1] > 0) and np.all(q[1:] >= DIVERGENCE_FACTOR * (1 - DIVERGENCE_ALLOWANCE) * q[:-1]):
        return "divergent"
    scale = np.maximum(np.abs(q[:-1]), np.abs(q[1:]))
    if np.all(np.abs(np.diff(q)) <= CONVERGENCE_RELATIVE * scale):
        return "convergent"
    return "inconclusive"


def detect_nondifferentiability(
    section: SectionFunction,
    axis: int,
    points: Sequence[Sequence[float]],
    hs: Sequence[float]
) -> List[DifferentiabilityVerdict]:
    """Symmetric difference quotients along ``axis`` at each point for each h.

    Raises:
        PreconditionError: If hs is not positive, strictly decreasing and of length >= 3
    """
    hs = _check_decreasing(hs, "step", minimum=3)
    verdicts = []
    for point in np.atleast_2d(np.asarray(points, dtype=float)):
        offsets = np.zeros((hs.size, point.size))
        offsets[:, axis] = hs
        plus = _section_values(section, point + offsets)
        minus = _section_values(section, point - offsets)
        quotients = np.linalg.norm((plus - minus) / (2 * hs[:, None]), axis=1)
        verdict = classify_quotients(quotients)
        verdicts.append(DifferentiabilityVerdict(
            point=tuple(float(x) for x in point),
            quotients=tuple(float(q) for q in quotients),
            verdict=verdict,
            derivative=float(quotients[-1]) if verdict == "convergent" else None,
        ))
        logger.debug(f"Difference quotients at {tuple(point)}: {verdict}")
    return verdicts
