"""
Thin and negligible sets on boxes.

This module builds the sets the extension experiments are run against:
open boxes and their cell-centred grids, Cantor-like subsets of intervals
(ternary, fat, discrete), dyadic cube decompositions and the grid-level
connectedness test for obstacle complements.
"""

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Callable, List, Optional, Sequence, Tuple, Union, TYPE_CHECKING
import logging

import numpy as np
import pandas as pd
from scipy import ndimage

from transport_core.exceptions import DomainError, InfeasibleError, PreconditionError

if TYPE_CHECKING:
    from obstacles.base import ObstacleSet


logger = logging.getLogger(__name__)

# Deepest generation materialised as float interval arrays for grid sweeps.
MAX_VECTOR_DEPTH = 16

Interval = Tuple[float, float]
ExactInterval = Tuple[Fraction, Fraction]


# ============================================================================
# Boxes and grids
# ============================================================================

@dataclass(frozen=True)
class OpenBox:
    """An open n-dimensional interval (I_1 x ... x I_n).

    Attributes:
        intervals: One (lo, hi) pair per axis; endpoints are excluded
    """
    intervals: Tuple[Interval, ...]

    def __post_init__(self):
        """Validate box after initialization."""
        intervals = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        object.__setattr__(self, "intervals", intervals)

        if not intervals:
            raise ValueError("An OpenBox needs at least one axis")
        for axis, (lo, hi) in enumerate(intervals):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError(f"Axis {axis} has a non-finite endpoint: ({lo}, {hi})")
            if not lo < hi:
                raise ValueError(f"Axis {axis} needs lo < hi, got ({lo}, {hi})")

    @classmethod
    def cube(cls, n: int, lo: float, hi: float) -> 'OpenBox':
        """The box (lo, hi)^n."""
        return cls(tuple((lo, hi) for _ in range(n)))

    @property
    def dim(self) -> int:
        return len(self.intervals)

    @property
    def lows(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.intervals])

    @property
    def highs(self) -> np.ndarray:
        return np.array([hi for _, hi in self.intervals])

    @property
    def lengths(self) -> np.ndarray:
        return self.highs - self.lows

    @property
    def center(self) -> np.ndarray:
        return (self.lows + self.highs) / 2

    @property
    def volume(self) -> Fraction:
        """Exact volume (endpoints read as exact binary rationals)."""
        total = Fraction(1)
        for lo, hi in self.intervals:
            total *= Fraction(hi) - Fraction(lo)
        return total

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict (open) membership for an array of points of shape (..., n)."""
        points = np.asarray(points, dtype=float)
        return np.all((points > self.lows) & (points < self.highs), axis=-1)

    def contains_box(self, other: 'OpenBox') -> bool:
        """Whether ``other`` is a sub-box of this box."""
        if other.dim != self.dim:
            return False
        return bool(np.all(other.lows >= self.lows) and np.all(other.highs <= self.highs))

    def __str__(self) -> str:
        return " x ".join(f"({lo:g}, {hi:g})" for lo, hi in self.intervals)


@dataclass(frozen=True)
class Grid:
    """Cell-centred grid over an open box.

    Node j on axis i sits at lo_i + (j + 1/2) * h_i with h_i = (hi_i - lo_i) / N_i,
    so every node lies strictly inside the box.

    Attributes:
        box: Box the grid discretises
        resolution: Number of cells per axis
    """
    box: OpenBox
    resolution: Tuple[int, ...]

    def __post_init__(self):
        """Validate grid after initialization."""
        resolution = tuple(int(r) for r in self.resolution)
        object.__setattr__(self, "resolution", resolution)

        if len(resolution) != self.box.dim:
            raise ValueError(
                f"Grid needs one resolution per axis ({self.box.dim}), got {len(resolution)}"
            )
        if any(r < 1 for r in resolution):
            raise ValueError(f"Resolutions must be positive, got {resolution}")

    @classmethod
    def uniform(cls, box: OpenBox, resolution: int) -> 'Grid':
        """Grid with the same resolution along every axis."""
        return cls(box, tuple(resolution for _ in range(box.dim)))

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.resolution

    @property
    def node_count(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def spacing(self) -> np.ndarray:
        return self.box.lengths / np.array(self.resolution)

    @property
    def axes(self) -> List[np.ndarray]:
        """Node coordinates along each axis."""
        return [
            lo + (np.arange(r) + 0.5) * h
            for (lo, _), r, h in zip(self.box.intervals, self.resolution, self.spacing)
        ]

    @property
    def nodes(self) -> np.ndarray:
        """Node coordinates with shape (*resolution, n)."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def points(self) -> np.ndarray:
        """Node coordinates flattened to shape (node_count, n), C order."""
        return self.nodes.reshape(-1, self.dim)

    def coordinate(self, index: Sequence[int]) -> np.ndarray:
        """Coordinates of the node with the given multi-index."""
        return np.array([ax[i] for ax, i in zip(self.axes, index)])

    def nearest_index(self, axis: int, value: float) -> int:
        """Index of the node coordinate closest to ``value`` along ``axis``."""
        return int(np.argmin(np.abs(self.axes[axis] - value)))

    def cell_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of every closed cell, each (*resolution, n)."""
        nodes = self.nodes
        half = self.spacing / 2
        return nodes - half, nodes + half


# ============================================================================
# Cantor-like sets
# ============================================================================

class CantorVariant(Enum):
    """Supported Cantor-like set constructions."""
    TERNARY = "ternary"
    FAT = "fat"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class CantorLikeSet:
    """A closed, nowhere dense subset of an interval, built generation by generation.

    The stage-k cover is a finite union of disjoint closed intervals, nested
    decreasing in k. The fat variant removes, at stage k, the open middle
    interval of length ``removal_ratio * length * 4**-k`` from each of the
    2**(k-1) stage intervals, so its residual measure is
    ``length * (1 - removal_ratio / 2)``.

    Attributes:
        variant: Construction kind
        ambient: Closed interval (lo, hi) housing the set
        depth: Construction depth used when no depth is passed explicitly
        removal_ratio: Fat variant only; exact rational in (0, 1]
        points: Discrete variant only; the finitely many points
    """
    variant: CantorVariant
    ambient: Interval
    depth: int = 12
    removal_ratio: Fraction = Fraction(1)
    points: Tuple[float, ...] = ()

    def __post_init__(self):
        """Validate set after initialization."""
        lo, hi = float(self.ambient[0]), float(self.ambient[1])
        object.__setattr__(self, "ambient", (lo, hi))
        object.__setattr__(self, "removal_ratio", Fraction(self.removal_ratio))
        object.__setattr__(self, "points", tuple(sorted(float(p) for p in self.points)))

        if not lo < hi:
            raise ValueError(f"Ambient interval needs lo < hi, got ({lo}, {hi})")
        if self.depth < 1:
            raise ValueError(f"depth must be at least 1, got {self.depth}")
        if self.variant == CantorVariant.FAT and not 0 < self.removal_ratio <= 1:
            raise ValueError(f"removal_ratio must lie in (0, 1], got {self.removal_ratio}")
        if self.variant == CantorVariant.DISCRETE:
            outside = [p for p in self.points if not lo <= p <= hi]
            if outside:
                raise ValueError(f"Discrete points {outside} lie outside ({lo}, {hi})")

    # ----- constructors ----------------------------------------------------

    @classmethod
    def ternary(cls, lo: float = 0.0, hi: float = 1.0, depth: int = 12) -> 'CantorLikeSet':
        return cls(CantorVariant.TERNARY, (lo, hi), depth=depth)

    @classmethod
    def discrete(cls, points: Sequence[float], lo: float, hi: float) -> 'CantorLikeSet':
        return cls(CantorVariant.DISCRETE, (lo, hi), depth=1, points=tuple(points))

    # ----- exact bookkeeping ----------------------------------------------

    @property
    def exact_ambient(self) -> ExactInterval:
        return Fraction(self.ambient[0]), Fraction(self.ambient[1])

    @property
    def length(self) -> Fraction:
        lo, hi = self.exact_ambient
        return hi - lo

    def removal_length(self, stage: int) -> Fraction:
        """Length of each open interval removed at ``stage`` (fat variant)."""
        return self.removal_ratio * self.length / Fraction(4) ** stage

    def residual_measure(self) -> Fraction:
        """Exact Lebesgue measure of the limit set."""
        if self.variant == CantorVariant.FAT:
            return self.length * (1 - self.removal_ratio / 2)
        return Fraction(0)

    def stage_intervals(self, depth: int) -> List[ExactInterval]:
        """Exact stage-``depth`` cover as a sorted list of closed intervals."""
        if depth < 0:
            raise PreconditionError(f"depth must be non-negative, got {depth}")
        if self.variant == CantorVariant.DISCRETE:
            return [(Fraction(p), Fraction(p)) for p in self.points]

        intervals = [self.exact_ambient]
        for stage in range(1, depth + 1):
            refined = []
            for a, b in intervals:
                if self.variant == CantorVariant.TERNARY:
                    third = (b - a) / 3
                    refined.extend([(a, a + third), (b - third, b)])
                else:
                    mid, gap = (a + b) / 2, self.removal_length(stage)
                    refined.extend([(a, mid - gap / 2), (mid + gap / 2, b)])
            intervals = refined
        return intervals

    def stage_measure(self, depth: int) -> Fraction:
        """Exact measure of the stage-``depth`` cover."""
        return sum((b - a for a, b in self.stage_intervals(depth)), Fraction(0))

    def refines_everywhere(self, depth: int) -> bool:
        """Whether every stage-``depth`` interval loses an interior subinterval at the next stage."""
        if self.variant == CantorVariant.DISCRETE:
            return True
        current = self.stage_intervals(depth)
        following = self.stage_intervals(depth + 1)
        if len(following) != 2 * len(current):
            return False
        for (a, b), (left, right) in zip(current, zip(following[0::2], following[1::2])):
            if not (left[0] == a and right[1] == b and a < left[1] < right[0] < b):
                return False
        return True

    # ----- membership -----------------------------------------------------

    def contains(self, x: float, depth: Optional[int] = None) -> bool:
        """Exact stage-``depth`` membership of a single point (see ``cantor_contains``)."""
        return cantor_contains(self, x, self.depth if depth is None else depth)

    def meets_intervals(
        self,
        lo: np.ndarray,
        hi: np.ndarray,
        depth: Optional[int] = None
    ) -> np.ndarray:
        """Vectorised test whether closed intervals [lo, hi] meet the stage cover.

        Depths beyond MAX_VECTOR_DEPTH are clamped; the shallower cover
        contains the deeper one, so the answer stays conservative.
        """
        depth = self.depth if depth is None else depth
        starts, ends = _cover_arrays(self, min(depth, MAX_VECTOR_DEPTH))
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if starts.size == 0:
            return np.zeros(np.broadcast(lo, hi).shape, dtype=bool)
        idx = np.searchsorted(starts, hi, side="right") - 1
        safe = np.clip(idx, 0, starts.size - 1)
        return (idx >= 0) & (ends[safe] >= lo)

    def contains_array(self, xs: np.ndarray, depth: Optional[int] = None) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return self.meets_intervals(xs, xs, depth)


@lru_cache(maxsize=64)
def _cover_arrays(cset: CantorLikeSet, depth: int) -> Tuple[np.ndarray, np.ndarray]:
    """Float start/end arrays of the stage-``depth`` cover, sorted."""
    if cset.variant == CantorVariant.DISCRETE:
        pts = np.array(cset.points, dtype=float)
        return pts, pts

    lo, hi = cset.ambient
    starts, ends = np.array([lo]), np.array([hi])
    length = hi - lo
    for stage in range(1, depth + 1):
        width = ends - starts
        if cset.variant == CantorVariant.TERNARY:
            left_end = starts + width / 3
            right_start = ends - width / 3
        else:
            gap = float(cset.removal_ratio) * length / 4.0 ** stage
            mid = (starts + ends) / 2
            left_end, right_start = mid - gap / 2, mid + gap / 2
        starts = np.column_stack([starts, right_start]).ravel()
        ends = np.column_stack([left_end, ends]).ravel()
    return starts, ends


def cantor_contains(C: CantorLikeSet, x: float, depth: int) -> bool:
    """Whether ``x`` lies in the stage-``depth`` cover of ``C``.

    Decided in exact rational arithmetic, so deep stages (depth 40 and more)
    are reliable for any float input.

    Raises:
        DomainError: If x lies outside the ambient interval
        PreconditionError: If depth < 1
    """
    if depth < 1:
        raise PreconditionError(f"depth must be at least 1, got {depth}")
    lo, hi = C.exact_ambient
    value = Fraction(x)
    if not lo <= value <= hi:
        raise DomainError(f"x={x} lies outside the ambient interval {C.ambient}")

    if C.variant == CantorVariant.DISCRETE:
        return any(value == Fraction(p) for p in C.points)

    if C.variant == CantorVariant.TERNARY:
        y = (value - lo) / (hi - lo)
        for _ in range(depth):
            y *= 3
            if 1 < y < 2:
                return False
            if y >= 2:
                y -= 2
        return True

    a, b = lo, hi
    for stage in range(1, depth + 1):
        mid, gap = (a + b) / 2, C.removal_length(stage)
        if mid - gap / 2 < value < mid + gap / 2:
            return False
        if value <= mid - gap / 2:
            b = mid - gap / 2
        else:
            a = mid + gap / 2
    return True


def cantor_function(x: float, depth: int = 40) -> float:
    """Stage-``depth`` approximation of the Cantor function, clamped outside [0, 1].

    Exact on every middle-third gap removed at a stage <= depth and
    nondecreasing in x.
    """
    if depth < 1:
        raise PreconditionError(f"depth must be at least 1, got {depth}")
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0

    y = Fraction(x)
    value, weight = Fraction(0), Fraction(1, 2)
    for _ in range(depth):
        y *= 3
        if 1 <= y <= 2:
            return float(value + weight)
        if y > 2:
            value += weight
            y -= 2
        weight /= 2
    return float(value)


def cantor_function_array(xs: np.ndarray, depth: int = 40) -> np.ndarray:
    """Vectorised float version of ``cantor_function``."""
    xs = np.asarray(xs, dtype=float)
    y = np.clip(xs, 0.0, 1.0)
    value = np.zeros_like(y)
    weight = 0.5
    active = (xs > 0) & (xs < 1)
    for _ in range(depth):
        if not active.any():
            break
        y = np.where(active, 3 * y, y)
        middle = active & (y >= 1) & (y <= 2)
        value = np.where(middle, value + weight, value)
        active = active & ~middle
        upper = active & (y > 2)
        value = np.where(upper, value + weight, value)
        y = np.where(upper, y - 2, y)
        weight /= 2
    return np.where(xs >= 1, 1.0, np.where(xs <= 0, 0.0, value))


def fat_cantor_build(
    ambient: Interval,
    target_measure: float,
    depth: int = 12
) -> CantorLikeSet:
    """Fat Cantor set in ``ambient`` whose exact measure exceeds ``target_measure``.

    Uses the middle-interval schedule with ratio 2**-m, m the smallest
    non-negative integer for which the residual beats the target.

    Raises:
        InfeasibleError: If target_measure >= length(ambient)
        PreconditionError: If target_measure < 0
    """
    lo, hi = Fraction(ambient[0]), Fraction(ambient[1])
    length, target = hi - lo, Fraction(target_measure)
    if target < 0:
        raise PreconditionError(f"target_measure must be non-negative, got {target_measure}")
    if target >= length:
        raise InfeasibleError(
            f"target_measure {target_measure} is not below the ambient length {float(length)}"
        )

    ratio = Fraction(1)
    while length * (1 - ratio / 2) <= target:
        ratio /= 2

    fat = CantorLikeSet(CantorVariant.FAT, (ambient[0], ambient[1]), depth=depth, removal_ratio=ratio)
    logger.debug(
        f"Fat Cantor set on {ambient}: ratio={ratio}, residual={fat.residual_measure()}"
    )
    return fat


# ============================================================================
# Dyadic cube decompositions
# ============================================================================

@dataclass(frozen=True, order=True)
class DyadicCube:
    """The closed cube prod_i [m_i 2^-k, (m_i + 1) 2^-k]."""
    level: int
    corner: Tuple[int, ...]

    @property
    def side(self) -> Fraction:
        return Fraction(1, 2 ** self.level)

    @property
    def volume(self) -> Fraction:
        return self.side ** len(self.corner)

    @property
    def lows(self) -> np.ndarray:
        return np.array([m for m in self.corner], dtype=float) / 2.0 ** self.level

    @property
    def highs(self) -> np.ndarray:
        return np.array([m + 1 for m in self.corner], dtype=float) / 2.0 ** self.level

    def as_box(self) -> OpenBox:
        """Interior of the cube."""
        return OpenBox(tuple(zip(self.lows, self.highs)))

    def sample_points(self) -> np.ndarray:
        """Corners and centre."""
        lows, highs = self.lows, self.highs
        corners = [np.where(bits, highs, lows) for bits in product((0, 1), repeat=len(self.corner))]
        return np.vstack(corners + [(lows + highs) / 2])

    def children(self) -> List['DyadicCube']:
        return [
            DyadicCube(self.level + 1, tuple(2 * m + b for m, b in zip(self.corner, bits)))
            for bits in product((0, 1), repeat=len(self.corner))
        ]


@dataclass(frozen=True)
class CubeDecomposition:
    """Maximal dyadic cubes inside a domain, pairwise interior-disjoint.

    Attributes:
        cubes: The cubes, sorted by level then corner
        domain: Human-readable description of the domain
        max_level: Finest level considered
    """
    cubes: Tuple[DyadicCube, ...]
    domain: str = ""
    max_level: int = 0

    def union_measure(self) -> Fraction:
        return sum((c.volume for c in self.cubes), Fraction(0))

    def is_interior_disjoint(self) -> bool:
        """Pairwise interior disjointness in integer arithmetic."""
        for i, first in enumerate(self.cubes):
            for second in self.cubes[i + 1:]:
                coarse, fine = sorted((first, second), key=lambda c: c.level)
                scale = 2 ** (fine.level - coarse.level)
                overlaps = all(
                    m_f < (m_c + 1) * scale and m_c * scale < m_f + 1
                    for m_c, m_f in zip(coarse.corner, fine.corner)
                )
                if overlaps:
                    return False
        return True

    def to_dataframe(self) -> pd.DataFrame:
        """One row per cube: level, then the corner index per axis."""
        dim = len(self.cubes[0].corner) if self.cubes else 0
        columns = ["level"] + [f"corner_{axis + 1}" for axis in range(dim)]
        rows = [[c.level, *c.corner] for c in self.cubes]
        return pd.DataFrame(rows, columns=columns)


Indicator = Callable[[np.ndarray], np.ndarray]


def dyadic_decompose(
    domain: Union[OpenBox, Indicator],
    max_level: int,
    bounds: Optional[OpenBox] = None
) -> CubeDecomposition:
    """Maximal closed dyadic cubes (levels 0..max_level) contained in ``domain``.

    Args:
        domain: An open box (containment decided exactly) or an indicator
            evaluated at cube corners and centres
        max_level: Finest level
        bounds: Bounding box; required for indicator domains

    Returns:
        CubeDecomposition sorted by level then corner
    """
    if max_level < 0:
        raise PreconditionError(f"max_level must be non-negative, got {max_level}")

    if isinstance(domain, OpenBox):
        bounds = domain
        inside = domain.contains
        description = f"box {domain}"
    else:
        if bounds is None:
            raise PreconditionError("Indicator domains need a bounding box")
        inside = domain
        description = f"indicator within {bounds}"

    lows, highs = bounds.lows, bounds.highs
    ranges = [range(int(np.floor(lo)), int(np.ceil(hi))) for lo, hi in zip(lows, highs)]
    frontier = [DyadicCube(0, corner) for corner in product(*ranges)]

    accepted: List[DyadicCube] = []
    for level in range(max_level + 1):
        refine: List[DyadicCube] = []
        for cube in frontier:
            # only cubes overlapping the bounding box can meet the domain
            if np.any(cube.highs <= lows) or np.any(cube.lows >= highs):
                continue
            if np.all(inside(cube.sample_points())):
                accepted.append(cube)
            elif level < max_level:
                refine.extend(cube.children())
        frontier = refine

    cubes = tuple(sorted(accepted))
    logger.debug(f"Dyadic decomposition of {description}: {len(cubes)} cubes up to level {max_level}")
    return CubeDecomposition(cubes=cubes, domain=description, max_level=max_level)


# ============================================================================
# Complement connectedness
# ============================================================================

def complement_components(
    box: OpenBox,
    F: 'ObstacleSet',
    grid: Grid,
    depth: int
) -> Tuple[int, np.ndarray]:
    """Face-adjacent flood fill of the grid nodes not in ``F``.

    Returns:
        (component count, integer labels per node; 0 marks F-nodes)
    """
    if grid.box != box:
        raise PreconditionError(f"Grid is laid over {grid.box}, not over {box}")

    free = ~F.grid_mask(grid, depth)
    structure = ndimage.generate_binary_structure(grid.dim, 1)
    labels, count = ndimage.label(free, structure=structure)
    logger.debug(f"Complement of {F} on {grid.shape} grid has {count} components")
    return int(count), labels
