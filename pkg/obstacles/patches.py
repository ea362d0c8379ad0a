"""
Non-slab obstacles: hyperplane patches with or without boundary, closed
boxes, products and unions of thin sets, and explicit grid masks.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from obstacles.base import ObstacleSet
from obstacles.slabs import format_cantor, format_number_plain
from transport_core.sets import CantorLikeSet, Grid


# (axis, lower, upper); either bound may be infinite
SideConstraint = Tuple[int, float, float]


@dataclass(frozen=True)
class HyperplanePatch(ObstacleSet):
    """Piece of the hyperplane {x[axis] = level} cut out by side constraints.

    With no constraints this is the full hyperplane; each finite bound
    contributes a boundary face to the patch.

    Attributes:
        axis: Normal axis (0-based)
        level: Position of the hyperplane along the normal axis
        constraints: (axis, lower, upper) bounds on the other coordinates
    """
    axis: int
    level: float
    constraints: Tuple[SideConstraint, ...] = ()

    kind = "hyperplane"

    def __post_init__(self):
        """Validate constraints after initialization."""
        cleaned = tuple((int(a), float(lo), float(hi)) for a, lo, hi in self.constraints)
        object.__setattr__(self, "constraints", cleaned)
        for a, lo, hi in cleaned:
            if a == self.axis:
                raise ValueError("Side constraints must act on axes other than the normal axis")
            if not lo <= hi:
                raise ValueError(f"Constraint on axis {a} needs lower <= upper, got ({lo}, {hi})")

    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray, depth: int) -> np.ndarray:
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        hit = (lo[..., self.axis] <= self.level) & (hi[..., self.axis] >= self.level)
        for a, c_lo, c_hi in self.constraints:
            hit &= (hi[..., a] >= c_lo) & (lo[..., a] <= c_hi)
        return hit

    @property
    def has_boundary(self) -> bool:
        return any(np.isfinite(lo) or np.isfinite(hi) for _, lo, hi in self.constraints)

    def describe(self) -> str:
        parts = [f"axis={self.axis + 1}", f"level={format_number_plain(self.level)}"]
        for a, lo, hi in self.constraints:
            if np.isfinite(lo):
                parts.append(f"min{a + 1}={format_number_plain(lo)}")
            if np.isfinite(hi):
                parts.append(f"max{a + 1}={format_number_plain(hi)}")
        return "hyperplane:" + ",".join(parts)


@dataclass(frozen=True)
class ClosedBox(ObstacleSet):
    """Closed axis-aligned box prod_i [lo_i, hi_i]."""
    intervals: Tuple[Tuple[float, float], ...]

    kind = "box"

    def __post_init__(self):
        """Validate box after initialization."""
        cleaned = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        object.__setattr__(self, "intervals", cleaned)
        if any(not lo <= hi for lo, hi in cleaned):
            raise ValueError(f"ClosedBox needs lo <= hi on every axis, got {cleaned}")

    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray, depth: int) -> np.ndarray:
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        lows = np.array([a for a, _ in self.intervals])
        highs = np.array([b for _, b in self.intervals])
        return np.all((hi >= lows) & (lo <= highs), axis=-1)

    def exact_measure(self) -> Fraction:
        total = Fraction(1)
        for lo, hi in self.intervals:
            total *= Fraction(hi) - Fraction(lo)
        return total

    def describe(self) -> str:
        return "box:" + ",".join(
            f"{format_number_plain(lo)}|{format_number_plain(hi)}" for lo, hi in self.intervals
        )


@dataclass(frozen=True)
class ProductObstacle(ObstacleSet):
    """Product C_1 x ... x C_n of thin sets, one per axis."""
    factors: Tuple[CantorLikeSet, ...]

    kind = "product"

    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray, depth: int) -> np.ndarray:
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        hit = np.ones(lo.shape[:-1], dtype=bool)
        for axis, C in enumerate(self.factors):
            hit &= C.meets_intervals(lo[..., axis], hi[..., axis], depth)
        return hit

    def exact_measure(self) -> Fraction:
        total = Fraction(1)
        for C in self.factors:
            total *= C.residual_measure()
        return total

    def describe(self) -> str:
        return "product:" + ",".join(
            f"C{axis + 1}={format_cantor(C)}" for axis, C in enumerate(self.factors)
        )


@dataclass(frozen=True)
class UnionObstacle(ObstacleSet):
    """Finite union of obstacles.

    ``exact_measure`` adds member measures, which is exact when members
    have pairwise null intersections (as for sets housed in the interiors
    of distinct cubes of a decomposition).
    """
    members: Tuple[ObstacleSet, ...]

    kind = "union"

    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray, depth: int) -> np.ndarray:
        hit = np.zeros(np.asarray(lo).shape[:-1], dtype=bool)
        for member in self.members:
            hit |= member.meets_boxes(lo, hi, depth)
        return hit

    def exact_measure(self) -> Fraction:
        return sum((m.exact_measure() for m in self.members), Fraction(0))

    def describe(self) -> str:
        return " + ".join(m.describe() for m in self.members) if self.members else "empty"


class GridMask(ObstacleSet):
    """Finite set of marked node points of a grid.

    A query box meets the mask when it contains a marked node; counting
    uses a summed-area table so each query costs 2**n lookups.
    """

    kind = "mask"

    def __init__(self, grid: Grid, mask: np.ndarray, source: Optional[str] = None):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != grid.shape:
            raise ValueError(f"Mask shape {mask.shape} does not match grid {grid.shape}")
        self.grid = grid
        self.mask = mask
        self.source = source
        table = mask.astype(np.int64)
        for axis in range(grid.dim):
            table = np.cumsum(table, axis=axis)
        self._table = np.pad(table, [(1, 0)] * grid.dim)

    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray, depth: int) -> np.ndarray:
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        origin, spacing = self.grid.box.lows, self.grid.spacing
        shape = np.array(self.grid.shape)
        first = np.ceil((lo - origin) / spacing - 0.5).astype(np.int64)
        last = np.floor((hi - origin) / spacing - 0.5).astype(np.int64)
        first = np.clip(first, 0, shape)
        last = np.clip(last, -1, shape - 1)
        empty = np.any(last < first, axis=-1)

        # inclusion-exclusion over the 2**n corners of the summed-area table
        count = np.zeros(lo.shape[:-1], dtype=np.int64)
        dim = self.grid.dim
        for corner in range(2 ** dim):
            index, sign = [], 1
            for axis in range(dim):
                if corner >> axis & 1:
                    index.append(first[..., axis])
                    sign = -sign
                else:
                    index.append(last[..., axis] + 1)
            count += sign * self._table[tuple(np.clip(i, 0, s) for i, s in zip(index, shape))]
        return ~empty & (count > 0)

    def describe(self) -> str:
        return f"mask:{self.source}" if self.source else f"mask:<{int(self.mask.sum())} nodes>"
