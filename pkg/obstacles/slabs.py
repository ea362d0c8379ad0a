"""
Slab-shaped obstacles: F inside {x_slab >= b, x_thin in C} and the
intersection of two such half-slabs with the roles of the axes swapped.
"""

from dataclasses import dataclass

import numpy as np

from obstacles.base import ObstacleSet
from transport_core.sets import CantorLikeSet, CantorVariant


def format_number_plain(value: float) -> str:
    return f"{value:.17g}"


def format_cantor(C: CantorLikeSet) -> str:
    """Render a Cantor-like set in descriptor grammar."""
    lo, hi = (format_number_plain(v) for v in C.ambient)
    if C.variant == CantorVariant.DISCRETE:
        return "point:" + "|".join(format_number_plain(p) for p in C.points)
    if C.variant == CantorVariant.TERNARY:
        return f"ternary:{lo}|{hi}"
    return f"fat:{lo}|{hi}|ratio={C.removal_ratio}"


@dataclass(frozen=True)
class HalfSlab(ObstacleSet):
    """Closed set {x : x[slab_axis] >= b, x[thin_axis] in C}.

    Attributes:
        b: Lower bound along the slab axis
        slab_axis: Axis along which sections are integrated (0-based)
        thin_axis: Axis along which F is thin (0-based)
        C: Thin set along the thin axis
    """
    b: float
    slab_axis: int
    thin_axis: int
    C: CantorLikeSet

    kind = "halfslab"

    def __post_init__(self):
        """Validate geometry after initialization."""
        if self.slab_axis == self.thin_axis:
            raise ValueError(f"Slab and thin axes must differ, both are {self.slab_axis}")
        if min(self.slab_axis, self.thin_axis) < 0:
            raise ValueError("Axes are 0-based and non-negative")

    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray, depth: int) -> np.ndarray:
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        reaches = hi[..., self.slab_axis] >= self.b
        thin = self.C.meets_intervals(lo[..., self.thin_axis], hi[..., self.thin_axis], depth)
        return reaches & thin

    @property
    def is_discrete(self) -> bool:
        return self.C.variant == CantorVariant.DISCRETE

    def describe(self) -> str:
        return (
            f"halfslab:b1={format_number_plain(self.b)},slab={self.slab_axis + 1},"
            f"thin={self.thin_axis + 1},C={format_cantor(self.C)}"
        )


@dataclass(frozen=True)
class BiSlab(ObstacleSet):
    """Intersection of two half-slabs.

    The usual use has ``second`` equal to ``first`` with slab and thin axes
    swapped, which houses products C_1 x C_2 of thin sets.

    Box tests answer "meets both", a superset of "meets the intersection",
    which keeps grid membership conservative.
    """
    first: HalfSlab
    second: HalfSlab

    kind = "bislab"

    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray, depth: int) -> np.ndarray:
        return self.first.meets_boxes(lo, hi, depth) & self.second.meets_boxes(lo, hi, depth)

    def describe(self) -> str:
        return (
            f"bislab:b1={format_number_plain(self.first.b)},"
            f"b2={format_number_plain(self.second.b)},"
            f"slab={self.first.slab_axis + 1},thin={self.first.thin_axis + 1},"
            f"C1={format_cantor(self.second.C)},C2={format_cantor(self.first.C)}"
        )

    @property
    def is_swapped_pair(self) -> bool:
        return (
            self.first.slab_axis == self.second.thin_axis
            and self.first.thin_axis == self.second.slab_axis
        )
