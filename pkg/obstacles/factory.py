"""
Obstacle Descriptor Factory for BundleLab.

Descriptors are compact strings used on the command line and in run-config
files, for example::

    halfslab:b1=0.5,thin=2,C=point:0.5
    bislab:b1=0.25,b2=0.25,C1=fat:0.3|0.7|0.2,C2=fat:0.3|0.7|0.2
    hyperplane:axis=2,level=0.5,min1=0.25
    box:-1|1,-1|0
    product:C1=ternary:0|1,C2=fat:0|1|0.5
    halfslab:b1=0,C=ternary:0|1 + box:0.2|0.4,0.2|0.4

Axes are 1-based in descriptors and 0-based in code. Thin sets use
``point:a|b|...``, ``ternary[:lo|hi]`` and ``fat:lo|hi|target`` (or
``fat:lo|hi|ratio=p/q`` for an explicit removal ratio).
"""

import logging
import re
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from obstacles.base import EmptyObstacle, ObstacleSet
from obstacles.patches import ClosedBox, GridMask, HyperplanePatch, ProductObstacle, UnionObstacle
from obstacles.slabs import BiSlab, HalfSlab
from transport_core.exceptions import DescriptorParseError
from transport_core.sets import CantorLikeSet, CantorVariant, Grid, OpenBox, fat_cantor_build


logger = logging.getLogger(__name__)

_KINDS = ("empty", "halfslab", "bislab", "hyperplane", "box", "product", "mask")
_UNION_SPLIT = re.compile(r"\s*\+\s*(?=(?:%s)\b)" % "|".join(_KINDS))


def parse_cantor(text: str, default_ambient: Tuple[float, float] = (0.0, 1.0), depth: int = 12) -> CantorLikeSet:
    """Parse a thin-set descriptor.

    Raises:
        DescriptorParseError: If the text is not a valid thin-set descriptor
    """
    kind, _, body = text.strip().partition(":")
    values = [v for v in body.split("|") if v] if body else []
    try:
        if kind == "point":
            points = [float(v) for v in values]
            if not points:
                raise DescriptorParseError("point: needs at least one point")
            lo = min(default_ambient[0], *points)
            hi = max(default_ambient[1], *points)
            return CantorLikeSet.discrete(points, lo, hi)
        if kind == "ternary":
            lo, hi = (float(v) for v in values) if values else default_ambient
            return CantorLikeSet.ternary(lo, hi, depth=depth)
        if kind == "fat":
            if len(values) != 3:
                raise DescriptorParseError(f"fat: needs lo|hi|target, got '{body}'")
            lo, hi = float(values[0]), float(values[1])
            if values[2].startswith("ratio="):
                ratio = Fraction(values[2][len("ratio="):])
                return CantorLikeSet(CantorVariant.FAT, (lo, hi), depth=depth, removal_ratio=ratio)
            return fat_cantor_build((lo, hi), float(values[2]), depth=depth)
    except (ValueError, ZeroDivisionError) as e:
        raise DescriptorParseError(f"Invalid thin-set descriptor '{text}': {e}") from e
    raise DescriptorParseError(
        f"Unknown thin-set kind '{kind}'. Supported kinds: point, ternary, fat"
    )


def _split_params(body: str) -> Dict[str, str]:
    params = {}
    for item in filter(None, (p.strip() for p in body.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise DescriptorParseError(f"Expected key=value, got '{item}'")
        params[key.strip()] = value.strip()
    return params


class ObstacleFactory:
    """Factory turning descriptor strings into obstacle instances.

    Example:
        ```python
        factory = ObstacleFactory(depth=12)
        F = factory.create("halfslab:b1=0.5,thin=2,C=ternary:0|1", box)
        ```
    """

    def __init__(self, depth: int = 12):
        """Initialize the factory.

        Args:
            depth: Construction depth given to thin sets built from descriptors
        """
        self.depth = depth
        self._builders: Dict[str, Callable[[str, Optional[OpenBox]], ObstacleSet]] = {
            "empty": lambda body, box: EmptyObstacle(),
            "halfslab": self._halfslab,
            "bislab": self._bislab,
            "hyperplane": self._hyperplane,
            "box": self._box,
            "product": self._product,
            "mask": self._mask,
        }

    def create(self, descriptor: str, box: Optional[OpenBox] = None) -> ObstacleSet:
        """Create an obstacle from its descriptor.

        Args:
            descriptor: Descriptor string (members of a union joined by '+')
            box: Ambient box; supplies default thin-set ambients and mask grids

        Returns:
            Obstacle instance

        Raises:
            DescriptorParseError: If the descriptor is malformed or of unknown kind
        """
        parts = _UNION_SPLIT.split(descriptor.strip())
        if len(parts) > 1:
            return UnionObstacle(tuple(self.create(part, box) for part in parts))

        kind, _, body = descriptor.strip().partition(":")
        builder = self._builders.get(kind)
        if builder is None:
            raise DescriptorParseError(
                f"Unknown obstacle kind: {kind}. "
                f"Supported kinds: {', '.join(self._builders)}"
            )
        try:
            obstacle = builder(body, box)
        except DescriptorParseError:
            raise
        except (KeyError, ValueError, IndexError) as e:
            raise DescriptorParseError(f"Invalid {kind} descriptor '{descriptor}': {e}") from e

        logger.debug(f"Built obstacle {obstacle!r}")
        return obstacle

    def _ambient(self, box: Optional[OpenBox], axis: int) -> Tuple[float, float]:
        if box is None or axis >= box.dim:
            return (0.0, 1.0)
        return box.intervals[axis]

    def _halfslab(self, body: str, box: Optional[OpenBox]) -> HalfSlab:
        params = _split_params(body)
        slab = int(params.get("slab", 1)) - 1
        thin = int(params.get("thin", 2)) - 1
        C = parse_cantor(params["C"], self._ambient(box, thin), self.depth)
        return HalfSlab(float(params["b1"]), slab, thin, C)

    def _bislab(self, body: str, box: Optional[OpenBox]) -> BiSlab:
        params = _split_params(body)
        slab = int(params.get("slab", 1)) - 1
        thin = int(params.get("thin", 2)) - 1
        C_slab = parse_cantor(params["C1"], self._ambient(box, slab), self.depth)
        C_thin = parse_cantor(params["C2"], self._ambient(box, thin), self.depth)
        first = HalfSlab(float(params["b1"]), slab, thin, C_thin)
        second = HalfSlab(float(params["b2"]), thin, slab, C_slab)
        return BiSlab(first, second)

    def _hyperplane(self, body: str, box: Optional[OpenBox]) -> HyperplanePatch:
        params = _split_params(body)
        axis = int(params.pop("axis")) - 1
        level = float(params.pop("level"))
        bounds: Dict[int, list] = {}
        for key, value in params.items():
            match = re.fullmatch(r"(min|max)(\d+)", key)
            if not match:
                raise DescriptorParseError(f"Unknown hyperplane parameter '{key}'")
            entry = bounds.setdefault(int(match.group(2)) - 1, [-np.inf, np.inf])
            entry[0 if match.group(1) == "min" else 1] = float(value)
        constraints = tuple((a, lo, hi) for a, (lo, hi) in sorted(bounds.items()))
        return HyperplanePatch(axis, level, constraints)

    def _box(self, body: str, box: Optional[OpenBox]) -> ClosedBox:
        intervals = []
        for item in body.split(","):
            lo, hi = item.split("|")
            intervals.append((float(lo), float(hi)))
        return ClosedBox(tuple(intervals))

    def _product(self, body: str, box: Optional[OpenBox]) -> ProductObstacle:
        params = _split_params(body)
        factors = []
        for axis in range(len(params)):
            key = f"C{axis + 1}"
            if key not in params:
                raise DescriptorParseError(f"product: missing factor {key}")
            factors.append(parse_cantor(params[key], self._ambient(box, axis), self.depth))
        return ProductObstacle(tuple(factors))

    def _mask(self, body: str, box: Optional[OpenBox]) -> GridMask:
        if box is None:
            raise DescriptorParseError("mask: descriptors need the ambient box")
        path = Path(body)
        if not path.exists():
            raise DescriptorParseError(f"mask file not found: {path}")
        mask = np.load(path)
        return GridMask(Grid(box, mask.shape), mask, source=str(path))


# Global factory instances keyed by depth
_factories: Dict[int, ObstacleFactory] = {}


def get_obstacle_factory(depth: int = 12) -> ObstacleFactory:
    """Get the shared factory for a construction depth."""
    if depth not in _factories:
        _factories[depth] = ObstacleFactory(depth=depth)
    return _factories[depth]


def parse_obstacle(descriptor: str, box: Optional[OpenBox] = None, depth: int = 12) -> ObstacleSet:
    """Shorthand for ``get_obstacle_factory(depth).create(descriptor, box)``."""
    return get_obstacle_factory(depth).create(descriptor, box)
