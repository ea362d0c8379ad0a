"""
Base Obstacle Interface for BundleLab.

An obstacle is a closed set F inside the box of an experiment. Every
concrete descriptor answers one question, vectorised over many queries:
does a closed axis-aligned box meet the stage-``depth`` cover of F?
Point membership and grid masks are derived from it.
"""

from abc import ABC, abstractmethod
from fractions import Fraction
from typing import Optional

import numpy as np

from transport_core.sets import Grid


class ObstacleSet(ABC):
    """Abstract base class for obstacle descriptors.

    Membership is conservative: a query that cannot be decided at the
    given depth counts as meeting F. For a fixed query, a deeper decision
    never turns "outside" into "inside".
    """

    kind: str = "obstacle"

    @abstractmethod
    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray, depth: int) -> np.ndarray:
        """Whether each closed box [lo, hi] meets the stage-``depth`` cover.

        Args:
            lo: Lower corners, shape (..., n)
            hi: Upper corners, shape (..., n)
            depth: Construction depth of Cantor-like factors

        Returns:
            Boolean array of shape (...)
        """
        pass

    @abstractmethod
    def describe(self) -> str:
        """Descriptor string understood by ``ObstacleFactory``."""
        pass

    def contains(self, points: np.ndarray, depth: int) -> np.ndarray:
        """Point membership, shape (..., n) -> (...)."""
        points = np.asarray(points, dtype=float)
        return self.meets_boxes(points, points, depth)

    def grid_mask(self, grid: Grid, depth: int) -> np.ndarray:
        """F-nodes of a grid: nodes whose closed cell meets F."""
        lo, hi = grid.cell_bounds()
        return np.asarray(self.meets_boxes(lo, hi, depth), dtype=bool)

    @property
    def has_boundary(self) -> Optional[bool]:
        """For hypersurface patches: whether the patch has nonempty boundary."""
        return None

    def __str__(self) -> str:
        return self.describe()

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}({self.describe()})>"


class EmptyObstacle(ObstacleSet):
    """The empty set."""

    kind = "empty"

    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray, depth: int) -> np.ndarray:
        return np.zeros(np.asarray(lo).shape[:-1], dtype=bool)

    def describe(self) -> str:
        return "empty"

    def exact_measure(self) -> Fraction:
        return Fraction(0)
