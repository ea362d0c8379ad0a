"""
Obstacle Descriptors for BundleLab.

Closed sets F inside the box of an experiment, with conservative grid
membership and a descriptor-string factory.
"""

from obstacles.base import ObstacleSet, EmptyObstacle
from obstacles.slabs import HalfSlab, BiSlab
from obstacles.patches import (
    HyperplanePatch,
    ClosedBox,
    ProductObstacle,
    UnionObstacle,
    GridMask,
)
from obstacles.factory import ObstacleFactory, get_obstacle_factory, parse_obstacle, parse_cantor

__all__ = [
    # Base
    "ObstacleSet",
    "EmptyObstacle",
    # Descriptors
    "HalfSlab",
    "BiSlab",
    "HyperplanePatch",
    "ClosedBox",
    "ProductObstacle",
    "UnionObstacle",
    "GridMask",
    # Factory
    "ObstacleFactory",
    "get_obstacle_factory",
    "parse_obstacle",
    "parse_cantor",
]
