"""
Custom Exception Hierarchy for BundleLab.

This module defines the exception hierarchy shared by the numerical core,
the obstacle descriptors, the scenario registry and the command line.
"""

from typing import Optional, Sequence


class BundleLabError(Exception):
    """Base exception for all BundleLab errors."""
    pass


# Domain-related exceptions
class DomainError(BundleLabError):
    """Raised when a point, path or sub-box lies outside the admissible domain."""
    pass


class SectionDomainError(DomainError):
    """Raised when a closed-form section is evaluated where it is not defined."""
    pass


# Precondition exceptions
class PreconditionError(BundleLabError):
    """Raised when an operation is called with arguments violating its preconditions."""
    pass


class InfeasibleError(PreconditionError):
    """Raised when a requested measure cannot be realised inside the ambient set."""
    pass


# Numerical exceptions
class NumericError(BundleLabError):
    """Base exception for numerical failures."""
    pass


class SingularJacobianError(NumericError):
    """Raised when a diffeomorphism's Jacobian is singular at an evaluation point."""
    pass


class EvaluationError(NumericError):
    """Raised when a coefficient field fails or returns non-finite values.

    Attributes:
        t: Time coordinate of the failed evaluation (if any)
        location: Parameter (or space) coordinates of the failed evaluation
    """

    def __init__(
        self,
        message: str,
        t: Optional[float] = None,
        location: Optional[Sequence[float]] = None
    ):
        super().__init__(message)
        self.t = t
        self.location = tuple(location) if location is not None else None


# Extension-related exceptions
class ExtensionError(BundleLabError):
    """Base exception for section-extension errors."""
    pass


class InputIntegrityError(ExtensionError):
    """Raised when the input section is not parallel off the obstacle.

    Attributes:
        axis: Axis whose residual exceeded the tolerance
        residual: Largest residual found on that axis
    """

    def __init__(self, message: str, axis: int, residual: float):
        super().__init__(message)
        self.axis = axis
        self.residual = residual


class InconsistencyError(ExtensionError):
    """Raised when two extensions of the same section disagree.

    Attributes:
        index: Grid index of the largest discrepancy
        point: Coordinates of that node
        discrepancy: Size of the discrepancy
    """

    def __init__(
        self,
        message: str,
        index: Sequence[int],
        point: Sequence[float],
        discrepancy: float
    ):
        super().__init__(message)
        self.index = tuple(index)
        self.point = tuple(point)
        self.discrepancy = discrepancy


# Obstacle descriptor exceptions
class ObstacleError(BundleLabError):
    """Base exception for obstacle descriptor errors."""
    pass


class DescriptorParseError(ObstacleError):
    """Raised when an obstacle descriptor string cannot be parsed."""
    pass


# Configuration-related exceptions
class ConfigurationError(BundleLabError):
    """Base exception for configuration errors."""
    pass


class InvalidConfigurationError(ConfigurationError):
    """Raised when configuration is invalid."""
    pass


class UnknownScenarioError(ConfigurationError):
    """Raised when a scenario name is not in the registry."""
    pass
