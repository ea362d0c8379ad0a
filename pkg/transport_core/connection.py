"""
Connections on trivial bundles over boxes.

A rank-r connection over an n-dimensional box is stored as its matrix of
1-forms in the standard frame: n evaluable fields omega_i, each returning
an r x r matrix per point. A section s is parallel when
D_i s + omega_i s = 0 for every axis i, and transport along a path solves
v' = -(sum_i omega_i(gamma) gamma_i') v.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd

from transport_core.exceptions import (
    DomainError,
    EvaluationError,
    NumericError,
    PreconditionError,
    SingularJacobianError,
)
from transport_core.sets import Grid, OpenBox
from utils.numerics import rk4_integrate


logger = logging.getLogger(__name__)

# (N, n) points -> (N, r, r) matrices
ComponentField = Callable[[np.ndarray], np.ndarray]

SINGULAR_JACOBIAN_TOLERANCE = 1e-12


class Smoothness(Enum):
    """Declared differentiability class of a connection (not verified)."""
    C0 = "C0"
    C1 = "C1"
    CINF = "Cinf"

    @property
    def order(self) -> int:
        return {"C0": 0, "C1": 1, "Cinf": 99}[self.value]

    def at_least(self, other: 'Smoothness') -> bool:
        return self.order >= other.order


# ============================================================================
# Connection forms
# ============================================================================

@dataclass(frozen=True, eq=False)
class ConnectionForm:
    """Connection given by its component fields omega_1, ..., omega_n.

    Attributes:
        dim: Base dimension n
        rank: Bundle rank r
        components: One field per axis, (N, n) -> (N, r, r)
        smoothness: Declared class of the fields
        box: Domain of definition; None means all of R^n
        name: Registry name or description
    """
    dim: int
    rank: int
    components: Tuple[ComponentField, ...]
    smoothness: Smoothness = Smoothness.CINF
    box: Optional[OpenBox] = None
    name: str = "custom"

    def __post_init__(self):
        """Validate connection after initialization."""
        if self.dim < 1 or self.rank < 1:
            raise ValueError(f"Need n >= 1 and r >= 1, got n={self.dim}, r={self.rank}")
        if len(self.components) != self.dim:
            raise ValueError(f"Expected {self.dim} component fields, got {len(self.components)}")
        if self.box is not None and self.box.dim != self.dim:
            raise ValueError(f"Box dimension {self.box.dim} does not match n={self.dim}")

    def in_domain(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.box is None:
            return np.ones(points.shape[0], dtype=bool)
        return self.box.contains(points)

    def evaluate(self, axis: int, points: np.ndarray) -> np.ndarray:
        """omega_axis at each point, shape (N, r, r).

        Raises:
            EvaluationError: If the field fails or returns non-finite entries
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        try:
            values = np.asarray(self.components[axis](points), dtype=float)
        except (ArithmeticError, ValueError) as e:
            raise EvaluationError(
                f"omega_{axis + 1} of '{self.name}' failed: {e}", location=points[0]
            ) from e

        values = values.reshape(points.shape[0], self.rank, self.rank)
        finite = np.isfinite(values).all(axis=(1, 2))
        if not finite.all():
            bad = points[np.argmin(finite)]
            raise EvaluationError(
                f"omega_{axis + 1} of '{self.name}' is not finite at {tuple(bad)}", location=bad
            )
        return values

    def evaluate_all(self, points: np.ndarray) -> np.ndarray:
        """All components, shape (n, N, r, r)."""
        return np.stack([self.evaluate(axis, points) for axis in range(self.dim)])

    def contract(self, points: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        """sum_i omega_i(p) v_i per point, shape (N, r, r)."""
        velocities = np.atleast_2d(velocities)
        total = np.zeros((np.atleast_2d(points).shape[0], self.rank, self.rank))
        for axis in range(self.dim):
            weight = velocities[:, axis]
            if np.any(weight != 0):
                total += self.evaluate(axis, points) * weight[:, None, None]
        return total

    def __str__(self) -> str:
        domain = str(self.box) if self.box is not None else "R^n"
        return f"{self.name} (n={self.dim}, r={self.rank}, {self.smoothness.value}) on {domain}"


def zero_field(rank: int) -> ComponentField:
    def field(points: np.ndarray) -> np.ndarray:
        return np.zeros((np.atleast_2d(points).shape[0], rank, rank))
    return field


def constant_field(matrix: np.ndarray) -> ComponentField:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))

    def field(points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(matrix, (np.atleast_2d(points).shape[0],) + matrix.shape).copy()
    return field


def standard_connection(n: int, r: int, box: Optional[OpenBox] = None) -> ConnectionForm:
    """The standard connection of the trivial bundle: every omega_i is zero."""
    if n < 1 or r < 1:
        raise PreconditionError(f"Need n >= 1 and r >= 1, got n={n}, r={r}")
    return ConnectionForm(
        dim=n, rank=r, components=tuple(zero_field(r) for _ in range(n)),
        smoothness=Smoothness.CINF, box=box, name="standard"
    )


def constant_connection(
    matrices: Sequence[np.ndarray],
    box: Optional[OpenBox] = None,
    name: str = "constant"
) -> ConnectionForm:
    """Connection with constant coefficient matrices, one per axis."""
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in matrices]
    rank = mats[0].shape[0]
    if any(m.shape != (rank, rank) for m in mats):
        raise PreconditionError(f"All coefficient matrices must be {rank}x{rank}")
    return ConnectionForm(
        dim=len(mats), rank=rank, components=tuple(constant_field(m) for m in mats),
        smoothness=Smoothness.CINF, box=box, name=name
    )


def restrict(conn: ConnectionForm, sub: OpenBox) -> ConnectionForm:
    """The same connection with its domain re-declared as ``sub``.

    Raises:
        DomainError: If sub is not a sub-box of the connection's box
    """
    if sub.dim != conn.dim:
        raise DomainError(f"Sub-box has dimension {sub.dim}, connection has {conn.dim}")
    if conn.box is not None and not conn.box.contains_box(sub):
        raise DomainError(f"{sub} is not contained in {conn.box}")
    return replace(conn, box=sub)


# ============================================================================
# Diffeomorphisms and pullback
# ============================================================================

PointMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Diffeo:
    """Diffeomorphism phi from ``source`` into the target, with inverse and Jacobian.

    Attributes:
        forward: phi, (N, n) -> (N, n)
        inverse: psi, (N, n) -> (N, n)
        jacobian: (N, n) -> (N, n, n) with J[k, i, j] = d phi_i / d x_j
        source: Box phi is defined on
        target: Image box when the image is a box, else None
        name: Description
    """
    forward: PointMap
    inverse: PointMap
    jacobian: Callable[[np.ndarray], np.ndarray]
    source: OpenBox
    target: Optional[OpenBox] = None
    name: str = "diffeo"

    @property
    def dim(self) -> int:
        return self.source.dim

    @classmethod
    def euclidean_move(
        cls,
        rotation: np.ndarray,
        offset: Sequence[float],
        source: OpenBox,
        name: str = "euclidean move"
    ) -> 'Diffeo':
        """phi(x) = Q x + c with Q orthogonal."""
        Q = np.asarray(rotation, dtype=float)
        c = np.asarray(offset, dtype=float)
        if not np.allclose(Q @ Q.T, np.eye(len(c)), atol=1e-12):
            raise PreconditionError("Euclidean moves need an orthogonal matrix")

        target = None
        if np.allclose(np.abs(Q), np.round(np.abs(Q))):
            # signed permutation: the image of a box is a box
            corners = np.stack([source.lows, source.highs]) @ Q.T + c
            target = OpenBox(tuple(zip(corners.min(axis=0), corners.max(axis=0))))

        return cls(
            forward=lambda x: np.atleast_2d(x) @ Q.T + c,
            inverse=lambda y: (np.atleast_2d(y) - c) @ Q,
            jacobian=lambda x: np.broadcast_to(Q, (np.atleast_2d(x).shape[0],) + Q.shape),
            source=source, target=target, name=name
        )

    @classmethod
    def translation(cls, offset: Sequence[float], source: OpenBox) -> 'Diffeo':
        offset = np.asarray(offset, dtype=float)
        return cls.euclidean_move(np.eye(len(offset)), offset, source, name=f"translation by {tuple(offset)}")

    @classmethod
    def axis_swap(cls, i: int, j: int, source: OpenBox) -> 'Diffeo':
        Q = np.eye(source.dim)
        Q[[i, j]] = Q[[j, i]]
        return cls.euclidean_move(Q, np.zeros(source.dim), source, name=f"swap of axes {i + 1},{j + 1}")

    @classmethod
    def rotation(
        cls,
        angle: float,
        source: OpenBox,
        plane: Tuple[int, int] = (0, 1),
        center: Optional[Sequence[float]] = None
    ) -> 'Diffeo':
        """Rotation by ``angle`` radians in ``plane`` about ``center`` (default origin)."""
        n = source.dim
        Q = np.eye(n)
        a, b = plane
        Q[a, a], Q[a, b] = math.cos(angle), -math.sin(angle)
        Q[b, a], Q[b, b] = math.sin(angle), math.cos(angle)
        center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        return cls.euclidean_move(Q, center - Q @ center, source, name=f"rotation by {angle:.6g} rad")

    def validate(self, samples: int = 5, tolerance: float = 1e-9) -> None:
        """Check inverse composition and Jacobian regularity at sampled points.

        Raises:
            NumericError: If psi(phi(x)) differs from x beyond the tolerance
            SingularJacobianError: If the Jacobian is singular at a sample
        """
        points = Grid.uniform(self.source, samples).points
        back = self.inverse(self.forward(points))
        error = float(np.max(np.abs(back - points)))
        if error > tolerance:
            raise NumericError(f"{self.name}: inverse composition error {error:.3e} exceeds {tolerance}")
        det = np.linalg.det(self.jacobian(points))
        if np.any(np.abs(det) < SINGULAR_JACOBIAN_TOLERANCE):
            raise SingularJacobianError(f"{self.name}: singular Jacobian at sampled points")


def pullback(conn: ConnectionForm, d: Diffeo) -> ConnectionForm:
    """Pullback connection on ``d.source``.

    omega'_j(x') = sum_i omega_i(phi(x')) * d phi_i / d x'_j (x').

    Raises:
        DomainError: If phi visibly maps the source outside the connection's box
        SingularJacobianError: If the Jacobian is singular where a field is evaluated
    """
    if d.dim != conn.dim:
        raise DomainError(f"Diffeo dimension {d.dim} does not match connection dimension {conn.dim}")
    if conn.box is not None:
        images = d.forward(Grid.uniform(d.source, 4).points)
        if not conn.box.contains(images).all():
            raise DomainError(f"{d.name} does not map {d.source} into {conn.box}")

    def make_component(j: int) -> ComponentField:
        def component(points: np.ndarray) -> np.ndarray:
            points = np.atleast_2d(points)
            J = np.asarray(d.jacobian(points), dtype=float)
            det = np.linalg.det(J)
            singular = np.abs(det) < SINGULAR_JACOBIAN_TOLERANCE
            if singular.any():
                raise SingularJacobianError(
                    f"{d.name}: singular Jacobian at {tuple(points[np.argmax(singular)])}"
                )
            omegas = conn.evaluate_all(d.forward(points))
            return np.einsum("ikab,ki->kab", omegas, J[:, :, j])
        return component

    return ConnectionForm(
        dim=conn.dim, rank=conn.rank,
        components=tuple(make_component(j) for j in range(conn.dim)),
        smoothness=conn.smoothness, box=d.source,
        name=f"pullback of {conn.name} by {d.name}"
    )


# ============================================================================
# Paths and parallel transport
# ============================================================================

CurveMap = Callable[[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class PiecewisePath:
    """Piecewise C^1 path with breakpoints t_0 < ... < t_m.

    Attributes:
        breakpoints: Parameter values at segment boundaries
        positions: Per-segment position maps
        velocities: Per-segment velocity maps
    """
    breakpoints: Tuple[float, ...]
    positions: Tuple[CurveMap, ...]
    velocities: Tuple[CurveMap, ...]

    def __post_init__(self):
        """Validate path after initialization."""
        t = self.breakpoints
        if len(t) != len(self.positions) + 1 or len(self.positions) != len(self.velocities):
            raise ValueError("A path needs m+1 breakpoints for m segments")
        if any(b <= a for a, b in zip(t[:-1], t[1:])):
            raise ValueError(f"Breakpoints must increase strictly, got {t}")
        for k in range(len(self.positions) - 1):
            left = self.positions[k](t[k + 1])
            right = self.positions[k + 1](t[k + 1])
            if not np.allclose(left, right, atol=1e-12, rtol=1e-12):
                raise ValueError(f"Path is discontinuous at t={t[k + 1]}")

    @classmethod
    def segment(cls, start: Sequence[float], end: Sequence[float]) -> 'PiecewisePath':
        """Straight segment from start to end, parametrised over [0, 1]."""
        return cls.polyline([start, end])

    @classmethod
    def polyline(cls, vertices: Sequence[Sequence[float]]) -> 'PiecewisePath':
        """Polygonal path through the vertices, one unit of parameter per edge."""
        pts = [np.asarray(v, dtype=float) for v in vertices]
        if len(pts) < 2:
            raise ValueError("A polyline needs at least two vertices")
        positions, velocities = [], []
        for k, (a, b) in enumerate(zip(pts[:-1], pts[1:])):
            positions.append(lambda t, a=a, b=b, k=k: a + (t - k) * (b - a))
            velocities.append(lambda t, a=a, b=b: b - a)
        return cls(tuple(float(k) for k in range(len(pts))), tuple(positions), tuple(velocities))

    @property
    def start(self) -> np.ndarray:
        return np.asarray(self.positions[0](self.breakpoints[0]), dtype=float)

    @property
    def end(self) -> np.ndarray:
        return np.asarray(self.positions[-1](self.breakpoints[-1]), dtype=float)

    def reversed(self) -> 'PiecewisePath':
        total = self.breakpoints[0] + self.breakpoints[-1]
        breakpoints = tuple(total - t for t in reversed(self.breakpoints))
        positions = tuple(lambda t, p=p: p(total - t) for p in reversed(self.positions))
        velocities = tuple(lambda t, v=v: -np.asarray(v(total - t)) for v in reversed(self.velocities))
        return PiecewisePath(breakpoints, positions, velocities)

    def concatenated(self, other: 'PiecewisePath') -> 'PiecewisePath':
        shift = self.breakpoints[-1] - other.breakpoints[0]
        breakpoints = self.breakpoints + tuple(t + shift for t in other.breakpoints[1:])
        positions = self.positions + tuple(lambda t, p=p: p(t - shift) for p in other.positions)
        velocities = self.velocities + tuple(lambda t, v=v: v(t - shift) for v in other.velocities)
        return PiecewisePath(breakpoints, positions, velocities)

    def mapped(self, d: Diffeo) -> 'PiecewisePath':
        """The path phi o gamma, with velocity J_phi(gamma) gamma'."""
        positions = tuple(lambda t, p=p: d.forward(np.asarray(p(t))[None])[0] for p in self.positions)
        velocities = tuple(
            lambda t, p=p, v=v: d.jacobian(np.asarray(p(t))[None])[0] @ np.asarray(v(t))
            for p, v in zip(self.positions, self.velocities)
        )
        return PiecewisePath(self.breakpoints, positions, velocities)


@dataclass(frozen=True)
class TransportCertificate:
    """Transport result with its Richardson accuracy certificate.

    Attributes:
        value: Transported value at step h/2
        defect: Norm of the difference between the step-h and step-h/2 results
        step: Coarse step h
    """
    value: np.ndarray
    defect: float
    step: float


def parallel_transport(
    conn: ConnectionForm,
    path: PiecewisePath,
    v0: Sequence[float],
    step: float = 1e-3
) -> np.ndarray:
    """Parallel transport of ``v0`` along ``path`` with fixed-step RK4.

    ``v0`` may be an r-vector or an r x k matrix of column vectors.

    Raises:
        DomainError: If the path leaves the connection's box
        PreconditionError: If step <= 0 or v0 has the wrong size
    """
    if step <= 0:
        raise PreconditionError(f"step must be positive, got {step}")
    v = np.asarray(v0, dtype=float)
    as_vector = v.ndim == 1
    V = v.reshape(conn.rank, -1) if as_vector else v
    if V.shape[0] != conn.rank:
        raise PreconditionError(f"v0 needs {conn.rank} rows, got shape {v.shape}")

    for t_start, t_end, position, velocity in zip(
        path.breakpoints[:-1], path.breakpoints[1:], path.positions, path.velocities
    ):
        def rhs(t: float, y: np.ndarray, position=position, velocity=velocity) -> np.ndarray:
            p = np.asarray(position(t), dtype=float)[None]
            if not conn.in_domain(p)[0]:
                raise DomainError(f"Path leaves {conn.box} at t={t:.6g}, point {tuple(p[0])}")
            M = conn.contract(p, np.asarray(velocity(t), dtype=float)[None])[0]
            return -M @ y

        V = rk4_integrate(rhs, V, t_start, t_end, step)

    return V[:, 0] if as_vector else V


def transport_certified(
    conn: ConnectionForm,
    path: PiecewisePath,
    v0: Sequence[float],
    step: float = 1e-3
) -> TransportCertificate:
    """Transport at steps h and h/2 and report their difference as the defect."""
    coarse = parallel_transport(conn, path, v0, step)
    fine = parallel_transport(conn, path, v0, step / 2)
    defect = float(np.linalg.norm(fine - coarse))
    logger.debug(f"Transport along path under '{conn.name}': Richardson defect {defect:.3e}")
    return TransportCertificate(value=fine, defect=defect, step=step)


# ============================================================================
# Sampled sections and covariant residuals
# ============================================================================

@dataclass(frozen=True, eq=False)
class SampledSection:
    """Section sampled on a grid, defined where ``mask`` is true.

    Attributes:
        grid: Grid the section lives on
        values: Array (*grid.shape, r); NaN where undefined
        mask: Boolean array (*grid.shape)
    """
    grid: Grid
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        """Validate layout after initialization."""
        mask = np.asarray(self.mask, dtype=bool)
        values = np.array(self.values, dtype=float)
        if mask.shape != self.grid.shape:
            raise ValueError(f"Mask shape {mask.shape} does not match grid {self.grid.shape}")
        if values.shape[:-1] != self.grid.shape:
            raise ValueError(f"Values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.isfinite(values[mask]).all():
            raise ValueError("Section values must be finite wherever the mask is set")
        values[~mask] = np.nan
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "values", values)

    @property
    def rank(self) -> int:
        return self.values.shape[-1]

    @property
    def is_total(self) -> bool:
        return bool(self.mask.all())

    @classmethod
    def from_closed_form(
        cls,
        grid: Grid,
        func: Callable[[np.ndarray], np.ndarray],
        obstacle=None,
        depth: int = 12,
        rank: Optional[int] = None
    ) -> 'SampledSection':
        """Sample ``func`` ((N, n) -> (N, r)) at the nodes off ``obstacle``."""
        mask = np.ones(grid.shape, dtype=bool)
        if obstacle is not None:
            mask &= ~obstacle.grid_mask(grid, depth)
        nodes = grid.nodes
        sampled = np.asarray(func(nodes[mask]), dtype=float)
        sampled = sampled.reshape(sampled.shape[0], -1)
        r = sampled.shape[1] if rank is None else rank
        values = np.full(grid.shape + (r,), np.nan)
        values[mask] = sampled
        return cls(grid, values, mask)

    @classmethod
    def constant(cls, grid: Grid, value: Sequence[float], obstacle=None, depth: int = 12) -> 'SampledSection':
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls.from_closed_form(
            grid, lambda pts: np.broadcast_to(value, (pts.shape[0], value.size)),
            obstacle=obstacle, depth=depth, rank=value.size
        )

    def max_difference(self, other: 'SampledSection', where: Optional[np.ndarray] = None) -> Tuple[float, Tuple[int, ...]]:
        """Largest vector-norm difference over nodes where both are defined (and ``where``)."""
        both = self.mask & other.mask
        if where is not None:
            both &= where
        if not both.any():
            return 0.0, ()
        diff = np.linalg.norm(np.nan_to_num(self.values - other.values), axis=-1)
        diff[~both] = -1.0
        flat = int(np.argmax(diff))
        index = np.unravel_index(flat, self.grid.shape)
        return float(diff[index]), tuple(int(i) for i in index)

    def to_dataframe(self) -> pd.DataFrame:
        """One row per node: indices, coordinates, defined flag, value columns."""
        dim = self.grid.dim
        indices = np.indices(self.grid.shape).reshape(dim, -1).T
        data = {f"index_{a + 1}": indices[:, a] for a in range(dim)}
        points = self.grid.points
        data.update({f"x_{a + 1}": points[:, a] for a in range(dim)})
        data["defined"] = self.mask.reshape(-1).astype(int)
        flat = self.values.reshape(-1, self.rank)
        data.update({f"s_{k + 1}": flat[:, k] for k in range(self.rank)})
        return pd.DataFrame(data)


@dataclass(frozen=True, eq=False)
class ResidualField:
    """Per-node covariant residual magnitudes along one axis.

    Attributes:
        axis: Axis of the derivative (0-based)
        values: Residual per node, NaN at ineligible nodes
        eligible: Nodes where the residual was computed
        h: Difference step used
    """
    axis: int
    values: np.ndarray
    eligible: np.ndarray
    h: float

    @property
    def maximum(self) -> float:
        return float(np.nanmax(self.values)) if self.eligible.any() else 0.0

    @property
    def argmax(self) -> Tuple[int, ...]:
        if not self.eligible.any():
            return ()
        return tuple(int(i) for i in np.unravel_index(np.nanargmax(self.values), self.values.shape))

    @property
    def skipped(self) -> int:
        return int((~self.eligible).sum())


def shifted(values: np.ndarray, axis: int, offset: int, fill=np.nan) -> np.ndarray:
    """``out[i] = values[i + offset]`` along ``axis``, ``fill`` where out of range."""
    out = np.full_like(values, fill)
    n = values.shape[axis]
    if abs(offset) >= n:
        return out
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if offset >= 0:
        src[axis], dst[axis] = slice(offset, n), slice(0, n - offset)
    else:
        src[axis], dst[axis] = slice(0, n + offset), slice(-offset, n)
    out[tuple(dst)] = values[tuple(src)]
    return out


def covariant_residual(
    conn: ConnectionForm,
    s: SampledSection,
    i: int,
    h: Optional[float] = None
) -> ResidualField:
    """Central-difference residual ||D_i s + omega_i s|| per eligible node.

    A node is eligible when it and both of its axis-i neighbours at distance
    h are defined; other nodes are skipped.

    Args:
        conn: Connection
        s: Sampled section
        i: Axis (0-based)
        h: Difference step; a positive multiple of the grid spacing (default: one spacing)
    """
    grid = s.grid
    spacing = float(grid.spacing[i])
    k = 1 if h is None else int(round(h / spacing))
    if k < 1 or (h is not None and abs(k * spacing - h) > 1e-9 * spacing):
        raise PreconditionError(f"h={h} is not a positive multiple of the grid spacing {spacing}")
    if conn.box is not None and not conn.box.contains_box(grid.box):
        raise DomainError(f"Grid box {grid.box} is not inside the connection's box {conn.box}")

    forward = shifted(s.values, i, k)
    backward = shifted(s.values, i, -k)
    mask_f = shifted(s.mask.astype(float), i, k, fill=0.0) > 0
    mask_b = shifted(s.mask.astype(float), i, -k, fill=0.0) > 0
    eligible = s.mask & mask_f & mask_b

    residual = np.full(grid.shape, np.nan)
    if eligible.any():
        derivative = (forward[eligible] - backward[eligible]) / (2 * k * spacing)
        omega = conn.evaluate(i, grid.nodes[eligible])
        term = np.einsum("kab,kb->ka", omega, s.values[eligible])
        residual[eligible] = np.linalg.norm(derivative + term, axis=-1)
    return ResidualField(axis=i, values=residual, eligible=eligible, h=k * spacing)


def edge_propagators(conn: ConnectionForm, grid: Grid, axis: int, step: float) -> np.ndarray:
    """Transport matrices between consecutive nodes along ``axis``.

    ``P[idx]`` maps a value at node idx to the parallel value at idx + e_axis;
    the last slice along the axis is NaN. Products of consecutive entries give
    transport along grid lines.
    """
    r = conn.rank
    nodes = grid.nodes
    count = grid.shape[axis]
    out = np.full(grid.shape + (r, r), np.nan)
    if count < 2:
        return out

    lead = np.take(nodes, np.arange(count - 1), axis=axis)
    lead_shape = lead.shape[:-1]
    starts = lead.reshape(-1, grid.dim)
    h = float(grid.spacing[axis])

    def rhs(tau: float, X: np.ndarray) -> np.ndarray:
        pts = starts.copy()
        pts[:, axis] += tau
        return -conn.evaluate(axis, pts) @ X

    identity = np.broadcast_to(np.eye(r), (starts.shape[0], r, r))
    P = rk4_integrate(rhs, identity, 0.0, h, step)
    index = [slice(None)] * grid.dim
    index[axis] = slice(0, count - 1)
    out[tuple(index)] = P.reshape(lead_shape + (r, r))
    return out
