"""
Named scenarios: a connection, a parallel section off an obstacle, and the
verdict an extension run is expected to reach.

- ``noextension``: a smooth rank-1 connection on R^n, trivial outside the
  cube [-1,1]^n, whose section off Q = [-1,1]^(n-1) x [-1,0] jumps across
  x_n = 0 and admits no parallel extension over Q.
- ``cantor-c0``: a continuous connection built from the Cantor function; its
  section off {x_1 >= 0, x_2 in C} is not differentiable in x_2.
- ``fat-cantor-box``: a product of fat Cantor sets with a flat connection.
- ``big-measure``: a union of fat Cantor products of large measure.
- ``hyperplane-patch``: half-hyperplanes with boundary in flat regions.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.optimize import brentq

from obstacles import (
    BiSlab,
    ClosedBox,
    EmptyObstacle,
    HalfSlab,
    HyperplanePatch,
    ObstacleSet,
    ProductObstacle,
    UnionObstacle,
)
from scenarios.gallery import (
    bump,
    bump_derivative,
    expected_jump,
    get_smooth_step,
    positive_power,
    positive_power_derivative,
    reflected_step,
    reflected_step_derivative,
)
from transport_core.connection import ConnectionForm, Smoothness, standard_connection
from transport_core.exceptions import InfeasibleError, PreconditionError, SectionDomainError
from transport_core.extension import Tolerances, Verdict
from transport_core.sets import (
    CantorLikeSet,
    Grid,
    OpenBox,
    cantor_function_array,
    dyadic_decompose,
    fat_cantor_build,
)


logger = logging.getLogger(__name__)

SectionFunction = Callable[[np.ndarray], np.ndarray]

TERNARY_STEPS = tuple(3.0 ** -k for k in range(4, 11))
DIVERGENT_POINTS = ((0.5, 0.0), (0.5, 1 / 3), (1.0, 2 / 3), (1.0, 1.0), (1.5, 2 / 9))
CONVERGENT_POINTS = ((-0.5, 0.0), (0.5, 0.5), (1.0, 1.5))


@dataclass(frozen=True)
class JumpSite:
    """Where to look for a jump: base point and normal axis (0-based)."""
    axis: int
    base: Tuple[float, ...]
    eps: Tuple[float, ...] = tuple(10.0 ** -k for k in range(2, 9))


@dataclass(frozen=True)
class DivergenceSites:
    """Difference-quotient sample points along one axis.

    Attributes:
        axis: Differentiation axis (0-based)
        points: Points expected to give divergent quotients
        controls: Points expected to give convergent quotients
        steps: Decreasing step sequence
    """
    axis: int
    points: Tuple[Tuple[float, ...], ...]
    controls: Tuple[Tuple[float, ...], ...]
    steps: Tuple[float, ...] = TERNARY_STEPS


@dataclass(frozen=True, eq=False)
class NamedScenario:
    """A connection, a parallel section off an obstacle and the expected outcome.

    Attributes:
        name: Registry name
        title: One-line description
        box: Box the experiment runs on
        connection: Connection over (a box containing) ``box``
        section: Closed form of the parallel section, (N, n) -> (N, r)
        obstacle: Closed obstacle inside the box
        expected_verdict: Verdict a correct run reaches
        pipeline: "slab", "bislab" or "scan"
        tolerances: Tolerances suited to the scenario at its default resolution
        resolution: Default grid resolution per axis
        expected_evidence: Expected evidence values (e.g. jump size)
        metadata: Extra facts (exact obstacle measure, variant, ...)
        jump_site: Jump detector settings, if the scenario has a jump
        divergence_sites: Difference-quotient settings, if any
        count_components: Count connected components of the obstacle complement
    """
    name: str
    title: str
    box: OpenBox
    connection: ConnectionForm
    section: SectionFunction
    obstacle: ObstacleSet
    expected_verdict: Verdict
    pipeline: str
    tolerances: Tolerances = Tolerances()
    resolution: int = 128
    expected_evidence: Dict[str, Any] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)
    jump_site: Optional[JumpSite] = None
    divergence_sites: Optional[DivergenceSites] = None
    count_components: bool = False

    def __post_init__(self):
        """Validate scenario after initialization."""
        if self.connection.dim != self.box.dim:
            raise ValueError(f"Connection dimension {self.connection.dim} does not match box dimension {self.box.dim}")
        if self.connection.box is not None and not self.connection.box.contains_box(self.box):
            raise ValueError(f"Scenario box {self.box} is not inside the connection's box")
        if self.pipeline not in ("slab", "bislab", "scan"):
            raise ValueError(f"Unknown pipeline '{self.pipeline}'")
        if not obstacle_inside(self.box, self.obstacle):
            raise ValueError(f"Obstacle {self.obstacle} is not inside {self.box}")

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def rank(self) -> int:
        return self.connection.rank

    def grid(self, resolution: Optional[int] = None) -> Grid:
        return Grid.uniform(self.box, resolution or self.resolution)


def obstacle_inside(box: OpenBox, F: ObstacleSet, depth: int = 8) -> bool:
    """Whether F meets the box, and bounded obstacles stay inside it.

    Half-slabs and hyperplane patches are unbounded descriptors; only their
    trace on the box matters. Boxes, products and unions are checked on a
    coarse grid over the enlarged box.
    """
    if isinstance(F, EmptyObstacle):
        return True
    coarse = max(4, int(2 ** (12 / box.dim)))
    if not F.grid_mask(Grid.uniform(box, coarse), depth).any():
        return False
    if not isinstance(F, (ClosedBox, ProductObstacle, UnionObstacle)):
        return True

    margin = box.lengths * 0.25
    enlarged = OpenBox(tuple(zip(box.lows - margin, box.highs + margin)))
    grid = Grid.uniform(enlarged, coarse)
    points = grid.points
    outside = ~np.all((points >= box.lows) & (points <= box.highs), axis=1)
    return not bool(np.any(F.contains(points[outside], depth)))


def _column(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(-1, 1)


def _rank_one(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(-1, 1, 1)


# ============================================================================
# No-extension connection
# ============================================================================

def noextension_scenario(n: int = 2, offset: Optional[Sequence[float]] = None) -> NamedScenario:
    """Connection trivial off [-1,1]^n whose parallel section cannot cross Q.

    f(x) = b(x_1) ... b(x_{n-1}) h(x_n),
    omega_i = -g(x_n) D_i f / (1 + f) for i < n, omega_n = -D_n f / (1 + f).
    The section is 1 for x_n < 0 and 1 + f for x_n > 0; it is undefined on
    the interface x_n = 0 inside [-1,1]^n. ``offset`` translates the whole
    picture.

    Raises:
        PreconditionError: If n < 2
    """
    if n < 2:
        raise PreconditionError(f"The no-extension construction needs n >= 2, got n={n}")
    c = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if c.size != n:
        raise PreconditionError(f"Offset needs {n} coordinates")
    g = get_smooth_step()

    def parts(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        y = np.atleast_2d(points) - c
        return y, bump(y[:, :n - 1]), reflected_step(y[:, n - 1])

    def f_value(points: np.ndarray) -> np.ndarray:
        _, bumps, h = parts(points)
        return np.prod(bumps, axis=1) * h

    def make_component(i: int):
        def component(points: np.ndarray) -> np.ndarray:
            y, bumps, h = parts(points)
            f = np.prod(bumps, axis=1) * h
            if i < n - 1:
                others = np.prod(np.delete(bumps, i, axis=1), axis=1)
                derivative = bump_derivative(y[:, i]) * others * h
                return _rank_one(-g(y[:, n - 1]) * derivative / (1 + f))
            derivative = np.prod(bumps, axis=1) * reflected_step_derivative(y[:, n - 1])
            return _rank_one(-derivative / (1 + f))
        return component

    def section(points: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(points) - c
        interface = (y[:, n - 1] == 0) & np.all(np.abs(y) <= 1, axis=1)
        if interface.any():
            raise SectionDomainError(
                f"The section is undefined on the interface x_{n} = 0 at {tuple(np.atleast_2d(points)[interface][0])}"
            )
        return _column(np.where(y[:, n - 1] > 0, 1 + f_value(points), 1.0))

    box = OpenBox(tuple((ci - 3.0, ci + 3.0) for ci in c))
    Q = ClosedBox(tuple((ci - 1.0, ci + 1.0) for ci in c[:-1]) + ((c[-1] - 1.0, c[-1]),))
    connection = ConnectionForm(
        dim=n, rank=1, components=tuple(make_component(i) for i in range(n)),
        smoothness=Smoothness.CINF, box=box, name="noextension"
    )
    return NamedScenario(
        name="noextension",
        title=f"Smooth connection on R^{n} with a section that does not extend over Q",
        box=box,
        connection=connection,
        section=section,
        obstacle=Q,
        expected_verdict=Verdict.OBSTRUCTED,
        pipeline="scan",
        # central differences across the steep bump layer err by O(h)
        tolerances=Tolerances(agreement=1e-6, residual=0.05, residual_slope=1.5),
        resolution=128 if n == 2 else 32,
        expected_evidence={"jump": expected_jump(n)},
        metadata={"offset": c.tolist()},
        jump_site=JumpSite(axis=n - 1, base=tuple(c)),
    )


# ============================================================================
# Cantor-function connection
# ============================================================================

def smooth_product_connection(box: OpenBox, shift: float = 0.0, name: str = "smooth-product") -> Tuple[ConnectionForm, SectionFunction]:
    """Flat rank-1 connection with parallel section 1 + f(x_1 - shift) G(x_2).

    f = x_+^3 and G(y) = g(y - 1) rises from 0 at y = 0 to 1 at y = 1.
    """
    g = get_smooth_step()
    n = box.dim

    def factors(points: np.ndarray):
        points = np.atleast_2d(points)
        x1 = points[:, 0] - shift
        return (positive_power(x1, 3), positive_power_derivative(x1, 3),
                g(points[:, 1] - 1.0), g.derivative(points[:, 1] - 1.0))

    def omega_1(points):
        f, df, G, _ = factors(points)
        return _rank_one(-df * G / (1 + f * G))

    def omega_2(points):
        f, _, G, dG = factors(points)
        return _rank_one(-f * dG / (1 + f * G))

    def zero(points):
        return np.zeros((np.atleast_2d(points).shape[0], 1, 1))

    def section(points):
        f, _, G, _ = factors(points)
        return _column(1 + f * G)

    components = (omega_1, omega_2) + tuple(zero for _ in range(n - 2))
    connection = ConnectionForm(dim=n, rank=1, components=components, smoothness=Smoothness.C1, box=box, name=name)
    return connection, section


def cantor_c0_scenario(n: int = 2, variant: str = "cantor", depth: int = 12) -> NamedScenario:
    """Continuous connection whose parallel section off {x_1 >= 0, x_2 in C} is not C^1.

    ``variant="cantor"``: f = x_+^2, g the Cantor function, only
    omega_1 = -f'(x_1) g(x_2) / (1 + f(x_1) g(x_2)) nonzero; section 1 + f g.
    ``variant="smooth"``: the same geometry under ``smooth_product_connection``.

    Raises:
        PreconditionError: If n < 2 or the variant is unknown
    """
    if n < 2:
        raise PreconditionError(f"The Cantor-function construction needs n >= 2, got n={n}")
    if variant not in ("cantor", "smooth"):
        raise PreconditionError(f"Unknown cantor-c0 variant '{variant}' (cantor, smooth)")

    box = OpenBox(((-2.0, 2.0), (-1.0, 2.0)) + tuple((-1.0, 1.0) for _ in range(n - 2)))
    C = CantorLikeSet.ternary(0.0, 1.0, depth=depth)
    F = HalfSlab(b=0.0, slab_axis=0, thin_axis=1, C=C)
    pad = (0.0,) * (n - 2)

    if variant == "smooth":
        connection, section = smooth_product_connection(box, name="cantor-c0-smooth")
        return NamedScenario(
            name="cantor-c0",
            title="Smooth variant of the Cantor geometry: the section extends",
            box=box, connection=connection, section=section, obstacle=F,
            expected_verdict=Verdict.EXTENDED, pipeline="slab",
            tolerances=Tolerances(agreement=1e-6, residual=0.05),
            metadata={"variant": "smooth", "obstacle_measure": "0"},
        )

    def omega_1(points):
        points = np.atleast_2d(points)
        f, df = positive_power(points[:, 0], 2), positive_power_derivative(points[:, 0], 2)
        g = cantor_function_array(points[:, 1])
        return _rank_one(-df * g / (1 + f * g))

    def zero(points):
        return np.zeros((np.atleast_2d(points).shape[0], 1, 1))

    def section(points):
        points = np.atleast_2d(points)
        return _column(1 + positive_power(points[:, 0], 2) * cantor_function_array(points[:, 1]))

    connection = ConnectionForm(
        dim=n, rank=1, components=(omega_1,) + tuple(zero for _ in range(n - 1)),
        smoothness=Smoothness.C0, box=box, name="cantor-c0"
    )
    return NamedScenario(
        name="cantor-c0",
        title="Cantor-function connection: the section is not differentiable across F",
        box=box, connection=connection, section=section, obstacle=F,
        expected_verdict=Verdict.OBSTRUCTED, pipeline="slab",
        tolerances=Tolerances(agreement=1e-6, residual=0.05),
        expected_evidence={"divergence_factor": 1.5},
        metadata={"variant": "cantor", "obstacle_measure": "0"},
        divergence_sites=DivergenceSites(
            axis=1,
            points=tuple(p + pad for p in DIVERGENT_POINTS),
            controls=tuple(p + pad for p in CONVERGENT_POINTS),
        ),
    )


# ============================================================================
# Fat Cantor obstacles
# ============================================================================

def _dyadic_delta(limit: float) -> Fraction:
    """Largest power of two not above ``limit``."""
    return Fraction(2) ** math.floor(math.log2(limit))


def fat_cantor_product(box: OpenBox, measure: float, depth: int = 12) -> ProductObstacle:
    """Product of fat Cantor sets inside ``box`` with exact measure > ``measure``.

    With t* solving prod_i (L_i - t*) = measure, delta is a power of two
    below min(L_i / 3, t* / 3) with prod_i (L_i - 2 delta) > measure. Each
    factor lives on the centred interval of length L_i - delta / 2 and has
    residual measure above L_i - 3 delta / 2.

    Raises:
        InfeasibleError: If measure >= volume(box)
    """
    target = Fraction(measure) if isinstance(measure, Fraction) else Fraction(repr(float(measure)))
    volume = box.volume
    if target >= volume:
        raise InfeasibleError(f"Measure {float(target)} is not below the box volume {float(volume)}")
    target = max(target, Fraction(0))

    lengths = [Fraction(hi) - Fraction(lo) for lo, hi in box.intervals]
    shortest = min(lengths)

    def excess(t: float) -> float:
        return float(np.prod([float(L) - t for L in lengths])) - float(target)

    t_star = float(shortest) if target == 0 else brentq(excess, 0.0, float(shortest))
    delta = _dyadic_delta(min(float(shortest) / 3, t_star / 3))

    def product_after(d: Fraction) -> Fraction:
        total = Fraction(1)
        for L in lengths:
            total *= L - 2 * d
        return total

    while product_after(delta) <= target:
        delta /= 2

    factors = []
    for (lo, hi), L in zip(box.intervals, lengths):
        inner = (float(Fraction(lo) + delta / 4), float(Fraction(hi) - delta / 4))
        factors.append(fat_cantor_build(inner, float(L - 3 * delta / 2), depth=depth))
    product = ProductObstacle(tuple(factors))
    logger.debug(f"Fat Cantor product in {box}: delta={delta}, measure={product.exact_measure()}")
    return product


def big_measure_obstacle(
    box: OpenBox,
    lambda0: float,
    max_level: int = 6,
    depth: int = 12
) -> Tuple[ObstacleSet, Fraction]:
    """Union of fat Cantor products with exact measure above ``lambda0``.

    Cubes of the dyadic decomposition of the box are taken largest first
    until their volumes sum to lambda1 > lambda0; each cube then receives a
    product of measure above (lambda0 / lambda1) times its volume.

    Returns:
        (obstacle, exact measure)

    Raises:
        InfeasibleError: If lambda0 >= volume(box), or the cubes up to
            ``max_level`` cannot exceed lambda0
    """
    volume = box.volume
    target = Fraction(repr(float(lambda0)))
    if target >= volume:
        raise InfeasibleError(f"lambda0={lambda0} is not below the box volume {float(volume)}")
    if target < 0:
        return EmptyObstacle(), Fraction(0)

    decomposition = dyadic_decompose(box, max_level)
    selected, total = [], Fraction(0)
    for cube in decomposition.cubes:
        if total > target:
            break
        selected.append(cube)
        total += cube.volume
    if total <= target:
        raise InfeasibleError(
            f"Dyadic cubes up to level {max_level} cover {float(total)}, not more than lambda0={lambda0}"
        )

    members = tuple(
        fat_cantor_product(cube.as_box(), target / total * cube.volume, depth=depth)
        for cube in selected
    )
    obstacle = UnionObstacle(members)
    measure = obstacle.exact_measure()
    logger.info(f"Big-measure obstacle: {len(members)} cubes, lambda1={total}, measure={float(measure):.6f}")
    return obstacle, measure


def fat_cantor_box_scenario(depth: int = 12) -> NamedScenario:
    """Product of two fat Cantor sets inside (0,1)^2 under a flat connection."""
    box = OpenBox(((0.0, 1.0), (0.0, 1.0)))
    C = fat_cantor_build((0.25, 0.75), 0.25, depth=depth)
    F = BiSlab(
        first=HalfSlab(b=0.25, slab_axis=0, thin_axis=1, C=C),
        second=HalfSlab(b=0.25, slab_axis=1, thin_axis=0, C=C),
    )
    connection, section = smooth_product_connection(box, shift=0.5, name="fat-cantor-box")
    return NamedScenario(
        name="fat-cantor-box",
        title="Fat Cantor product in the unit square: extensions in both axis orders agree",
        box=box, connection=connection, section=section, obstacle=F,
        expected_verdict=Verdict.EXTENDED, pipeline="bislab",
        tolerances=Tolerances(agreement=1e-6, residual=1e-3),
        metadata={"obstacle_measure": str(C.residual_measure() ** 2)},
    )


def big_measure_scenario(lambda0: float = 1.2, box: Optional[OpenBox] = None, max_level: int = 6) -> NamedScenario:
    """Standard connection and a constant section over a big-measure obstacle."""
    box = box or OpenBox(((0.0, 2.0), (0.0, 1.0)))
    obstacle, measure = big_measure_obstacle(box, lambda0, max_level)
    return NamedScenario(
        name="big-measure",
        title=f"Obstacle of measure above {lambda0} that a constant section crosses",
        box=box,
        connection=standard_connection(box.dim, 1, box),
        section=lambda points: np.ones((np.atleast_2d(points).shape[0], 1)),
        obstacle=obstacle,
        expected_verdict=Verdict.EXTENDED,
        pipeline="scan",
        tolerances=Tolerances(agreement=1e-6, residual=1e-6),
        metadata={"lambda0": lambda0, "obstacle_measure": str(measure)},
        count_components=True,
    )


# ============================================================================
# Hyperplane patches
# ============================================================================

PATCH_CONNECTIONS = ("standard", "noextension", "cantor-c0")


def hyperplane_patch_scenario(connection: str = "standard", variant: str = "patch") -> NamedScenario:
    """Half-hyperplane with boundary in a flat region of a registry connection.

    ``variant="full"`` (standard connection only) uses the whole hyperplane
    {x_2 = 1/2} with the section 0 below and 1 above, which cannot extend.
    """
    if variant == "full":
        if connection != "standard":
            raise PreconditionError("The full-hyperplane variant uses the standard connection")
        box = OpenBox(((0.0, 1.0), (0.0, 1.0)))
        return NamedScenario(
            name="hyperplane-patch",
            title="Full hyperplane separating two different constants",
            box=box,
            connection=standard_connection(2, 1, box),
            section=lambda points: _column(np.atleast_2d(points)[:, 1] > 0.5),
            obstacle=HyperplanePatch(axis=1, level=0.5),
            expected_verdict=Verdict.OBSTRUCTED,
            pipeline="scan",
            tolerances=Tolerances(agreement=1e-6, residual=1e-6),
            metadata={"variant": "full", "connection": connection},
        )
    if variant != "patch":
        raise PreconditionError(f"Unknown hyperplane-patch variant '{variant}' (patch, full)")

    if connection == "standard":
        box = OpenBox(((0.0, 1.0), (0.0, 1.0)))
        conn = standard_connection(2, 1, box)
        section = lambda points: np.ones((np.atleast_2d(points).shape[0], 1))
        patch = HyperplanePatch(axis=1, level=0.5, constraints=((0, 0.25, np.inf),))
    elif connection == "noextension":
        source = noextension_scenario(2)
        box = OpenBox(((-2.0, 2.0), (0.25, 2.0)))
        conn, section = source.connection, source.section
        patch = HyperplanePatch(axis=1, level=1.0, constraints=((0, -0.5, np.inf),))
    elif connection == "cantor-c0":
        source = cantor_c0_scenario(2)
        box = OpenBox(((-1.0, 1.0), (1.1, 1.9)))
        conn, section = source.connection, source.section
        patch = HyperplanePatch(axis=1, level=1.5, constraints=((0, 0.0, np.inf),))
    else:
        raise PreconditionError(
            f"Unknown connection '{connection}' for hyperplane patches ({', '.join(PATCH_CONNECTIONS)})"
        )

    return NamedScenario(
        name="hyperplane-patch",
        title=f"Half-hyperplane with boundary under the {connection} connection",
        box=box, connection=conn, section=section, obstacle=patch,
        expected_verdict=Verdict.EXTENDED, pipeline="scan",
        tolerances=Tolerances(agreement=1e-6, residual=1e-2),
        metadata={"variant": "patch", "connection": connection},
    )


def standard_scenario(n: int = 2, box: Optional[OpenBox] = None) -> NamedScenario:
    """Standard connection, constant section off a ternary half-slab.

    The half-slab starts at the midpoint of axis 1 and its thin set is the
    ternary set on the box interval of axis 2.
    """
    box = box or OpenBox.cube(n, 0.0, 1.0)
    n = box.dim
    if n < 2:
        raise PreconditionError(f"The half-slab scenario needs n >= 2, got n={n}")
    (lo1, hi1), (lo2, hi2) = box.intervals[0], box.intervals[1]
    return NamedScenario(
        name="standard",
        title="Standard connection: a constant section extends over a ternary half-slab",
        box=box,
        connection=standard_connection(n, 1, box),
        section=lambda points: np.ones((np.atleast_2d(points).shape[0], 1)),
        obstacle=HalfSlab(b=(lo1 + hi1) / 2, slab_axis=0, thin_axis=1, C=CantorLikeSet.ternary(lo2, hi2)),
        expected_verdict=Verdict.EXTENDED,
        pipeline="slab",
        tolerances=Tolerances(agreement=1e-6, residual=1e-6),
        resolution=128 if n == 2 else 32,
    )
