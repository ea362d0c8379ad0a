"""
Scenario Registry for BundleLab.

Maps registry names to scenario builders, applies dimension, variant and box
overrides, and builds inline experiments from a run configuration.
"""

from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence
import json
import logging

import numpy as np
from scipy.linalg import expm

from obstacles import BiSlab, HalfSlab, parse_obstacle
from scenarios.counterexamples import (
    NamedScenario,
    big_measure_scenario,
    cantor_c0_scenario,
    fat_cantor_box_scenario,
    hyperplane_patch_scenario,
    noextension_scenario,
    standard_scenario,
)
from transport_core.connection import constant_connection, standard_connection
from transport_core.exceptions import ConfigurationError, PreconditionError, UnknownScenarioError
from transport_core.extension import Tolerances, Verdict
from transport_core.sets import OpenBox


logger = logging.getLogger(__name__)

CATALOG_PATH = Path(__file__).parent / "catalog.json"


@lru_cache(maxsize=1)
def load_catalog() -> Dict[str, Dict]:
    """Catalog entries keyed by scenario id."""
    with open(CATALOG_PATH, encoding="utf-8") as f:
        data = json.load(f)
    return {entry["id"]: entry for entry in data["scenarios"]}


class ScenarioRegistry:
    """Registry of named scenarios.

    Example:
        ```python
        registry = ScenarioRegistry()
        scenario = registry.build("noextension", dim=3)
        ```
    """

    def __init__(self):
        """Initialize the registry with the built-in scenarios."""
        self._builders: Dict[str, Callable[..., NamedScenario]] = {
            "standard": self._standard,
            "noextension": self._noextension,
            "cantor-c0": self._cantor_c0,
            "fat-cantor-box": self._fat_cantor_box,
            "big-measure": self._big_measure,
            "hyperplane-patch": self._hyperplane_patch,
        }

    @property
    def names(self) -> List[str]:
        return list(self._builders)

    def build(
        self,
        name: str,
        dim: Optional[int] = None,
        variant: Optional[str] = None,
        connection: Optional[str] = None,
        box: Optional[OpenBox] = None,
        lambda0: Optional[float] = None,
        offset: Optional[Sequence[float]] = None,
        depth: int = 12
    ) -> NamedScenario:
        """Build a scenario by name.

        Raises:
            UnknownScenarioError: If the name is not registered
            ConfigurationError: If an override does not apply to the scenario
        """
        builder = self._builders.get(name)
        if builder is None:
            raise UnknownScenarioError(
                f"Unknown scenario: {name}. "
                f"Registered scenarios: {', '.join(self._builders)}"
            )
        if box is not None and name not in ("standard", "big-measure"):
            raise ConfigurationError(f"Scenario '{name}' has a fixed box; --box applies to standard and big-measure")
        if dim is not None and name in ("fat-cantor-box", "big-measure", "hyperplane-patch") and dim != 2:
            raise ConfigurationError(f"Scenario '{name}' is two-dimensional")

        scenario = builder(dim=dim, variant=variant, connection=connection, box=box,
                           lambda0=lambda0, offset=offset, depth=depth)
        logger.info(f"Built scenario {name}: {scenario.title}")
        return scenario

    def _standard(self, dim, box, **_):
        if box is not None and dim is not None and box.dim != dim:
            raise ConfigurationError(f"--box has {box.dim} intervals but --dim is {dim}")
        return standard_scenario(dim or 2, box=box)

    def _noextension(self, dim, offset, **_):
        return noextension_scenario(dim or 2, offset=offset)

    def _cantor_c0(self, dim, variant, depth, **_):
        return cantor_c0_scenario(dim or 2, variant=variant or "cantor", depth=depth)

    def _fat_cantor_box(self, depth, **_):
        return fat_cantor_box_scenario(depth=depth)

    def _big_measure(self, box, lambda0, **_):
        return big_measure_scenario(lambda0=1.2 if lambda0 is None else lambda0, box=box)

    def _hyperplane_patch(self, variant, connection, **_):
        return hyperplane_patch_scenario(connection=connection or "standard", variant=variant or "patch")


# Global registry instance
_registry: Optional[ScenarioRegistry] = None


def get_registry() -> ScenarioRegistry:
    """Get the global registry instance."""
    global _registry
    if _registry is None:
        _registry = ScenarioRegistry()
    return _registry


def build_scenario(name: str, **overrides) -> NamedScenario:
    """Shorthand for ``get_registry().build(name, **overrides)``."""
    return get_registry().build(name, **overrides)


def _commute(matrices: Sequence[np.ndarray]) -> bool:
    return all(
        np.allclose(a @ b, b @ a, atol=1e-12)
        for i, a in enumerate(matrices) for b in matrices[i + 1:]
    )


def inline_scenario(
    box: OpenBox,
    obstacle: str,
    matrices: Optional[Sequence[Sequence[Sequence[float]]]] = None,
    section_kind: str = "constant",
    section_value: Sequence[float] = (1.0,),
    expected: Optional[str] = None,
    tolerances: Tolerances = Tolerances(),
    resolution: int = 128,
    depth: int = 12
) -> NamedScenario:
    """Experiment from a box, constant connection matrices and an obstacle descriptor.

    The section is either the constant ``section_value`` or, for commuting
    matrices A_i, the parallel section exp(-sum_i (x_i - lo_i) A_i) v with
    v = ``section_value``.

    Raises:
        ConfigurationError: If the matrices do not match the box or the section
        DescriptorParseError: If the obstacle descriptor is malformed
    """
    n = box.dim
    if matrices is None:
        conn = standard_connection(n, len(section_value), box)
        mats = [np.zeros((conn.rank, conn.rank))] * n
    else:
        mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in matrices]
        if len(mats) != n:
            raise ConfigurationError(f"Need {n} connection matrices for a {n}-dimensional box, got {len(mats)}")
        try:
            conn = constant_connection(mats, box, name="inline")
        except PreconditionError as e:
            raise ConfigurationError(str(e)) from e

    v = np.asarray(section_value, dtype=float)
    if v.size != conn.rank:
        raise ConfigurationError(f"Section value has {v.size} entries, connection rank is {conn.rank}")

    if section_kind == "parallel":
        if not _commute(mats):
            raise ConfigurationError("A closed-form parallel section needs commuting connection matrices")
        lows = box.lows

        def section(points):
            shifted = np.atleast_2d(points) - lows
            return np.stack([expm(-np.einsum("i,iab->ab", x, np.stack(mats))) @ v for x in shifted])
    elif section_kind == "constant":
        def section(points):
            return np.tile(v, (np.atleast_2d(points).shape[0], 1))
    else:
        raise ConfigurationError(f"Unknown section kind '{section_kind}' (constant, parallel)")

    F = parse_obstacle(obstacle, box, depth)
    if isinstance(F, HalfSlab):
        pipeline = "slab"
    elif isinstance(F, BiSlab):
        pipeline = "bislab"
    else:
        pipeline = "scan"

    return NamedScenario(
        name="inline",
        title=f"Inline experiment: {conn.name} connection, obstacle {F.describe()}",
        box=box,
        connection=conn,
        section=section,
        obstacle=F,
        expected_verdict=Verdict(expected) if expected else Verdict.EXTENDED,
        pipeline=pipeline,
        tolerances=tolerances,
        resolution=resolution,
        metadata={"expected_given": expected is not None},
    )
