"""
Scenario pipeline runner.

A run builds the sampled input section, checks that it is parallel off the
obstacle, extends it with the scenario's pipeline (half-slab, bi-slab or
maximal-extension scan), runs the obstruction detectors the scenario
carries and reaches a verdict.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
import logging
import time

from obstacles import BiSlab, HalfSlab
from scenarios.counterexamples import NamedScenario
from transport_core.connection import SampledSection, covariant_residual
from transport_core.exceptions import InconsistencyError, InputIntegrityError
from transport_core.extension import (
    DifferentiabilityVerdict,
    Evidence,
    ExtensionReport,
    JumpResult,
    MaximalRegion,
    ResidualPolicy,
    Tolerances,
    Verdict,
    detect_jump,
    detect_nondifferentiability,
    extend_bidirectional,
    extend_slab,
    maximal_extension_scan,
)
from transport_core.logging_config import StructuredLogger
from transport_core.sets import Grid, complement_components


logger = logging.getLogger(__name__)
structured = StructuredLogger(__name__)


@dataclass(eq=False)
class RunResult:
    """Outcome of one scenario run.

    Attributes:
        scenario: Scenario that was run
        grid: Grid of the run
        tolerances: Tolerances the verdict was taken at
        verdict: Observed verdict
        evidence: Evidence for an obstructed verdict
        input_section: Sampled input section
        report: Slab or bi-slab extension report
        region: Maximal extension region of a scan
        jump: Jump detector result
        quotients: Difference-quotient verdicts at divergent sample points
        controls: Difference-quotient verdicts at control points
        measurements: Further facts (component count, obstacle measure, ...)
        elapsed_s: Wall time of the run
    """
    scenario: NamedScenario
    grid: Grid
    tolerances: Tolerances
    verdict: Verdict
    evidence: List[Evidence] = field(default_factory=list)
    input_section: Optional[SampledSection] = None
    report: Optional[ExtensionReport] = None
    region: Optional[MaximalRegion] = None
    jump: Optional[JumpResult] = None
    quotients: List[DifferentiabilityVerdict] = field(default_factory=list)
    controls: List[DifferentiabilityVerdict] = field(default_factory=list)
    measurements: Dict[str, Any] = field(default_factory=dict)
    elapsed_s: float = 0.0

    @property
    def expected(self) -> Verdict:
        return self.scenario.expected_verdict

    @property
    def matches(self) -> bool:
        return self.verdict == self.expected

    @property
    def extended(self) -> Optional[SampledSection]:
        if self.report is not None:
            return self.report.extended
        if self.region is not None:
            return self.region.section
        return None

    def to_dict(self) -> Dict[str, Any]:
        """Deterministic summary (no timings)."""
        data: Dict[str, Any] = {
            "scenario": self.scenario.name,
            "title": self.scenario.title,
            "box": [list(interval) for interval in self.scenario.box.intervals],
            "grid": list(self.grid.shape),
            "obstacle": self.scenario.obstacle.describe(),
            "pipeline": self.scenario.pipeline,
            "tolerances": {
                "agreement": self.tolerances.agreement,
                "residual": self.tolerances.residual,
                "step": self.tolerances.step,
            },
            "expected_verdict": self.expected.value,
            "verdict": self.verdict.value,
            "matches": self.matches,
            "evidence": [e.to_dict() for e in self.evidence],
            "measurements": dict(self.measurements),
        }
        if self.report is not None:
            data["extension"] = self.report.to_dict()
        if self.region is not None:
            data["scan"] = {
                "iterations": self.region.iterations,
                "extended_nodes": self.region.extended_count,
                "obstacle_nodes": int(self.region.obstacle_mask.sum()),
                "frontier_nodes": len(self.region.frontier),
                "full": self.region.is_full,
            }
        if self.jump is not None:
            data["jump"] = {
                "limit_below": self.jump.limit_below.tolist(),
                "limit_above": self.jump.limit_above.tolist(),
                "jump": self.jump.jump,
                "threshold": self.jump.threshold,
            }
        if self.quotients or self.controls:
            data["quotients"] = [
                {"point": list(q.point), "verdict": q.verdict, "quotients": list(q.quotients), "role": role}
                for role, group in (("sample", self.quotients), ("control", self.controls))
                for q in group
            ]
        return data


class ScenarioRunner:
    """Runs a named scenario through its pipeline.

    Example:
        ```python
        runner = ScenarioRunner(window=5, depth=12)
        result = runner.run(build_scenario("noextension"))
        print(result.verdict, result.matches)
        ```
    """

    def __init__(
        self,
        window: int = 5,
        depth: int = 12,
        policy: Optional[ResidualPolicy] = None
    ):
        """Initialize the runner.

        Args:
            window: Window width of maximal-extension scans
            depth: Construction depth for grid membership of obstacles
            policy: Residual policy override for the non-slab axes of slab runs
        """
        self.window = window
        self.depth = depth
        self.policy = policy

    def run(
        self,
        scenario: NamedScenario,
        resolution: Optional[int] = None,
        tolerances: Optional[Tolerances] = None
    ) -> RunResult:
        """Run the scenario and collect evidence.

        Raises:
            InputIntegrityError: If the input section is not parallel off the obstacle
            PreconditionError: If the scenario does not fit its pipeline
        """
        started = time.perf_counter()
        grid = scenario.grid(resolution)
        tolerances = (tolerances or scenario.tolerances).for_grid(grid)
        structured.info("Scenario run started", extra={
            "scenario": scenario.name, "grid": list(grid.shape), "pipeline": scenario.pipeline,
            "agreement_tolerance": tolerances.agreement, "residual_tolerance": tolerances.residual
        })

        section = SampledSection.from_closed_form(
            grid, scenario.section, obstacle=scenario.obstacle, depth=self.depth, rank=scenario.rank
        )
        result = RunResult(
            scenario=scenario, grid=grid, tolerances=tolerances,
            verdict=Verdict.EXTENDED, input_section=section
        )

        if scenario.pipeline == "slab":
            self._run_slab(result, section)
        elif scenario.pipeline == "bislab":
            self._run_bislab(result, section)
        else:
            self._run_scan(result, section)

        self._run_detectors(result)
        if "obstacle_measure" in scenario.metadata:
            result.measurements["obstacle_measure"] = scenario.metadata["obstacle_measure"]

        result.verdict = Verdict.OBSTRUCTED if result.evidence else Verdict.EXTENDED
        result.elapsed_s = time.perf_counter() - started
        structured.info("Scenario run complete", extra={
            "scenario": scenario.name,
            "verdict": result.verdict.value,
            "expected": result.expected.value,
            "evidence": [e.kind for e in result.evidence],
            "elapsed_s": round(result.elapsed_s, 3),
        })
        return result

    def _run_slab(self, result: RunResult, section: SampledSection) -> None:
        scenario = result.scenario
        if not isinstance(scenario.obstacle, HalfSlab):
            raise TypeError(f"The slab pipeline needs a half-slab obstacle, got {scenario.obstacle.describe()}")
        report = extend_slab(
            scenario.connection, section, scenario.obstacle,
            tolerances=result.tolerances, policy=self.policy, depth=self.depth
        )
        result.report = report
        result.evidence.extend(report.evidence)

    def _run_bislab(self, result: RunResult, section: SampledSection) -> None:
        scenario = result.scenario
        if not isinstance(scenario.obstacle, BiSlab):
            raise TypeError(f"The bi-slab pipeline needs a bi-slab obstacle, got {scenario.obstacle.describe()}")
        try:
            report = extend_bidirectional(
                scenario.connection, section, scenario.obstacle,
                tolerances=result.tolerances, depth=self.depth
            )
        except InconsistencyError as e:
            result.evidence.append(Evidence(
                kind="inconsistency", location=tuple(e.point), magnitude=e.discrepancy,
                detail="extensions along the two slab axes disagree"
            ))
            return
        result.report = report
        result.measurements["discrepancy"] = report.notes["discrepancy"]
        result.evidence.extend(report.evidence)

    def _run_scan(self, result: RunResult, section: SampledSection) -> None:
        scenario = result.scenario
        for axis in range(result.grid.dim):
            residual = covariant_residual(scenario.connection, section, axis)
            if residual.maximum > result.tolerances.residual:
                point = tuple(result.grid.coordinate(residual.argmax))
                raise InputIntegrityError(
                    f"Input section is not parallel off the obstacle: axis {axis + 1} residual "
                    f"{residual.maximum:.3e} at {point} exceeds {result.tolerances.residual:.1e}",
                    axis=axis, residual=residual.maximum
                )

        region = maximal_extension_scan(
            scenario.connection, section, scenario.obstacle, window=self.window,
            tolerances=result.tolerances, depth=self.depth
        )
        result.region = region
        if scenario.count_components:
            count, _ = complement_components(scenario.box, scenario.obstacle, result.grid, self.depth)
            result.measurements["components"] = count

        if not region.is_full:
            first = region.frontier[0] if region.frontier else tuple(
                int(i[0]) for i in (region.obstacle_mask & ~region.mask).nonzero()
            )
            result.evidence.append(Evidence(
                kind="frontier", location=tuple(float(x) for x in result.grid.coordinate(first)),
                magnitude=float(len(region.frontier)),
                detail=f"{int((region.obstacle_mask & ~region.mask).sum())} obstacle nodes not reached"
            ))

    def _run_detectors(self, result: RunResult) -> None:
        scenario = result.scenario
        site = scenario.jump_site
        if site is not None:
            jump = detect_jump(
                scenario.connection, scenario.section, site.axis, site.base, site.eps,
                agreement_tolerance=result.tolerances.agreement
            )
            result.jump = jump
            if jump.detected:
                result.evidence.append(Evidence(
                    kind="jump", location=tuple(float(x) for x in site.base), magnitude=jump.jump,
                    detail=f"one-sided limits across x{site.axis + 1} differ"
                ))

        divergence = scenario.divergence_sites
        if divergence is not None:
            result.quotients = detect_nondifferentiability(
                scenario.section, divergence.axis, divergence.points, divergence.steps
            )
            result.controls = detect_nondifferentiability(
                scenario.section, divergence.axis, divergence.controls, divergence.steps
            )
            for verdict in result.quotients:
                if verdict.verdict == "divergent":
                    result.evidence.append(Evidence(
                        kind="divergence", location=verdict.point, magnitude=verdict.quotients[-1],
                        sequence=verdict.quotients,
                        detail=f"x{divergence.axis + 1} difference quotients grow geometrically"
                    ))
            result.measurements["divergent_points"] = sum(q.verdict == "divergent" for q in result.quotients)
            result.measurements["convergent_controls"] = sum(q.verdict == "convergent" for q in result.controls)
