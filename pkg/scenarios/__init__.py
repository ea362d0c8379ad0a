"""
Named scenarios for BundleLab.

Closed-form connections and sections with a known extension verdict, the
registry exposing them by name, and the pipeline runner.
"""

from scenarios.counterexamples import NamedScenario, JumpSite, DivergenceSites
from scenarios.registry import ScenarioRegistry, get_registry, build_scenario, inline_scenario, load_catalog
from scenarios.runner import RunResult, ScenarioRunner

__all__ = [
    # Scenarios
    "NamedScenario",
    "JumpSite",
    "DivergenceSites",
    # Registry
    "ScenarioRegistry",
    "get_registry",
    "build_scenario",
    "inline_scenario",
    "load_catalog",
    # Runner
    "RunResult",
    "ScenarioRunner",
]
