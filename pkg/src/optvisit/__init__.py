"""Hybrid-control solver toolkit for the optimal visiting problem."""

__version__ = "0.1.0"

from .estimator import VisitingValueSolver  # noqa: E402
from .scenario import Scenario, ScenarioError, parse_scenario  # noqa: E402

__all__ = ["VisitingValueSolver", "Scenario", "ScenarioError", "parse_scenario", "__version__"]
