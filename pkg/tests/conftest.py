import copy
import json
from pathlib import Path

import pytest

from optvisit.scenario import scenario_from_dict
from optvisit.solver import SpaceTimeGrid, solve_all

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def load_doc(name):
    return json.loads((SCENARIOS / name).read_text())


@pytest.fixture
def doc_1d():
    """One box target in 1D with controls {-1, 0, 1}."""
    return {
        "dim": 1,
        "box": {"lo": [0.0], "hi": [1.0]},
        "horizon": 1.0,
        "targets": [{"box": {"lo": [0.6], "hi": [0.7]}}],
    }


@pytest.fixture
def eikonal_doc():
    return load_doc("eikonal_2d.json")


@pytest.fixture
def two_balls_doc():
    return load_doc("two_balls_2d.json")


@pytest.fixture
def coarse_doc():
    return load_doc("coarse_1d.json")


def make(doc, **changes):
    doc = copy.deepcopy(doc)
    doc.update(changes)
    return scenario_from_dict(doc)


@pytest.fixture(scope="session")
def two_balls_coarse():
    """Two-ball scenario solved on a cheap grid; shared by several modules."""
    s = scenario_from_dict(load_doc("two_balls_2d.json"))
    return solve_all(s, SpaceTimeGrid.for_scenario(s, 21, 25))


@pytest.fixture(scope="session")
def three_targets_1d():
    s = scenario_from_dict({
        "dim": 1,
        "box": {"lo": [0.0], "hi": [1.0]},
        "horizon": 1.0,
        "discount": 0.5,
        "targets": [{"box": {"lo": [0.1], "hi": [0.15]}},
                    {"box": {"lo": [0.45], "hi": [0.5]}},
                    {"ball": {"center": [0.85], "radius": 0.05}}],
        "running_cost": {"family": "time_affine", "c0": 0.5, "c1": 1.0},
    })
    return solve_all(s, SpaceTimeGrid.for_scenario(s, 41, 40))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
