import dataclasses

import numpy as np
import pytest

from optvisit import lattice
from optvisit.scenario import eval_switch_cost, target_distance
from optvisit.solver import SpaceTimeGrid, interpolate, solve_all
from optvisit.synthesis import (Decision, NoDecisionError, feedback_policy, synthesize_trajectory,
                                verify_plan)

from conftest import make


@pytest.fixture(scope="module")
def eikonal_art():
    from conftest import load_doc
    from optvisit.scenario import scenario_from_dict
    s = scenario_from_dict(load_doc("eikonal_2d.json"))
    return solve_all(s, SpaceTimeGrid.for_scenario(s, 41, 50))


def test_switch_inside_target(eikonal_art):
    dec = feedback_policy(eikonal_art, [0.5, 0.52], 0.2, 0)
    assert dec == Decision("switch", 0.0, target=1)


def test_always_switch_at_horizon(two_balls_coarse):
    for x in ([0.1, 0.5], [0.9, 0.9], [0.5, 0.5]):
        assert feedback_policy(two_balls_coarse, x, 1.0, 0).kind == "switch"


def test_no_decision_in_final_state(two_balls_coarse):
    with pytest.raises(NoDecisionError):
        feedback_policy(two_balls_coarse, [0.1, 0.1], 0.0, 3)


def test_eikonal_policy_stops_immediately(eikonal_art):
    s = eikonal_art.scenario
    for x0 in ([0.1, 0.1], [0.93, 0.37], [0.5, 0.05]):
        dec = feedback_policy(eikonal_art, x0, 0.0, 0)
        assert dec.kind == "switch" and dec.target == 1
        plan = synthesize_trajectory(eikonal_art, x0, 0.0, 0)
        assert len(plan.switches) == 1 and plan.switches[0][0] == 0.0
        assert plan.achieved_cost == pytest.approx(float(target_distance(s, x0, 1)), abs=1e-12)


def test_immediate_full_switch_plan(eikonal_art):
    s = eikonal_art.scenario
    plan = synthesize_trajectory(eikonal_art, [0.2, 0.8], 0.0, 0)
    assert plan.switches[0][1:3] == (0, 1)
    assert plan.achieved_cost == eval_switch_cost(s, [0.2, 0.8], 0, 1)
    assert abs(verify_plan(plan).gap) <= 1e-9


def test_two_ball_plan_bounds(two_balls_coarse):
    art = two_balls_coarse
    g = art.grid
    tol = 3 * (float(np.max(g.dx)) + g.dt)
    for x0 in ([0.1, 0.5], [0.5, 0.9], [0.9, 0.1], [0.05, 0.45]):
        plan = synthesize_trajectory(art, x0, 0.0, 0)
        rep = verify_plan(plan)
        assert rep.ok, rep.problems
        assert plan.predicted_cost == interpolate(art.fields[0], x0, 0.0)
        assert plan.achieved_cost <= plan.predicted_cost * 1.05 + 0.05
        assert plan.achieved_cost >= plan.predicted_cost - tol
        assert len(plan.switches) <= 2
        times = [sw[0] for sw in plan.switches]
        assert times == sorted(times)


def test_plan_from_intermediate_state(two_balls_coarse):
    plan = synthesize_trajectory(two_balls_coarse, [0.2, 0.2], 0.3, 0b01)
    assert verify_plan(plan).ok
    assert len(plan.switches) == 1 and plan.switches[0][2] == 3


def test_plan_from_final_state(two_balls_coarse):
    plan = synthesize_trajectory(two_balls_coarse, [0.2, 0.2], 0.0, 3)
    assert plan.achieved_cost == 0.0 and plan.switches == []


def test_plan_is_deterministic(two_balls_coarse):
    a = synthesize_trajectory(two_balls_coarse, [0.1, 0.5], 0.0, 0)
    b = synthesize_trajectory(two_balls_coarse, [0.1, 0.5], 0.0, 0)
    assert a.trajectory.to_csv(2) == b.trajectory.to_csv(2)
    assert a.achieved_cost == b.achieved_cost


def test_achieved_cost_matches_switching_evaluator(two_balls_coarse):
    from optvisit.hybrid import evaluate_switching_cost
    plan = synthesize_trajectory(two_balls_coarse, [0.1, 0.5], 0.0, 0)
    assert plan.achieved_cost == evaluate_switching_cost(
        two_balls_coarse.scenario, plan.x0, 0.0, 0, plan.control_string)


def test_verify_flags_illegal_chain(two_balls_coarse):
    plan = synthesize_trajectory(two_balls_coarse, [0.1, 0.5], 0.0, 0)
    bad = dataclasses.replace(plan, switches=[(0.0, 0, 0b01, (0.1, 0.5), 0.0),
                                              (0.1, 0b10, 0b11, (0.1, 0.5), 0.0)])
    rep = verify_plan(bad)
    assert not rep.legal and not rep.ok
    bad = dataclasses.replace(plan, switches=[(0.0, 0b01, 0b01, (0.1, 0.5), 0.0)])
    assert not verify_plan(bad).legal


def test_verify_flags_memory_reset(two_balls_coarse):
    plan = synthesize_trajectory(two_balls_coarse, [0.1, 0.5], 0.0, 0)
    traj = dataclasses.replace(plan.trajectory, memory=plan.trajectory.memory + [0])
    assert not verify_plan(dataclasses.replace(plan, trajectory=traj)).monotone


def test_switch_count_bounded_three_targets(three_targets_1d):
    art = three_targets_1d
    n = art.scenario.n_targets
    for x0 in (0.0, 0.3, 0.6, 1.0):
        for p0 in range(7):
            plan = synthesize_trajectory(art, [x0], 0.0, p0)
            assert len(plan.switches) <= n - lattice.popcount(p0)
            assert verify_plan(plan).ok
