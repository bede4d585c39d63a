"""Feedback decisions and visiting plans extracted from solved value fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice
from .hybrid import ControlSignal, HybridControlString, Trajectory, simulate_switching
from .scenario import Scenario, eval_dynamics, eval_running_cost, eval_switch_cost, validate
from .solver import SolveArtifacts, interpolate, obstacle_psi


class NoDecisionError(ValueError):
    pass


@dataclass(frozen=True)
class Decision:
    kind: str  # "continue" or "switch"
    margin: float  # psi_p - W_p at the query point
    control: int | None = None  # index into the control set
    target: int | None = None  # destination mask


@dataclass
class VisitingPlan:
    trajectory: Trajectory
    switches: list[tuple[float, int, int, tuple[float, ...], float]]  # time, from, to, position, charge
    achieved_cost: float
    predicted_cost: float
    n_targets: int
    x0: tuple[float, ...] = ()
    t0: float = 0.0
    p0: int = 0
    control_string: HybridControlString | None = field(default=None, repr=False)


def default_stop_tol(art: SolveArtifacts) -> float:
    g = art.grid
    sup_l = validate(art.scenario).sup_running_cost
    return 2.0 * (float(np.max(g.dx)) + g.dt) * (1.0 + sup_l)


def _continuation_at(art: SolveArtifacts, p: int, x: np.ndarray, t: float) -> tuple[float, int]:
    """One semi-Lagrangian step evaluated off-grid; returns (value, control index)."""
    s, g = art.scenario, art.grid
    h = min(g.dt, s.horizon - t)
    fld = art.field_for(p)
    beta = math.exp(-s.discount * h)
    best, arg = math.inf, 0
    for i, a in enumerate(s.control_array):
        foot = x + h * eval_dynamics(s, x, a, p)
        v = h * float(eval_running_cost(s, x, a, p, t)) + beta * interpolate(fld, foot, t + h)
        if v < best:
            best, arg = v, i
    return best, arg


def _best_destination(art: SolveArtifacts, p: int, x: np.ndarray, t: float) -> int:
    s = art.scenario
    best, arg = math.inf, None
    for q in lattice.successors(p, s.n_targets):
        v = float(eval_switch_cost(s, x, p, q))
        if q != s.final_state:
            v += interpolate(art.field_for(q), x, t)
        if v < best:
            best, arg = v, q
    return arg


def feedback_policy(art: SolveArtifacts, x, t: float, p: int, stop_tol: float | None = None
                    ) -> Decision:
    """Stop-and-switch on the (numerical) contact set, otherwise the best local control.

    A switch requires both a small obstacle margin ``psi - W <= stop_tol`` and
    that stopping is no worse than the local one-step continuation; the second
    test keeps the tolerance band from triggering premature stops.
    """
    s = art.scenario
    if p == s.final_state:
        raise NoDecisionError("no decision in the final state")
    x = np.asarray(x, dtype=float)
    tol = default_stop_tol(art) if stop_tol is None else stop_tol
    w = interpolate(art.field_for(p), x, t)
    psi = obstacle_psi(art, p, x, t)
    margin = psi - w
    if t >= s.horizon - 1e-12:
        return Decision("switch", margin, target=_best_destination(art, p, x, t))
    cont, a = _continuation_at(art, p, x, t)
    if margin <= tol and psi <= cont:
        return Decision("switch", margin, target=_best_destination(art, p, x, t))
    return Decision("continue", margin, control=a)


def synthesize_trajectory(art: SolveArtifacts, x0, t0: float, p0: int, dt_sim: float | None = None,
                          stop_tol: float | None = None) -> VisitingPlan:
    s, g = art.scenario, art.grid
    n = s.n_targets
    x0 = np.asarray(x0, dtype=float)
    pbar = s.final_state
    if dt_sim is None:
        m = validate(s).sup_dynamics
        dt_sim = float(np.min(g.dx)) / (2.0 * m) if m > 0 else g.dt
    n_steps = max(1, math.ceil((s.horizon - t0) / dt_sim - 1e-9))
    h = (s.horizon - t0) / n_steps if s.horizon > t0 else dt_sim

    predicted = 0.0 if p0 == pbar else interpolate(art.field_for(p0), x0, t0)
    y = x0.copy()
    p = p0
    samples = []
    switch_times: list[float] = []
    dests: list[int] = []
    k = 0
    while p != pbar:
        now = t0 + k * h if k < n_steps else s.horizon
        while p != pbar:
            dec = feedback_policy(art, y, now, p, stop_tol)
            if dec.kind != "switch":
                break
            switch_times.append(now)
            dests.append(dec.target)
            p = dec.target
        if p == pbar:
            break
        a = s.control_array[dec.control]
        samples.append(a)
        y = y + h * eval_dynamics(s, y, a, p)
        k += 1

    if p0 == pbar:
        traj = Trajectory([t0], [x0], [p0], running=[0.0], total=[0.0])
        return VisitingPlan(traj, [], 0.0, 0.0, n, tuple(map(float, x0)), t0, p0)

    # controls after the last switch never enter the cost; pad with the first sample
    while len(samples) < n_steps:
        samples.append(s.control_array[0])
    alpha = ControlSignal(t0, h, np.asarray(samples))
    u = HybridControlString(alpha, tuple(switch_times), tuple(dests[:-1]))
    traj = simulate_switching(s, x0, t0, p0, u)
    switches = []
    prev = p0
    charges = iter(traj.switch_charges)
    for tj, q in zip(switch_times, dests):
        i = traj.times.index(min(traj.times, key=lambda v: abs(v - tj)))
        switches.append((tj, prev, q, tuple(map(float, traj.states[i])), next(charges)))
        prev = q
    return VisitingPlan(traj, switches, traj.total_cost, predicted, n, tuple(map(float, x0)), t0,
                        p0, u)


@dataclass
class PlanReport:
    gap: float
    legal: bool
    monotone: bool
    problems: list[str]

    @property
    def ok(self) -> bool:
        return self.legal and self.monotone


def verify_plan(plan: VisitingPlan, eps: float = 1e-9) -> PlanReport:
    n = plan.n_targets
    problems = []
    gap = (plan.achieved_cost - plan.predicted_cost) / max(plan.predicted_cost, eps)
    legal = True
    prev_p, prev_t = plan.p0, plan.t0
    for tj, a, b, _, _ in plan.switches:
        if a != prev_p:
            legal = False
            problems.append(f"switch at t={tj} starts from {lattice.to_bits(a, n)}, "
                            f"expected {lattice.to_bits(prev_p, n)}")
        if not lattice.is_successor(a, b, n):
            legal = False
            problems.append(f"illegal switch {lattice.to_bits(a, n)} -> {lattice.to_bits(b, n)}")
        if tj < prev_t - 1e-12:
            legal = False
            problems.append(f"switch times decrease at t={tj}")
        prev_p, prev_t = b, tj
    if prev_p != lattice.final_state(n):
        legal = False
        problems.append("plan does not end in the final state")
    mem = plan.trajectory.memory
    monotone = all(a & b == a for a, b in zip(mem, mem[1:]))
    if not monotone:
        problems.append("memory bits were unset along the trajectory")
    return PlanReport(gap, legal, monotone, problems)
