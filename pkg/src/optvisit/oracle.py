"""Brute-force value functions on tiny instances and structural checks of solved fields.

The enumeration runs over piecewise-constant controls on a coarse time grid,
switching instants on the same grid (equal instants allowed) and every legal
destination chain.  It reuses :func:`optvisit.hybrid.euler_step`, so any
disagreement with the PDE solver is discretization error, not a modelling gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice
from .hybrid import ControlSignal, HybridControlString, discount, euler_step
from .scenario import Scenario, eval_switch_cost
from .solver import SolveArtifacts, interpolate, obstacle_slice


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoarseInstance:
    scenario: Scenario
    steps: int = 8
    budget: int = 5_000_000

    def __post_init__(self):
        s = self.scenario
        if s.dim > 2 or s.n_targets > 2 or len(s.controls) > 5:
            raise ValueError("coarse instances need dim <= 2, at most 2 targets and 5 controls")
        if not 1 <= self.steps <= 10:
            raise ValueError("oracle grid must have 1..10 steps")

    @property
    def dt(self) -> float:
        return self.scenario.horizon / self.steps

    def time_index(self, t: float) -> int:
        k = round(t / self.dt)
        if abs(k * self.dt - t) > 1e-9 or not 0 <= k <= self.steps:
            raise ValueError(f"time {t} is not on the oracle grid")
        return k

    def time(self, k: int) -> float:
        return self.scenario.horizon if k == self.steps else k * self.dt

    def n_strings(self, p: int, k: int = 0) -> int:
        """Number of (control sequence, switch structure) pairs from slice ``k``."""
        s = self.scenario
        n = s.n_targets
        remaining = self.steps - k

        def chains(q):
            if q == s.final_state:
                return {0: 1}
            out: dict[int, int] = {}
            for r in lattice.successors(q, n):
                for m, c in chains(r).items():
                    out[m + 1] = out.get(m + 1, 0) + c
            return out

        structures = sum(c * math.comb(remaining + m, m) for m, c in chains(p).items())
        return len(s.controls) ** remaining * structures


def _check_budget(ci: CoarseInstance, p: int, k: int) -> None:
    need = ci.n_strings(p, k)
    if need > ci.budget:
        raise BudgetExceededError(f"{need} control strings exceed the budget of {ci.budget}")


def brute_force_search(ci: CoarseInstance, x, t: float, p: int, prune: bool = True
                       ) -> tuple[float, HybridControlString | None]:
    """Minimum switching cost over all enumerable strings, and one minimizer."""
    s = ci.scenario
    pbar = s.final_state
    k0 = ci.time_index(t)
    if p == pbar:
        return 0.0, None
    _check_budget(ci, p, k0)
    A = s.control_array
    n = s.n_targets
    best = math.inf
    witness = None
    controls: list[int] = []
    switches: list[tuple[int, int]] = []

    def visit(k, y, q, acc):
        nonlocal best, witness
        if prune and acc >= best:
            return
        for r in lattice.successors(q, n):
            c = acc + discount(s, ci.time(k) - t) * float(eval_switch_cost(s, y, q, r))
            switches.append((k, r))
            if r == pbar:
                if c < best:
                    best, witness = c, (list(controls), list(switches))
            else:
                visit(k, y, r, c)
            switches.pop()
        if k < ci.steps:
            for i, a in enumerate(A):
                y1, incr = euler_step(s, y, a, q, ci.time(k), ci.time(k + 1), t)
                controls.append(i)
                visit(k + 1, y1, q, acc + incr)
                controls.pop()

    visit(k0, np.asarray(x, dtype=float), p, 0.0)
    ctrl, sw = witness
    samples = [A[i] for i in ctrl] + [A[0]] * (ci.steps - k0 - len(ctrl))
    alpha = ControlSignal(t, ci.dt, np.asarray(samples if samples else [A[0]]))
    u = HybridControlString(alpha, tuple(ci.time(k) for k, _ in sw), tuple(r for _, r in sw[:-1]))
    return best, u


def brute_force_value(ci: CoarseInstance, x, t: float, p: int, prune: bool = True) -> float:
    return brute_force_search(ci, x, t, p, prune)[0]


def brute_force_cascade(ci: CoarseInstance, x, t: float, p: int) -> float:
    """Nested stopping problems: each level stops onto brute-forced lower-level values."""
    s = ci.scenario
    n = s.n_targets
    pbar = s.final_state
    A = s.control_array
    memo: dict[tuple[int, int, bytes], float] = {}

    def value(q, k, y):
        if q == pbar:
            return 0.0
        key = (q, k, y.tobytes())
        if key in memo:
            return memo[key]
        t_ref = ci.time(k)
        best = math.inf

        def visit(j, z, acc):
            nonlocal best
            if acc >= best:
                return
            stop = min(float(eval_switch_cost(s, z, q, r)) + value(r, j, z)
                       for r in lattice.successors(q, n))
            best = min(best, acc + discount(s, ci.time(j) - t_ref) * stop)
            if j < ci.steps:
                for a in A:
                    z1, incr = euler_step(s, z, a, q, ci.time(j), ci.time(j + 1), t_ref)
                    visit(j + 1, z1, acc + incr)

        visit(k, y, 0.0)
        memo[key] = best
        return best

    k0 = ci.time_index(t)
    if p != pbar:
        _check_budget(ci, p, k0)
    return value(p, k0, np.asarray(x, dtype=float))


# --------------------------------------------------------------------------
# checks on solved fields


@dataclass
class CheckReport:
    mode: str
    passed: bool
    max_violation: float
    tol: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "passed": self.passed, "max_violation": self.max_violation,
                "tol": self.tol, **self.details}


def check_obstacle(art: SolveArtifacts, tol: float = 1e-12) -> CheckReport:
    """``W_p <= psi_p`` everywhere, ``W_p = psi_p`` at ``T`` and ``W_p̄ = 0``."""
    s, g = art.scenario, art.grid
    worst = 0.0
    terminal = 0.0
    negative = 0.0
    final = 0.0
    for p, fld in art.fields.items():
        negative = max(negative, float(-fld.values.min()))
        if p == s.final_state:
            final = float(np.abs(fld.values).max())
            continue
        for k in range(g.steps + 1):
            psi = obstacle_slice(art, p, k)
            worst = max(worst, float((fld.values[k] - psi).max()))
            if k == g.steps:
                terminal = max(terminal, float(np.abs(fld.values[k] - psi).max()))
    worst = max(worst, 0.0)
    bad = max(worst, terminal, negative, final)
    return CheckReport("obstacle", bool(bad <= tol), bad, tol,
                       {"obstacle_violation": worst, "terminal_mismatch": terminal,
                        "negativity": negative, "final_state_max": final})


def dpp_gap(art: SolveArtifacts, p: int, x, k: int, controls) -> float:
    """``W(x, t_k) - [cost along controls + discounted W at the end]``; <= 0 up to scheme error."""
    s, g = art.scenario, art.grid
    fld = art.field_for(p)
    t = g.times[k]
    y = np.asarray(x, dtype=float)
    run = 0.0
    for j, a in enumerate(controls):
        y, incr = euler_step(s, y, np.asarray(a, float), p, g.times[k + j], g.times[k + j + 1], t)
        run += incr
    t_end = g.times[k + len(controls)]
    rhs = run + discount(s, t_end - t) * interpolate(fld, y, t_end)
    return interpolate(fld, np.asarray(x, dtype=float), t) - rhs


def check_dpp(art: SolveArtifacts, samples: int = 100, tol: float | None = None,
              seed: int = 0) -> CheckReport:
    s, g = art.scenario, art.grid
    if tol is None:
        tol = 3.0 * (float(np.max(g.dx)) + g.dt)
    rng = np.random.default_rng(seed)
    states = [p for p in sorted(art.fields) if p != s.final_state]
    A = s.control_array
    worst = -math.inf
    violations = 0
    for _ in range(samples):
        p = states[rng.integers(len(states))]
        x = rng.uniform(s.box_lo, s.box_hi)
        k = int(rng.integers(g.steps))
        j = int(rng.integers(1, g.steps - k + 1))
        ctrl = A[rng.integers(len(A), size=j)]
        gap = dpp_gap(art, p, x, k, ctrl)
        worst = max(worst, gap)
        violations += gap > tol
    obstacle = check_obstacle(art)
    return CheckReport("dpp", bool(violations == 0 and obstacle.passed), max(worst, 0.0), tol,
                       {"samples": samples, "violations": int(violations), "seed": seed,
                        "obstacle_violation": obstacle.max_violation})


def check_equivalence(ci: CoarseInstance, probes, art: SolveArtifacts | None = None,
                      tol_cascade: float = 1e-9, tol_solver: float = 0.1) -> CheckReport:
    """Switching value vs cascade of stopping values (and vs the solver, when given)."""
    n = ci.scenario.n_targets
    rows = []
    worst_c = worst_s = 0.0
    for x, t, p in probes:
        v = brute_force_value(ci, x, t, p)
        c = brute_force_cascade(ci, x, t, p)
        row = {"x": [float(v_) for v_ in np.atleast_1d(x)], "t": float(t),
               "p": lattice.to_bits(p, n), "switching": v, "cascade": c,
               "cascade_gap": abs(v - c)}
        worst_c = max(worst_c, abs(v - c))
        if art is not None:
            w = 0.0 if p == ci.scenario.final_state else interpolate(art.field_for(p), x, t)
            row["solver"] = w
            row["solver_gap"] = abs(v - w)
            worst_s = max(worst_s, abs(v - w))
        rows.append(row)
    passed = worst_c <= tol_cascade and (art is None or worst_s <= tol_solver)
    return CheckReport("equivalence", bool(passed), max(worst_c, worst_s), tol_solver,
                       {"tol_cascade": tol_cascade, "max_cascade_gap": worst_c,
                        "max_solver_gap": worst_s, "probes": rows})
