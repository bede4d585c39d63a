"""Forward simulation of the hybrid system and exact cost evaluation.

Controls are piecewise constant on a uniform grid.  States are advanced with
explicit Euler and discounted running costs are integrated with the composite
trapezoid rule on the same grid, so every evaluator here (and the brute-force
oracle built on :func:`euler_step`) shares one error model.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import lattice
from .scenario import Scenario, eval_dynamics, eval_running_cost, eval_switch_cost

_TIME_EPS = 1e-12


class IllegalControlError(ValueError):
    pass


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant control: ``samples[k]`` acts on ``[t0 + k dt, t0 + (k+1) dt)``."""

    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "samples", np.atleast_2d(np.asarray(self.samples, dtype=float)))

    @classmethod
    def constant(cls, a, t0: float, t_end: float, dt: float) -> "ControlSignal":
        n = steps_between(t0, t_end, dt)
        return cls(t0, (t_end - t0) / n if n else dt, np.tile(np.asarray(a, float), (max(n, 1), 1)))

    @property
    def n_steps(self) -> int:
        return len(self.samples)

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    def index(self, s: float) -> int:
        k = int(math.floor((s - self.t0) / self.dt + 1e-9))
        return min(max(k, 0), self.n_steps - 1)

    def at(self, s: float) -> np.ndarray:
        return self.samples[self.index(s)]

    def grid(self, start: float, stop: float) -> list[float]:
        """Grid instants strictly inside ``(start, stop)``."""
        k0 = max(int(math.floor((start - self.t0) / self.dt)) + 1, 1)
        out = []
        k = k0
        while True:
            s = self.t0 + k * self.dt
            if s >= stop - _TIME_EPS:
                break
            if s > start + _TIME_EPS:
                out.append(s)
            k += 1
        return out


def steps_between(t0: float, t1: float, dt: float) -> int:
    if t1 <= t0:
        return 0
    return max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))


def check_controls(s: Scenario, alpha: ControlSignal) -> None:
    A = s.control_array
    for k, a in enumerate(alpha.samples):
        if a.shape != A.shape[1:] or not np.any(np.all(np.abs(A - a) <= 1e-12, axis=1)):
            raise IllegalControlError(f"control sample {k} = {a.tolist()} is not in the control set")


@dataclass(frozen=True)
class HybridControlString:
    """``(alpha, m, t_1..t_m, p_1..p_{m-1})``; the last destination is always ``p̄``."""

    alpha: ControlSignal
    switch_times: tuple[float, ...]
    destinations: tuple[int, ...] = ()

    @property
    def m(self) -> int:
        return len(self.switch_times)

    def chain(self, n: int) -> tuple[int, ...]:
        return tuple(self.destinations) + (lattice.final_state(n),)


@dataclass
class Trajectory:
    times: list[float]
    states: list[np.ndarray]
    memory: list[int]
    events: list[tuple[float, str, str]] = field(default_factory=list)
    running: list[float] = field(default_factory=list)  # discounted running cost so far
    total: list[float] = field(default_factory=list)  # running plus charges so far
    switch_charges: list[float] = field(default_factory=list)

    @property
    def running_cost(self) -> float:
        return self.running[-1] if self.running else 0.0

    @property
    def total_cost(self) -> float:
        return self.total[-1] if self.total else 0.0

    def to_csv(self, n: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = len(self.states[0]) if self.states else 0
        w.writerow(["time"] + [f"x_{i + 1}" for i in range(d)]
                   + ["memory", "event", "running_cost_so_far", "total_discounted_cost"])
        ev_by_time: dict[int, list[str]] = {}
        for t, kind, detail in self.events:
            i = _nearest(self.times, t)
            ev_by_time.setdefault(i, []).append(f"{kind}:{detail}" if detail else kind)
        for i, t in enumerate(self.times):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in self.states[i]]
                       + [lattice.to_bits(self.memory[i], n), ";".join(ev_by_time.get(i, [])),
                          repr(float(self.running[i])), repr(float(self.total[i]))])
        return buf.getvalue()


def _nearest(times: Sequence[float], t: float) -> int:
    best = 0
    for i, s in enumerate(times):
        if abs(s - t) < abs(times[best] - t):
            best = i
    return best


def discount(s: Scenario, elapsed: float) -> float:
    return math.exp(-s.discount * elapsed)


def euler_step(s: Scenario, y: np.ndarray, a: np.ndarray, q: int, t0: float, t1: float,
               t_ref: float) -> tuple[np.ndarray, float]:
    """One Euler step with control ``a`` and the trapezoid increment of the discounted cost."""
    h = t1 - t0
    y1 = y + h * eval_dynamics(s, y, a, q)
    l0 = float(eval_running_cost(s, y, a, q, t0))
    l1 = float(eval_running_cost(s, y1, a, q, t1))
    incr = 0.5 * h * (discount(s, t0 - t_ref) * l0 + discount(s, t1 - t_ref) * l1)
    return y1, incr


def simulate_auto(s: Scenario, x, t: float, p: int, alpha: ControlSignal) -> Trajectory:
    """Original model: a target's bit flips at the first sample where the state lies in it."""
    n = s.n_targets
    pbar = lattice.final_state(n)
    y = np.asarray(x, dtype=float).copy()
    q = p
    traj = Trajectory([], [], [])
    run = 0.0

    def touch(time):
        nonlocal q
        for j, tg in enumerate(s.targets):
            if not q >> j & 1 and tg.contains(y):
                q |= 1 << j
                traj.events.append((time, "touch", str(j + 1)))

    def record(time):
        traj.times.append(time)
        traj.states.append(y.copy())
        traj.memory.append(q)
        traj.running.append(run)
        traj.total.append(run)

    times = [t] + alpha.grid(t, s.horizon) + [s.horizon]
    touch(t)
    record(t)
    for t0, t1 in zip(times, times[1:]):
        if q == pbar:
            break
        y, incr = euler_step(s, y, alpha.at(t0), q, t0, t1, t)
        run += incr
        touch(t1)
        record(t1)
    if q == pbar:
        traj.events.append((traj.times[-1], "stop", "all targets visited"))
    return traj


def _check_string(s: Scenario, t: float, p: int, u: HybridControlString) -> None:
    n = s.n_targets
    if p == lattice.final_state(n):
        raise IllegalControlError("no switches are possible from the final state")
    if u.m < 1 or len(u.destinations) != u.m - 1:
        raise IllegalControlError("need m >= 1 switch times and m - 1 intermediate destinations")
    if u.m > n - lattice.popcount(p):
        raise IllegalControlError("more switches than unvisited targets")
    times = (t,) + tuple(u.switch_times)
    if any(b < a - _TIME_EPS for a, b in zip(times, times[1:])) or times[-1] > s.horizon + _TIME_EPS:
        raise IllegalControlError("switch times must satisfy t <= t_1 <= ... <= t_m <= T")
    prev = p
    for q in u.chain(n):
        if not lattice.is_successor(prev, q, n):
            raise IllegalControlError(
                f"illegal switch {lattice.to_bits(prev, n)} -> {lattice.to_bits(q, n)}")
        prev = q
    check_controls(s, u.alpha)


def simulate_switching(s: Scenario, x, t: float, p: int, u: HybridControlString) -> Trajectory:
    """Relaxed model: memory changes only at the chosen switching instants."""
    _check_string(s, t, p, u)
    n = s.n_targets
    y = np.asarray(x, dtype=float).copy()
    q = p
    run = 0.0
    charged = 0.0
    traj = Trajectory([], [], [])
    chain = u.chain(n)
    t_last = u.switch_times[-1]
    times = sorted(set([t] + u.alpha.grid(t, t_last) + list(u.switch_times)))
    j = 0
    for i, now in enumerate(times):
        if i > 0:
            y, incr = euler_step(s, y, u.alpha.at(times[i - 1]), q, times[i - 1], now, t)
            run += incr
        while j < u.m and u.switch_times[j] <= now + _TIME_EPS:
            dest = chain[j]
            c = discount(s, now - t) * float(eval_switch_cost(s, y, q, dest))
            traj.switch_charges.append(c)
            traj.events.append((now, "switch", f"{lattice.to_bits(q, n)}->{lattice.to_bits(dest, n)}"))
            charged += c
            q = dest
            j += 1
        traj.times.append(now)
        traj.states.append(y.copy())
        traj.memory.append(q)
        traj.running.append(run)
        traj.total.append(run + charged)
    return traj


def evaluate_switching_cost(s: Scenario, x, t: float, p: int, u: HybridControlString) -> float:
    return simulate_switching(s, x, t, p, u).total_cost


def evaluate_stopping_cost(s: Scenario, x, t: float, p: int, alpha: ControlSignal, tau: float,
                           psi: Callable[[np.ndarray, float], float]) -> float:
    """Single stopping problem: run with memory ``p`` until ``tau``, then pay ``psi``."""
    if not t - _TIME_EPS <= tau <= s.horizon + _TIME_EPS:
        raise ValueError(f"stopping time {tau} outside [{t}, {s.horizon}]")
    y = np.asarray(x, dtype=float).copy()
    run = 0.0
    times = [t] + alpha.grid(t, tau) + ([tau] if tau > t + _TIME_EPS else [])
    for t0, t1 in zip(times, times[1:]):
        y, incr = euler_step(s, y, alpha.at(t0), p, t0, t1, t)
        run += incr
    return run + discount(s, tau - t) * float(psi(y, tau))
