"""Problem instances for the optimal visiting problem.

A :class:`Scenario` bundles the targets, the controlled dynamics, the running
cost, the switching cost and the computational box.  Model functions are built
from a small set of parametric families so that boundedness, Lipschitz and
sign hypotheses can be checked directly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import lattice

MAX_TARGETS = 12


class ScenarioError(ValueError):
    """Raised for malformed or inconsistent scenario documents."""


class IllegalSwitchError(ValueError):
    pass


# --------------------------------------------------------------------------
# targets


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def distance(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        return np.maximum(r - self.radius, 0.0)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.distance(x) <= 0.0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def distance(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        proj = np.clip(x, self.lo, self.hi)
        return np.linalg.norm(x - proj, axis=-1)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.distance(x) <= 0.0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)


Target = Ball | Box


def _targets_intersect(a: Target, b: Target) -> bool:
    # compact sets: touching counts as intersecting
    if isinstance(a, Box) and isinstance(b, Box):
        return bool(np.all(np.asarray(a.lo) <= b.hi) and np.all(np.asarray(b.lo) <= a.hi))
    if isinstance(a, Ball) and isinstance(b, Ball):
        gap = np.linalg.norm(np.subtract(a.center, b.center))
        return bool(gap <= a.radius + b.radius)
    ball, box = (a, b) if isinstance(a, Ball) else (b, a)
    return bool(box.distance(np.asarray(ball.center)) <= ball.radius)


# --------------------------------------------------------------------------
# model families


@dataclass(frozen=True)
class DynamicsSpec:
    """``f(x, a, p) = s_p * a + b``; ``b`` is zero for the plain velocity family."""

    family: str = "velocity"
    speed: float = 1.0
    speeds: tuple[tuple[int, float], ...] = ()  # (mask, speed) overrides
    drift: tuple[float, ...] | None = None

    def speed_for(self, p: int) -> float:
        for mask, s in self.speeds:
            if mask == p:
                return s
        return self.speed


@dataclass(frozen=True)
class RunningCostSpec:
    family: str = "constant"
    c0: float = 1.0
    c1: float = 0.0
    breakpoints: tuple[tuple[float, float], ...] = ()

    def at(self, t):
        if self.family == "constant":
            return self.c0 + 0.0 * np.asarray(t, dtype=float)
        if self.family == "time_affine":
            return self.c0 + self.c1 * np.asarray(t, dtype=float)
        ts = [b[0] for b in self.breakpoints]
        gs = [b[1] for b in self.breakpoints]
        return self.c0 + np.interp(t, ts, gs)


@dataclass(frozen=True)
class SwitchCostSpec:
    family: str = "distance_sum"
    scale: float = 1.0
    c: float = 1.0


@dataclass(frozen=True)
class Scenario:
    dim: int
    targets: tuple[Target, ...]
    horizon: float
    box_lo: tuple[float, ...]
    box_hi: tuple[float, ...]
    controls: tuple[tuple[float, ...], ...]
    discount: float = 0.0
    dynamics: DynamicsSpec = field(default_factory=DynamicsSpec)
    running_cost: RunningCostSpec = field(default_factory=RunningCostSpec)
    switch_cost: SwitchCostSpec = field(default_factory=SwitchCostSpec)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def final_state(self) -> int:
        return lattice.final_state(self.n_targets)

    @property
    def control_array(self) -> np.ndarray:
        return np.asarray(self.controls, dtype=float)

    def with_switch_scale(self, scale: float) -> "Scenario":
        from dataclasses import replace

        return replace(self, switch_cost=replace(self.switch_cost, scale=float(scale)))

    def digest(self) -> str:
        return hashlib.sha256(export_scenario(self).encode()).hexdigest()


# --------------------------------------------------------------------------
# evaluation


def eval_dynamics(s: Scenario, x, a, p: int) -> np.ndarray:
    """Velocity ``f(x, a, p)``. Broadcasts over leading axes of ``x`` and ``a``."""
    x = np.asarray(x, dtype=float)
    v = s.dynamics.speed_for(p) * np.asarray(a, dtype=float)
    if s.dynamics.drift is not None:
        v = v + np.asarray(s.dynamics.drift)
    return np.broadcast_to(v, np.broadcast_shapes(x.shape, v.shape)).copy()


def eval_running_cost(s: Scenario, x, a, p: int, t):
    # built-in families depend on time only
    return s.running_cost.at(t)


def target_distance(s: Scenario, x, j: int):
    """Euclidean distance from ``x`` to target ``j`` (1-based)."""
    if not 1 <= j <= s.n_targets:
        raise IndexError(f"target index {j} out of range 1..{s.n_targets}")
    return s.targets[j - 1].distance(x)


def eval_switch_cost(s: Scenario, x, p: int, q: int):
    n = s.n_targets
    if not lattice.is_successor(p, q, n):
        raise IllegalSwitchError(
            f"{lattice.to_bits(q, n)} is not a legal switch from {lattice.to_bits(p, n)}"
        )
    sc = s.switch_cost
    flipped = [j for j in range(1, n + 1) if lattice.chi(j, p, q)]
    if sc.family == "constant_per_discard":
        x = np.asarray(x, dtype=float)
        return sc.scale * sc.c * len(flipped) + 0.0 * x[..., 0]
    total = 0.0
    for j in flipped:
        total = total + target_distance(s, x, j)
    return sc.scale * total


# --------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    sup_dynamics: float
    lipschitz: float
    sup_running_cost: float
    min_running_cost: float
    running_cost_modulus: str
    disjoint: bool
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _all_speeds(s: Scenario) -> list[float]:
    speeds = [s.dynamics.speed] + [v for _, v in s.dynamics.speeds]
    return speeds


def validate(s: Scenario) -> ValidationReport:
    violations = []
    A = s.control_array
    drift = np.zeros(s.dim) if s.dynamics.drift is None else np.asarray(s.dynamics.drift)
    sup_f = 0.0
    for sp in _all_speeds(s):
        sup_f = max(sup_f, float(np.max(np.linalg.norm(sp * A + drift, axis=1))))
    if min(_all_speeds(s)) <= 0:
        violations.append("speeds must be positive")

    ts = np.linspace(0.0, s.horizon, 1001)
    if s.running_cost.family == "time_table":
        ts = np.union1d(ts, [b[0] for b in s.running_cost.breakpoints if 0 <= b[0] <= s.horizon])
    ell = s.running_cost.at(ts)
    if float(ell.min()) < 0:
        violations.append("running cost negative on [0,T]")

    disjoint = True
    for i in range(s.n_targets):
        for j in range(i + 1, s.n_targets):
            if _targets_intersect(s.targets[i], s.targets[j]):
                disjoint = False
                violations.append(f"targets not disjoint: {i + 1} and {j + 1}")
    lo, hi = np.asarray(s.box_lo), np.asarray(s.box_hi)
    for j, tg in enumerate(s.targets, start=1):
        tlo, thi = tg.bounds()
        if np.any(tlo < lo) or np.any(thi > hi):
            violations.append(f"target {j} not inside box")
    if s.switch_cost.scale <= 0:
        violations.append("switch cost scale must be positive")
    if s.switch_cost.family == "constant_per_discard" and s.switch_cost.c < 0:
        violations.append("switch cost negative")

    return ValidationReport(
        sup_dynamics=sup_f,
        lipschitz=0.0,
        sup_running_cost=float(ell.max()),
        min_running_cost=float(ell.min()),
        running_cost_modulus="zero (running cost independent of x)",
        disjoint=disjoint,
        violations=violations,
    )


# --------------------------------------------------------------------------
# parsing and export


def default_controls(dim: int, directions: int | None = None, include_zero: bool = True):
    if dim == 1:
        dirs = [(-1.0,), (1.0,)]
    elif dim == 2:
        n = directions or 16
        dirs = [
            (math.cos(2 * math.pi * k / n), math.sin(2 * math.pi * k / n)) for k in range(n)
        ]
    else:
        dirs = []
        for i in range(dim):
            for sign in (1.0, -1.0):
                e = [0.0] * dim
                e[i] = sign
                dirs.append(tuple(e))
    out = [tuple(float(v) for v in d) for d in dirs]
    if include_zero:
        out.append((0.0,) * dim)
    if dim == 1:
        out.sort()
    return tuple(out)


def _vec(doc: Mapping, key: str, dim: int, where: str) -> tuple[float, ...]:
    if key not in doc:
        raise ScenarioError(f"{where}.{key}: missing")
    v = doc[key]
    if isinstance(v, (int, float)) and dim == 1:
        v = [v]
    if not isinstance(v, Sequence) or len(v) != dim:
        raise ScenarioError(f"{where}.{key}: expected a list of {dim} numbers")
    try:
        return tuple(float(c) for c in v)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}.{key}: expected numbers") from None


def _num(doc: Mapping, key: str, where: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise ScenarioError(f"{where}.{key}: missing")
        return float(default)
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{where}.{key}: expected a number")
    return float(v)


def _check_keys(doc: Mapping, allowed: set[str], where: str):
    extra = set(doc) - allowed
    if extra:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(extra)}")


def _parse_target(doc, dim: int, idx: int) -> Target:
    where = f"targets[{idx}]"
    if not isinstance(doc, Mapping) or len(doc) != 1:
        raise ScenarioError(f"{where}: expected {{'ball': ...}} or {{'box': ...}}")
    (kind, body), = doc.items()
    if kind == "ball":
        _check_keys(body, {"center", "radius"}, where + ".ball")
        r = _num(body, "radius", where + ".ball")
        if r <= 0:
            raise ScenarioError(f"{where}.ball.radius: must be > 0")
        return Ball(_vec(body, "center", dim, where + ".ball"), r)
    if kind == "box":
        _check_keys(body, {"lo", "hi"}, where + ".box")
        lo = _vec(body, "lo", dim, where + ".box")
        hi = _vec(body, "hi", dim, where + ".box")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ScenarioError(f"{where}.box: lo must be < hi componentwise")
        return Box(lo, hi)
    raise ScenarioError(f"{where}: unknown target shape {kind!r}")


def _parse_dynamics(doc, dim: int, n: int) -> DynamicsSpec:
    where = "dynamics"
    _check_keys(doc, {"family", "speed", "speeds", "drift"}, where)
    family = doc.get("family", "velocity")
    if family not in ("velocity", "drift_velocity"):
        raise ScenarioError(f"{where}.family: unknown family {family!r}")
    speed = _num(doc, "speed", where, default=1.0)
    if speed <= 0:
        raise ScenarioError(f"{where}.speed: must be > 0")
    overrides = []
    for bits, v in sorted(doc.get("speeds", {}).items()):
        try:
            mask = lattice.from_bits(bits, n)
        except ValueError as e:
            raise ScenarioError(f"{where}.speeds: {e}") from None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0:
            raise ScenarioError(f"{where}.speeds[{bits}]: must be a positive number")
        overrides.append((mask, float(v)))
    drift = None
    if family == "drift_velocity":
        drift = _vec(doc, "drift", dim, where)
    elif "drift" in doc:
        raise ScenarioError(f"{where}.drift: only allowed for drift_velocity")
    return DynamicsSpec(family, speed, tuple(sorted(overrides)), drift)


def _parse_running_cost(doc) -> RunningCostSpec:
    where = "running_cost"
    _check_keys(doc, {"family", "c0", "c1", "breakpoints"}, where)
    family = doc.get("family", "constant")
    c0 = _num(doc, "c0", where, default=1.0 if family == "constant" else 0.0)
    if family == "constant":
        return RunningCostSpec("constant", c0)
    if family == "time_affine":
        return RunningCostSpec("time_affine", c0, _num(doc, "c1", where))
    if family == "time_table":
        bps = doc.get("breakpoints")
        if not isinstance(bps, Sequence) or len(bps) < 1:
            raise ScenarioError(f"{where}.breakpoints: expected a list of [t, g] pairs")
        try:
            pts = tuple((float(t), float(g)) for t, g in bps)
        except (TypeError, ValueError):
            raise ScenarioError(f"{where}.breakpoints: expected [t, g] pairs") from None
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ScenarioError(f"{where}.breakpoints: times must increase")
        return RunningCostSpec("time_table", c0, 0.0, pts)
    raise ScenarioError(f"{where}.family: unknown family {family!r}")


def _parse_switch_cost(doc) -> SwitchCostSpec:
    where = "switch_cost"
    _check_keys(doc, {"family", "scale", "c"}, where)
    family = doc.get("family", "distance_sum")
    scale = _num(doc, "scale", where, default=1.0)
    if scale <= 0:
        raise ScenarioError(f"{where}.scale: must be > 0")
    if family == "distance_sum":
        return SwitchCostSpec(family, scale)
    if family == "constant_per_discard":
        c = _num(doc, "c", where)
        if c < 0:
            raise ScenarioError(f"{where}.c: must be >= 0")
        return SwitchCostSpec(family, scale, c)
    raise ScenarioError(f"{where}.family: unknown family {family!r}")


def _parse_controls(doc, dim: int):
    if doc is None:
        return default_controls(dim)
    if isinstance(doc, Mapping):
        _check_keys(doc, {"directions", "include_zero"}, "controls")
        n = doc.get("directions")
        if n is not None and (not isinstance(n, int) or n < 1):
            raise ScenarioError("controls.directions: expected a positive integer")
        if n is not None and dim != 2:
            raise ScenarioError("controls.directions: only meaningful in 2D")
        return default_controls(dim, n, bool(doc.get("include_zero", True)))
    if not isinstance(doc, Sequence) or not doc:
        raise ScenarioError("controls: expected a non-empty list of vectors")
    out = []
    for i, a in enumerate(doc):
        if isinstance(a, (int, float)) and dim == 1:
            a = [a]
        if not isinstance(a, Sequence) or len(a) != dim:
            raise ScenarioError(f"controls[{i}]: expected {dim} numbers")
        out.append(tuple(float(v) for v in a))
    return tuple(out)


def scenario_from_dict(doc: Mapping[str, Any]) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario: expected a JSON object")
    _check_keys(
        doc,
        {"dim", "targets", "horizon", "discount", "box", "dynamics", "running_cost",
         "switch_cost", "controls"},
        "scenario",
    )
    dim = doc.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise ScenarioError("dim: expected an integer >= 1")
    targets_doc = doc.get("targets")
    if not isinstance(targets_doc, Sequence) or not targets_doc:
        raise ScenarioError("targets: expected a non-empty list")
    if len(targets_doc) > MAX_TARGETS:
        raise ScenarioError(
            f"targets: lattice too large ({len(targets_doc)} targets, at most {MAX_TARGETS})"
        )
    targets = tuple(_parse_target(t, dim, i) for i, t in enumerate(targets_doc))
    horizon = _num(doc, "horizon", "scenario")
    if horizon <= 0:
        raise ScenarioError("horizon: must be > 0")
    discount = _num(doc, "discount", "scenario", default=0.0)
    if discount < 0:
        raise ScenarioError("discount: must be >= 0")
    box = doc.get("box")
    if not isinstance(box, Mapping):
        raise ScenarioError("box: expected {'lo': [...], 'hi': [...]}")
    _check_keys(box, {"lo", "hi"}, "box")
    lo, hi = _vec(box, "lo", dim, "box"), _vec(box, "hi", dim, "box")
    if not all(a < b for a, b in zip(lo, hi)):
        raise ScenarioError("box: lo must be < hi componentwise")

    s = Scenario(
        dim=dim,
        targets=targets,
        horizon=horizon,
        box_lo=lo,
        box_hi=hi,
        controls=_parse_controls(doc.get("controls"), dim),
        discount=discount,
        dynamics=_parse_dynamics(doc.get("dynamics", {}), dim, len(targets)),
        running_cost=_parse_running_cost(doc.get("running_cost", {})),
        switch_cost=_parse_switch_cost(doc.get("switch_cost", {})),
    )
    report = validate(s)
    if report.violations:
        raise ScenarioError("; ".join(report.violations))
    return s


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e}") from None
    return scenario_from_dict(doc)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    targets = []
    for t in s.targets:
        if isinstance(t, Ball):
            targets.append({"ball": {"center": list(t.center), "radius": t.radius}})
        else:
            targets.append({"box": {"lo": list(t.lo), "hi": list(t.hi)}})
    dyn: dict[str, Any] = {"family": s.dynamics.family, "speed": s.dynamics.speed}
    if s.dynamics.speeds:
        dyn["speeds"] = {lattice.to_bits(m, s.n_targets): v for m, v in s.dynamics.speeds}
    if s.dynamics.drift is not None:
        dyn["drift"] = list(s.dynamics.drift)
    rc: dict[str, Any] = {"family": s.running_cost.family, "c0": s.running_cost.c0}
    if s.running_cost.family == "time_affine":
        rc["c1"] = s.running_cost.c1
    if s.running_cost.family == "time_table":
        rc["breakpoints"] = [list(b) for b in s.running_cost.breakpoints]
    sc: dict[str, Any] = {"family": s.switch_cost.family, "scale": s.switch_cost.scale}
    if s.switch_cost.family == "constant_per_discard":
        sc["c"] = s.switch_cost.c
    return {
        "dim": s.dim,
        "box": {"lo": list(s.box_lo), "hi": list(s.box_hi)},
        "horizon": s.horizon,
        "discount": s.discount,
        "targets": targets,
        "dynamics": dyn,
        "running_cost": rc,
        "switch_cost": sc,
        "controls": [list(a) for a in s.controls],
    }


def export_scenario(s: Scenario) -> str:
    """Canonical JSON text; ``parse_scenario(export_scenario(s)) == s``."""
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"
