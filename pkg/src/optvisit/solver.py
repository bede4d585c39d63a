"""Semi-Lagrangian cascade for the family of obstacle problems.

States of the memory lattice are processed backward from ``p̄``.  For each
state the obstacle (stopping cost) is assembled from the already solved lower
levels, the terminal slice is set to the obstacle and the scheme

    W_k(x) = min( psi_k(x), min_a [ dt * l(x, a, t_k) + exp(-lam dt) * W_{k+1}(x + dt f(x, a)) ] )

is marched backward in time.  Feet of characteristics leaving the box are
clamped back onto it.
"""

from __future__ import annotations

import functools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import lattice
from .scenario import Scenario, eval_dynamics, eval_running_cost, eval_switch_cost

logger = logging.getLogger(__name__)

DEFAULT_MEMORY_CAP = 2 * 1024**3


class ResourceLimitError(RuntimeError):
    pass


class OrderingError(RuntimeError):
    """A lower-level field needed for an obstacle has not been solved yet."""


@dataclass(frozen=True)
class SpaceTimeGrid:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    shape: tuple[int, ...]
    steps: int
    horizon: float

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or len(self.lo) != len(self.shape):
            raise ValueError("lo, hi and shape must have one entry per dimension")
        if any(n < 2 for n in self.shape):
            raise ValueError("need at least 2 nodes per dimension")
        if any(b <= a for a, b in zip(self.lo, self.hi)):
            raise ValueError("grid box must have lo < hi")
        if self.steps < 1 or self.horizon <= 0:
            raise ValueError("need at least one time step and a positive horizon")

    @classmethod
    def for_scenario(cls, s: Scenario, nodes, steps: int) -> "SpaceTimeGrid":
        if np.isscalar(nodes):
            nodes = (int(nodes),) * s.dim
        return cls(tuple(s.box_lo), tuple(s.box_hi), tuple(int(n) for n in nodes), int(steps),
                   float(s.horizon))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def dx(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / (np.asarray(self.shape) - 1)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, n) for a, b, n in zip(self.lo, self.hi, self.shape)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(*shape, dim)``; read-only and cached."""
        return _nodes(self)

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def metadata(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "shape": list(self.shape),
                "steps": self.steps, "horizon": self.horizon}


@functools.lru_cache(maxsize=16)
def _nodes(grid: SpaceTimeGrid) -> np.ndarray:
    x = np.stack(np.meshgrid(*grid.axes(), indexing="ij"), axis=-1)
    x.flags.writeable = False
    return x


def interp_slice(values: np.ndarray, grid: SpaceTimeGrid, x) -> np.ndarray:
    """Multilinear interpolation of a nodal slice at points ``x[..., dim]`` (clamped to the box)."""
    x = grid.clamp(np.asarray(x, dtype=float))
    lo = np.asarray(grid.lo)
    dx = grid.dx
    shape = np.asarray(grid.shape)
    u = (x - lo) / dx
    i0 = np.clip(np.floor(u).astype(int), 0, shape - 2)
    w = u - i0
    out = np.zeros(x.shape[:-1])
    for corner in range(1 << grid.dim):
        idx = []
        weight = np.ones(x.shape[:-1])
        for d in range(grid.dim):
            bit = corner >> d & 1
            idx.append(i0[..., d] + bit)
            weight = weight * (w[..., d] if bit else 1.0 - w[..., d])
        out = out + weight * values[tuple(idx)]
    return out


@dataclass
class ValueField:
    p: int
    values: np.ndarray  # (steps + 1, *shape)
    grid: SpaceTimeGrid

    def slice_at(self, k: int) -> np.ndarray:
        return self.values[k]


@dataclass
class SolveArtifacts:
    scenario: Scenario
    grid: SpaceTimeGrid
    fields: dict[int, ValueField] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def field_for(self, p: int) -> ValueField:
        try:
            return self.fields[p]
        except KeyError:
            raise OrderingError(
                f"field {lattice.to_bits(p, self.scenario.n_targets)} has not been solved"
            ) from None


def interpolate(fld: ValueField, x, t) -> np.ndarray | float:
    """Multilinear in space (clamped), linear in time between slices."""
    g = fld.grid
    t = np.clip(np.asarray(t, dtype=float), 0.0, g.horizon)
    r = t / g.dt
    k0 = np.clip(np.floor(r).astype(int), 0, g.steps - 1)
    w = r - k0
    x = np.asarray(x, dtype=float)
    if np.ndim(t) == 0:
        k0 = int(k0)
        a = interp_slice(fld.values[k0], g, x)
        b = interp_slice(fld.values[k0 + 1], g, x)
        out = (1.0 - w) * a + w * b
    else:
        out = np.empty(np.broadcast_shapes(x.shape[:-1], t.shape))
        xb = np.broadcast_to(x, out.shape + (g.dim,))
        kb = np.broadcast_to(k0, out.shape)
        wb = np.broadcast_to(w, out.shape)
        for k in np.unique(kb):
            m = kb == k
            a = interp_slice(fld.values[k], g, xb[m])
            b = interp_slice(fld.values[k + 1], g, xb[m])
            out[m] = (1.0 - wb[m]) * a + wb[m] * b
    return float(out) if np.ndim(out) == 0 else out


def switch_cost_nodes(s: Scenario, grid: SpaceTimeGrid, p: int, q: int) -> np.ndarray:
    return np.asarray(eval_switch_cost(s, grid.nodes(), p, q), dtype=float)


def obstacle_slice(art: SolveArtifacts, p: int, k: int, costs: Mapping[int, np.ndarray] | None = None
                   ) -> np.ndarray:
    """``psi_p`` at every node of slice ``k``."""
    s, g = art.scenario, art.grid
    out = None
    for q in lattice.successors(p, s.n_targets):
        c = costs[q] if costs is not None else switch_cost_nodes(s, g, p, q)
        v = c if q == s.final_state else c + art.field_for(q).values[k]
        out = v if out is None else np.minimum(out, v)
    return out


def obstacle_psi(art: SolveArtifacts, p: int, x, t) -> np.ndarray | float:
    """``min_{q in I_p} C(x, p, q) + W_q(x, t)`` at arbitrary points."""
    s = art.scenario
    if p == s.final_state:
        raise ValueError("the final state has no obstacle")
    best = None
    for q in lattice.successors(p, s.n_targets):
        v = np.asarray(eval_switch_cost(s, x, p, q), dtype=float)
        if q != s.final_state:
            v = v + interpolate(art.field_for(q), x, t)
        best = v if best is None else np.minimum(best, v)
    return float(best) if np.ndim(best) == 0 else best


def continuation(w_next: np.ndarray, s: Scenario, grid: SpaceTimeGrid, p: int, k: int,
                 x: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Best one-step continuation value and the index of the minimizing control."""
    x = grid.nodes() if x is None else x
    t = grid.times[k]
    dt = grid.dt
    beta = np.exp(-s.discount * dt)
    best = None
    arg = None
    for i, a in enumerate(s.control_array):
        foot = x + dt * eval_dynamics(s, x, a, p)
        v = dt * eval_running_cost(s, x, a, p, t) + beta * interp_slice(w_next, grid, foot)
        if best is None:
            best, arg = v, np.zeros(v.shape, dtype=int)
        else:
            better = v < best  # lowest index wins ties
            best = np.where(better, v, best)
            arg = np.where(better, i, arg)
    return best, arg


def sl_step(w_next: np.ndarray, s: Scenario, grid: SpaceTimeGrid, p: int, k: int,
            psi: np.ndarray) -> np.ndarray:
    """Slice ``k`` from slice ``k + 1``; the obstacle wins ties."""
    if p == s.final_state:
        return np.zeros(grid.shape)
    q, _ = continuation(w_next, s, grid, p, k)
    return np.where(psi <= q, psi, q)


def solve_level(s: Scenario, grid: SpaceTimeGrid, p: int, lower: SolveArtifacts) -> ValueField:
    values = np.zeros((grid.steps + 1,) + grid.shape)
    if p == s.final_state:
        return ValueField(p, values, grid)
    costs = {q: switch_cost_nodes(s, grid, p, q) for q in lattice.successors(p, s.n_targets)}
    values[grid.steps] = obstacle_slice(lower, p, grid.steps, costs)
    for k in range(grid.steps - 1, -1, -1):
        psi = obstacle_slice(lower, p, k, costs)
        values[k] = sl_step(values[k + 1], s, grid, p, k, psi)
    return ValueField(p, values, grid)


def field_bytes(s: Scenario, grid: SpaceTimeGrid) -> int:
    return (1 << s.n_targets) * (grid.steps + 1) * int(np.prod(grid.shape)) * 8


def solve_all(s: Scenario, grid: SpaceTimeGrid, memory_cap: int = DEFAULT_MEMORY_CAP,
              n_jobs: int = 1) -> SolveArtifacts:
    need = field_bytes(s, grid)
    if need > memory_cap:
        raise ResourceLimitError(f"fields need {need} bytes, cap is {memory_cap}")
    art = SolveArtifacts(s, grid)
    timings = []
    n = s.n_targets
    for depth, level in enumerate(lattice.backward_levels(n)):
        t0 = time.perf_counter()
        if n_jobs > 1 and len(level) > 1:
            with ThreadPoolExecutor(n_jobs) as pool:
                solved = list(pool.map(lambda p: solve_level(s, grid, p, art), level))
        else:
            solved = [solve_level(s, grid, p, art) for p in level]
        for fld in solved:
            art.fields[fld.p] = fld
        timings.append(time.perf_counter() - t0)
        logger.debug("level %d (%d states) solved in %.3fs", depth, len(level), timings[-1])
    art.diagnostics = diagnostics(art)
    art.diagnostics["level_seconds"] = timings
    return art


def hamiltonian(s: Scenario, p: int, x, t, xi) -> np.ndarray | float:
    """``sup_a { -f(x, a, p) . xi - l(x, a, p, t) }`` over the sampled control set."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    best = None
    for a in s.control_array:
        v = -np.sum(eval_dynamics(s, x, a, p) * xi, axis=-1) - eval_running_cost(s, x, a, p, t)
        best = v if best is None else np.maximum(best, v)
    return float(best) if np.ndim(best) == 0 else best


def diagnostics(art: SolveArtifacts) -> dict:
    """Obstacle activation and PDE residual statistics in the non-contact region."""
    s, g = art.scenario, art.grid
    x = g.nodes()
    out = {"max_activation": 0.0, "activation": {}, "residual": {}}
    for p, fld in art.fields.items():
        if p == s.final_state:
            continue
        bits = lattice.to_bits(p, s.n_targets)
        res = []
        frac = []
        for k in range(g.steps):
            psi = obstacle_slice(art, p, k)
            w = fld.values[k]
            on = w >= psi
            frac.append(float(on.mean()))
            grads = np.gradient(w, *g.dx) if g.dim > 1 else [np.gradient(w, g.dx[0])]
            xi = np.stack(grads, axis=-1)
            r = (-(fld.values[k + 1] - w) / g.dt + s.discount * w
                 + hamiltonian(s, p, x, g.times[k], xi))
            res.append(np.abs(r[~on]))
        res = np.concatenate(res) if res else np.zeros(0)
        out["activation"][bits] = float(np.mean(frac))
        out["max_activation"] = max(out["max_activation"], float(np.max(frac)))
        out["residual"][bits] = {
            "nodes": int(res.size),
            "median": float(np.median(res)) if res.size else 0.0,
            "max": float(res.max()) if res.size else 0.0,
        }
    return out
