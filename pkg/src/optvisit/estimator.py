"""scikit-learn style front end for the cascade solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import lattice
from .scenario import Scenario, parse_scenario, scenario_from_dict, validate
from .solver import DEFAULT_MEMORY_CAP, SpaceTimeGrid, interpolate, obstacle_psi, solve_all
from .synthesis import feedback_policy, synthesize_trajectory


def as_scenario(X) -> Scenario:
    if isinstance(X, Scenario):
        return X
    if isinstance(X, dict):
        return scenario_from_dict(X)
    if isinstance(X, str):
        return parse_scenario(X)
    raise TypeError(f"expected a Scenario, dict or JSON text, got {type(X).__name__}")


class VisitingValueSolver(BaseEstimator):
    """Fit the value functions ``W_p`` of a scenario; predict values at ``(x, t)`` rows.

    Parameters
    ----------
    nx : int or tuple of int
        Nodes per spatial dimension.
    nt : int
        Number of time steps on ``[0, T]``.
    memory_cap : int
        Refuse to solve if the fields would need more bytes than this.
    n_jobs : int
        Threads used for states within one lattice level.
    stop_tol, dt_sim : float or None
        Synthesis parameters; ``None`` picks the grid-based defaults.
    """

    def __init__(self, nx=41, nt=50, memory_cap=DEFAULT_MEMORY_CAP, n_jobs=1, stop_tol=None,
                 dt_sim=None):
        self.nx = nx
        self.nt = nt
        self.memory_cap = memory_cap
        self.n_jobs = n_jobs
        self.stop_tol = stop_tol
        self.dt_sim = dt_sim

    def fit(self, X, y=None):
        s = as_scenario(X)
        self.scenario_ = s
        self.validation_ = validate(s)
        self.grid_ = SpaceTimeGrid.for_scenario(s, self.nx, self.nt)
        self.artifacts_ = solve_all(s, self.grid_, self.memory_cap, self.n_jobs)
        self.n_targets_ = s.n_targets
        return self

    def _state(self, p) -> int:
        if p is None:
            return 0
        if isinstance(p, str):
            return lattice.from_bits(p, self.n_targets_)
        return int(p)

    def _rows(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = check_array(X, ensure_min_features=self.scenario_.dim + 1)
        if X.shape[1] != self.scenario_.dim + 1:
            raise ValueError(f"expected {self.scenario_.dim + 1} columns (x..., t), got {X.shape[1]}")
        return X[:, :-1], X[:, -1]

    def predict(self, X, p=None) -> np.ndarray:
        """Interpolated ``W_p`` at rows ``(x_1, ..., x_d, t)``; ``p`` defaults to nothing visited."""
        check_is_fitted(self, "artifacts_")
        x, t = self._rows(X)
        return np.atleast_1d(interpolate(self.artifacts_.field_for(self._state(p)), x, t))

    def obstacle(self, X, p=None) -> np.ndarray:
        check_is_fitted(self, "artifacts_")
        x, t = self._rows(X)
        return np.atleast_1d(obstacle_psi(self.artifacts_, self._state(p), x, t))

    def decide(self, x, t, p=None):
        check_is_fitted(self, "artifacts_")
        return feedback_policy(self.artifacts_, x, t, self._state(p), self.stop_tol)

    def plan(self, x0, t0=0.0, p0=None):
        check_is_fitted(self, "artifacts_")
        return synthesize_trajectory(self.artifacts_, x0, t0, self._state(p0), self.dt_sim,
                                     self.stop_tol)
