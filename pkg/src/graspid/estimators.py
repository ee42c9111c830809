"""Estimator objects with a fit/predict interface."""
from __future__ import annotations

from dataclasses import fields, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baseline import baseline_least_squares, linear_system
from .friction import ServoConfig, estimate_mu
from .graph import VARIANTS, SolverConfig, build_graph
from .inertia import ConvexHull, InertialParams, devectorize, params_from_body
from .solver import solve
from .trajectory import Trajectory

METHODS = ("baseline",) + VARIANTS


def check_trajectory(traj, min_samples: int = 3) -> Trajectory:
    """Validate a dataset passed to ``fit``/``predict``."""
    if not isinstance(traj, Trajectory):
        raise TypeError(f"expected a Trajectory, got {type(traj).__name__}")
    if len(traj) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(traj)}")
    if traj.n_contacts < 1:
        raise ValueError("the dataset has no contacts")
    return traj


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class InertialEstimator(BaseEstimator):
    """Inertial parameters of a grasped body from a pose/force dataset.

    Parameters
    ----------
    method : one of ``baseline``, ``baseline-fg``, ``no-c-no-g``, ``c-no-g``,
        ``c-plus-g``
    hull : ConvexHull, required by the constrained variants
    prior : InertialParams used by ``c-plus-g``
    smoothing : Savitzky-Golay smoothing for ``baseline``
    solver_options : dict of :class:`SolverConfig` overrides

    Attributes
    ----------
    params_ : InertialParams or None (vector estimates that are not physical)
    vector_ : (10,) ``[m, m c, H]`` about the body origin
    report_ : SolveReport for graph methods, BaselineResult for ``baseline``
    """

    def __init__(self, method: str = "c-no-g", hull: ConvexHull = None,
                 prior: InertialParams = None, smoothing: bool = True,
                 solver_options: dict = None):
        self.method = method
        self.hull = hull
        self.prior = prior
        self.smoothing = smoothing
        self.solver_options = solver_options

    def solver_config(self) -> SolverConfig:
        opts = dict(self.solver_options or {})
        known = {f.name for f in fields(SolverConfig)}
        unknown = set(opts) - known
        if unknown:
            raise ValueError(f"unknown solver options: {', '.join(sorted(unknown))}")
        return replace(SolverConfig(variant=self.method), **opts)

    def fit(self, X: Trajectory, y=None):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        traj = check_trajectory(X)
        if self.method == "baseline":
            result = baseline_least_squares(traj, smoothing=self.smoothing)
            self.report_ = result
            self.vector_ = np.asarray(result.vector, dtype=float)
        else:
            if self.hull is None and self.method in ("c-no-g", "c-plus-g"):
                raise ValueError(f"method {self.method} needs a hull")
            if self.method == "c-plus-g" and self.prior is None:
                raise ValueError("method c-plus-g needs a prior")
            hull = self.hull if self.hull is not None else _bounding_hull(traj)
            graph = build_graph(traj, hull, self.solver_config(), self.prior)
            self.report_ = solve(graph)
            self.vector_ = np.asarray(self.report_.vector, dtype=float)
        self.params_ = _physical(self.vector_)
        return self

    def predict(self, X: Trajectory) -> np.ndarray:
        """Predicted net wrench ``(T - 2, 6)`` for each window of ``X``, using the
        finite-difference kinematics of the measured poses."""
        _check_fitted(self, "vector_")
        traj = check_trajectory(X)
        system = linear_system(traj, smoothing=False)
        return (system.matrix @ self.vector_).reshape(-1, 6)

    def score(self, X: Trajectory, y=None) -> float:
        """Negative RMS wrench residual over the windows of ``X``."""
        _check_fitted(self, "vector_")
        system = linear_system(check_trajectory(X), smoothing=False)
        return -float(np.sqrt(np.mean((system.matrix @ self.vector_ - system.rhs) ** 2)))


def _physical(vector):
    if not vector[0] > 0:
        return None
    try:
        mf = devectorize(vector)
        return params_from_body(mf.mass, mf.com, mf.inertia_body)
    except ValueError:
        return None


def _bounding_hull(traj: Trajectory) -> ConvexHull:
    """Axis-aligned box around the contact points, used by unconstrained variants."""
    pts = traj.points[traj.present]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = np.maximum(0.05 * (hi - lo).max(), 1e-3)
    return ConvexHull.box(lo - pad, hi + pad)


class FrictionEstimator(BaseEstimator):
    """Static friction coefficient from slip forces.

    ``fit`` takes an ``(N, 3)`` array of slip forces and an ``(N, 3)`` or
    ``(3,)`` array of pressing directions and stores the per-trial estimates
    and their median.
    """

    def __init__(self, servo: ServoConfig = None):
        self.servo = servo

    def fit(self, X, y=None):
        forces = np.atleast_2d(np.asarray(X, dtype=float))
        if forces.shape[1] != 3:
            raise ValueError("slip forces must have shape (N, 3)")
        normals = np.broadcast_to(np.asarray(y if y is not None else (0.0, 0.0, 1.0), float),
                                  forces.shape)
        self.mu_trials_ = np.array([estimate_mu(f, n) for f, n in zip(forces, normals)])
        self.mu_ = float(np.median(self.mu_trials_))
        return self

    def predict(self, X=None):
        _check_fitted(self, "mu_")
        n = 1 if X is None else len(np.atleast_2d(X))
        return np.full(n, self.mu_)


__all__ = ["InertialEstimator", "FrictionEstimator", "check_trajectory"]
