"""Factor graph over poses, contact forces, contact points and inertial parameters.

Variables are stored as stacked arrays so every factor kind is evaluated for
all timesteps at once.  The per-factor objects exposed in
:attr:`FactorGraph.factors` describe the graph and evaluate single residuals
through the same vectorized code.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as kernels
from .baseline import gravity_of
from .dynamics import wrench_terms
from .inertia import ConvexHull, InertialParams, constraint_margins, project_pseudo, sym_from_six
from .lie import Rotation, relative, retract_pose, se3_log, so3_exp, window_kinematics_batch
from .trajectory import Trajectory

VARIANTS = ("baseline-fg", "no-c-no-g", "c-no-g", "c-plus-g")
JACOBIAN_MODES = ("numeric", "analytic-where-available")
VARIABLE_KINDS = ("pose", "force", "contact", "inertial")
FACTOR_KINDS = ("M", "D", "C", "B")


class DataError(ValueError):
    """Non-finite residuals or otherwise unusable measurements."""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    initial_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 10.0
    max_damping: float = 1e10
    tolerance: float = 1e-9
    constraint_weight: float = 1e4
    escalation: float = 100.0
    hinge_tolerance: float = 1e-6
    variant: str = "c-no-g"
    jacobian_mode: str = "analytic-where-available"
    jacobian_step: float = 1e-6
    pose_rot_sigma: float = 1e-3
    pose_trans_sigma: float = 1e-3
    contact_sigma: float = 2e-3
    force_sigma_floor: float = 1e-2
    dynamics_force_sigma: float = 1e-1
    dynamics_torque_sigma: float = 1e-2
    prior_sigma: float = 1e-2
    init_mass: float = 0.1
    init_moment: float = 1e-4
    twist_mode: str = "se3"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.jacobian_mode not in JACOBIAN_MODES:
            raise ValueError(f"jacobian_mode must be one of {JACOBIAN_MODES}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        for name, value in self.__dict__.items():
            if isinstance(value, float) and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.damping_up <= 1 or self.damping_down <= 1:
            raise ValueError("damping factors must exceed 1")

    @property
    def constrained(self):
        return self.variant in ("c-no-g", "c-plus-g")

    @property
    def manifold(self):
        return self.variant != "baseline-fg"


@dataclass(frozen=True)
class VariableId:
    kind: str
    timestep: int = -1
    contact: int = -1

    def __post_init__(self):
        if self.kind not in VARIABLE_KINDS:
            raise ValueError(f"unknown variable kind {self.kind!r}")


# ---------------------------------------------------------------------------
# variable values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifoldInertia:
    """Solver-side ``(m, c, L, R)`` with local coordinates
    ``[dm, dc (3), dL (3), dR (3)]`` and retraction ``R exp(dR)``."""

    mass: float
    com: np.ndarray
    moments: np.ndarray
    rotation: np.ndarray
    dim = 10

    @classmethod
    def from_params(cls, p: InertialParams):
        return cls(p.mass, np.array(p.com), np.array(p.principal_moments),
                   p.principal_rotation.matrix())

    def params(self) -> InertialParams:
        return InertialParams(self.mass, self.com, self.moments,
                              Rotation.from_matrix(self.rotation))

    def terms(self):
        """``(m, m c, H_body)``"""
        lx, ly, lz = self.moments
        d = np.array([ly + lz, lx + lz, lx + ly])
        h = (self.rotation * d) @ self.rotation.T
        return self.mass, self.mass * self.com, 0.5 * (h + h.T)

    def retract(self, delta):
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (10,):
            raise ValueError("inertial delta must have 10 components")
        return ManifoldInertia(self.mass + delta[0], self.com + delta[1:4],
                               self.moments + delta[4:7], self.rotation @ so3_exp(delta[7:]))

    def margins(self, hull: ConvexHull):
        return np.concatenate([[-self.mass], -self.moments, hull.margins(self.com)])

    def pseudo(self):
        return _pseudo_from_terms(*self.terms())


@dataclass(frozen=True)
class VectorInertia:
    """Unconstrained ``[m, m c, H]`` with Euclidean retraction."""

    vector: np.ndarray
    dim = 10

    def terms(self):
        v = self.vector
        return v[0], v[1:4], sym_from_six(v[4:])

    def retract(self, delta):
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (10,):
            raise ValueError("inertial delta must have 10 components")
        return VectorInertia(self.vector + delta)

    def pseudo(self):
        return _pseudo_from_terms(*self.terms())


def _pseudo_from_terms(m, mc, h):
    out = np.empty((4, 4))
    out[:3, :3] = 0.5 * np.trace(h) * np.eye(3) - h
    out[:3, 3] = mc
    out[3, :3] = mc
    out[3, 3] = m
    return out


@dataclass(frozen=True)
class Values:
    """Current estimate of every variable."""

    rots: np.ndarray
    positions: np.ndarray
    forces: np.ndarray
    points: np.ndarray
    inertial: object

    def retract(self, d_pose, d_force, d_point, d_inertial) -> "Values":
        rots, pos = retract_pose(self.rots, self.positions, d_pose)
        return Values(rots, pos, self.forces + d_force, self.points + d_point,
                      self.inertial.retract(d_inertial))

    def get(self, var: VariableId):
        if var.kind == "pose":
            return self.rots[var.timestep], self.positions[var.timestep]
        if var.kind == "force":
            return self.forces[var.timestep, var.contact]
        if var.kind == "contact":
            return self.points[var.timestep, var.contact]
        return self.inertial

    def with_variable(self, var: VariableId, value) -> "Values":
        if var.kind == "inertial":
            return replace(self, inertial=value)
        if var.kind == "pose":
            rots, pos = self.rots.copy(), self.positions.copy()
            rots[var.timestep], pos[var.timestep] = value
            return replace(self, rots=rots, positions=pos)
        name = "forces" if var.kind == "force" else "points"
        arr = getattr(self, name).copy()
        arr[var.timestep, var.contact] = value
        return replace(self, **{name: arr})


def local_dim(var: VariableId) -> int:
    return {"pose": 6, "force": 3, "contact": 3, "inertial": 10}[var.kind]


def retract(var: VariableId, value, delta):
    """Retraction of a single variable value.

    Poses update as ``X exp(delta)``, the inertial rotation as ``R exp(dR)``
    and every other coordinate by plain addition.
    """
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if delta.size != local_dim(var):
        raise ValueError(f"{var.kind} delta must have {local_dim(var)} components")
    if var.kind == "pose":
        rot, pos = value
        return retract_pose(np.asarray(rot, float), np.asarray(pos, float), delta)
    if var.kind == "inertial":
        return value.retract(delta)
    return np.asarray(value, dtype=float) + delta


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Factor:
    """One factor: kind, connected variables, measurement and whitening.

    ``sqrt_info`` multiplies the raw error; its square is the block-diagonal
    weight (inverse covariance) matrix.
    """

    kind: str
    keys: tuple
    measured: object
    sqrt_info: np.ndarray
    graph: "FactorGraph" = field(repr=False, compare=False, default=None)
    index: int = 0
    label: str = ""

    @property
    def dim(self):
        return self.sqrt_info.shape[0]

    @property
    def weight(self):
        return self.sqrt_info.T @ self.sqrt_info

    def residual(self, values: Values) -> np.ndarray:
        return self.graph.factor_residual(self, values)


@dataclass
class FactorGraph:
    trajectory: Trajectory
    hull: ConvexHull
    config: SolverConfig
    prior: object = None
    _factors: list = field(default=None, repr=False)

    def __post_init__(self):
        traj = self.trajectory
        self.n_steps = len(traj)
        self.n_contacts = traj.n_contacts
        self.n_windows = self.n_steps - 2
        cfg = self.config
        self.meas_rots = np.ascontiguousarray(traj.rotations())
        self.meas_pos = np.array(traj.positions)
        self.gravity = gravity_of(traj)
        points, forces, sigmas = traj.effective()
        self.meas_forces = np.array(forces)
        self.meas_points = np.array(points)
        self.force_sigma = np.maximum(sigmas, cfg.force_sigma_floor)
        self.pose_scale = np.concatenate([np.full(3, 1 / cfg.pose_rot_sigma),
                                          np.full(3, 1 / cfg.pose_trans_sigma)])
        self.dyn_scale = np.concatenate([np.full(3, 1 / cfg.dynamics_force_sigma),
                                         np.full(3, 1 / cfg.dynamics_torque_sigma)])
        self.stamps = traj.stamps
        self.constraint_weight = cfg.constraint_weight
        if cfg.variant == "c-plus-g":
            if self.prior is None:
                raise ValueError("variant c-plus-g needs a prior")
            p0 = project_pseudo(self.prior)
            self.prior_inv = np.linalg.inv(p0)

    # -- structure -------------------------------------------------------

    @property
    def has_constraints(self):
        return self.config.constrained

    @property
    def has_prior(self):
        return self.config.variant == "c-plus-g"

    @property
    def constraint_dim(self):
        return 4 + len(self.hull.offsets)

    @property
    def factors(self):
        """Every factor of the graph in a fixed order."""
        if self._factors is None:
            self._factors = list(self._build_factors())
        return self._factors

    def _build_factors(self):
        n_t, n_c = self.n_steps, self.n_contacts
        w = VariableId("inertial")
        for t in range(n_t):
            yield Factor("M", (VariableId("pose", t),),
                         (self.meas_rots[t], self.meas_pos[t]), np.diag(self.pose_scale),
                         self, t, "pose")
        for t in range(n_t):
            for i in range(n_c):
                yield Factor("M", (VariableId("force", t, i),), self.meas_forces[t, i],
                             np.eye(3) / self.force_sigma[t, i], self, t * n_c + i, "force")
        for t in range(n_t):
            for i in range(n_c):
                yield Factor("M", (VariableId("contact", t, i),), self.meas_points[t, i],
                             np.eye(3) / self.config.contact_sigma, self, t * n_c + i,
                             "contact")
        for t in range(self.n_windows):
            keys = tuple(VariableId("pose", t + k) for k in range(3))
            keys += tuple(VariableId("force", t, i) for i in range(n_c))
            keys += tuple(VariableId("contact", t, i) for i in range(n_c))
            yield Factor("D", keys + (w,), None, np.diag(self.dyn_scale), self, t, "dynamics")
        if self.has_constraints:
            yield Factor("C", (w,), self.hull, np.eye(self.constraint_dim) * self.constraint_weight,
                         self, 0, "consistency")
        if self.has_prior:
            yield Factor("B", (w,), self.prior, np.eye(1) / self.config.prior_sigma, self, 0,
                         "geodesic")

    def count(self, kind: str, label: str = None):
        return sum(1 for f in self.factors if f.kind == kind and (label is None or f.label == label))

    # -- initialization --------------------------------------------------

    def initial_values(self, init=None) -> Values:
        cfg = self.config
        if init is None:
            init = InertialParams(cfg.init_mass, self.hull.centroid, np.full(3, cfg.init_moment))
        if cfg.manifold:
            if isinstance(init, VectorInertia):
                raise TypeError("manifold variants need InertialParams initialization")
            inertial = ManifoldInertia.from_params(init)
        elif isinstance(init, InertialParams):
            m, mc, h = ManifoldInertia.from_params(init).terms()
            inertial = VectorInertia(np.concatenate([[m], mc, [h[0, 0], h[1, 1], h[2, 2],
                                                              h[0, 1], h[0, 2], h[1, 2]]]))
        else:
            inertial = VectorInertia(np.asarray(init, dtype=float).reshape(10))
        if not np.all(np.isfinite(inertial.terms()[2])) or not np.isfinite(inertial.terms()[0]):
            raise ValueError("initial inertial parameters must be finite")
        return Values(self.meas_rots.copy(), self.meas_pos.copy(), self.meas_forces.copy(),
                      self.meas_points.copy(), inertial)

    # -- vectorized residuals --------------------------------------------

    def pose_residuals(self, rots, pos):
        rel_r, rel_t = relative(self.meas_rots, self.meas_pos, rots, pos)
        return se3_log(rel_r, rel_t) * self.pose_scale

    def force_residuals(self, forces):
        return (forces - self.meas_forces) / self.force_sigma[..., None]

    def point_residuals(self, points):
        return (points - self.meas_points) / self.config.contact_sigma

    def window_kinematics(self, rots, pos):
        """Stacked windows ``(t, t+1, t+2)``; ``rots`` may carry the window
        axis already as shape ``(3, W, 3, 3)``."""
        if rots.ndim == 3:
            rots = np.stack([rots[:-2], rots[1:-1], rots[2:]])
            pos = np.stack([pos[:-2], pos[1:-1], pos[2:]])
        st = np.stack([self.stamps[:-2], self.stamps[1:-1], self.stamps[2:]])
        k = window_kinematics_batch(rots, pos, st, self.config.twist_mode)
        k["g_body"] = np.einsum("tji,j->ti", rots[0], self.gravity)
        return k

    def dynamics_residuals(self, kin, forces, points, inertial):
        """Whitened ``[A - sum f; B - sum p x f]`` for every window."""
        m, mc, h = inertial.terms()
        a, b = wrench_terms(m, mc, h, kin["omega_prev"], kin["omega_curr"],
                            kin["linear_accel"], kin["angular_accel"], kin["g_body"])
        f = forces[: self.n_windows]
        p = points[: self.n_windows]
        res = np.concatenate([a - f.sum(axis=1), b - np.cross(p, f).sum(axis=1)], axis=1)
        return res * self.dyn_scale

    def constraint_residual(self, inertial):
        return constraint_residual(inertial, self.hull, self.constraint_weight)

    def prior_residual(self, inertial):
        value = np.trace(self.prior_inv @ inertial.pseudo())
        return np.array([(value - 4.0) / self.config.prior_sigma])

    def kernel_args(self, values: Values):
        """Arguments shared by the compiled pose and dynamics kernels."""
        f = values.forces[: self.n_windows]
        p = values.points[: self.n_windows]
        return (np.ascontiguousarray(values.rots), np.ascontiguousarray(values.positions),
                f.sum(axis=1), np.cross(p, f).sum(axis=1))

    def fast_pose_residuals(self, values: Values):
        rots, pos, _, _ = self.kernel_args(values)
        return kernels.pose_residuals(self.meas_rots, self.meas_pos, rots, pos, self.pose_scale)

    def fast_dynamics_residuals(self, values: Values):
        rots, pos, net_f, net_t = self.kernel_args(values)
        m, mc, h = values.inertial.terms()
        return kernels.dynamics_residuals(rots, pos, self.stamps, self.gravity, net_f, net_t,
                                          float(m), np.asarray(mc, float), np.asarray(h, float),
                                          self.config.twist_mode == "se3", self.dyn_scale)

    def residual_blocks(self, values: Values):
        blocks = {
            "pose": self.fast_pose_residuals(values),
            "force": self.force_residuals(values.forces),
            "contact": self.point_residuals(values.points),
            "dynamics": self.fast_dynamics_residuals(values),
        }
        if self.has_constraints:
            blocks["consistency"] = self.constraint_residual(values.inertial)
        if self.has_prior:
            blocks["geodesic"] = self.prior_residual(values.inertial)
        return blocks

    def cost(self, values: Values) -> float:
        """Total weighted squared residual."""
        total = 0.0
        for block in self.residual_blocks(values).values():
            total += float(np.sum(block * block))
        if not np.isfinite(total):
            raise DataError("non-finite residual")
        return total

    def factor_residual(self, factor: Factor, values: Values) -> np.ndarray:
        t = factor.index
        if factor.kind == "M":
            var = factor.keys[0]
            if var.kind == "pose":
                return _pose_residual(values.get(var), factor.measured, self.pose_scale)
            return factor.sqrt_info @ (values.get(var) - factor.measured)
        if factor.kind == "D":
            sl = slice(t, t + 3)
            st = self.stamps[sl]
            kin = window_kinematics_batch(values.rots[sl][:, None], values.positions[sl][:, None],
                                          st[:, None], self.config.twist_mode)
            kin["g_body"] = (values.rots[t].T @ self.gravity)[None]
            m, mc, h = values.inertial.terms()
            a, b = wrench_terms(m, mc, h, kin["omega_prev"], kin["omega_curr"],
                                kin["linear_accel"], kin["angular_accel"], kin["g_body"])
            f, p = values.forces[t], values.points[t]
            res = np.concatenate([a[0] - f.sum(axis=0), b[0] - np.cross(p, f).sum(axis=0)])
            return res * self.dyn_scale
        if factor.kind == "C":
            return self.constraint_residual(values.inertial)
        return self.prior_residual(values.inertial)


def _pose_residual(value, measured, scale):
    rot, pos = value
    rel_r, rel_t = relative(measured[0], measured[1], rot, pos)
    return se3_log(rel_r, rel_t) * scale


def constraint_residual(p, hull: ConvexHull, weight: float) -> np.ndarray:
    """Hinge residual ``weight * max(0, margin)`` for mass, moments and hull faces."""
    if isinstance(p, InertialParams):
        margins = constraint_margins(p, hull)
    else:
        margins = p.margins(hull)
    return weight * np.maximum(0.0, margins)


def build_graph(dataset: Trajectory, hull: ConvexHull, config: SolverConfig = SolverConfig(),
                prior=None) -> FactorGraph:
    """Graph with one measurement factor per observation, one dynamics factor
    per window and the consistency/prior factors the variant asks for."""
    if len(dataset) < 3:
        raise ValueError("the dataset needs at least 3 timesteps")
    if dataset.n_contacts < 1:
        raise ValueError("the dataset has no contacts")
    return FactorGraph(dataset, hull, config, prior)


def numeric_jacobian(factor: Factor, values: Values, step: float = 1e-6) -> dict:
    """Central-difference Jacobian of one factor in local coordinates.

    Returns a mapping from each connected :class:`VariableId` to its block.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    out = {}
    for var in factor.keys:
        n = local_dim(var)
        base = values.get(var)
        cols = []
        for j in range(n):
            d = np.zeros(n)
            d[j] = step
            plus = factor.residual(values.with_variable(var, retract(var, base, d)))
            minus = factor.residual(values.with_variable(var, retract(var, base, -d)))
            cols.append((plus - minus) / (2 * step))
        out[var] = np.stack(cols, axis=1)
    return out
