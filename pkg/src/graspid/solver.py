"""Levenberg-Marquardt over a :class:`~graspid.graph.FactorGraph`.

Normal equations are solved in three stages: every timestep's force and
contact-point block (coupled only through one dynamics factor) is eliminated
first, the resulting pose system is banded because a dynamics factor spans
three consecutive poses, and the ten inertial unknowns form a dense border
handled by a final Schur complement.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from . import _kernels as kernels
from .graph import DataError, FactorGraph, ManifoldInertia, SolverConfig, Values, VectorInertia
from .inertia import InertialParams, consistency_violations
from .lie import hat, retract_pose

POSE_DIM = 6
INERTIAL_DIM = 10


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one solve.

    ``params`` is an :class:`InertialParams` for the manifold variants and the
    raw ``[m, m c, H]`` vector for ``baseline-fg``.
    """

    params: object
    values: Values
    cost_trace: tuple
    termination: str
    wall_time: float
    iterations: int
    failed: bool = False
    variant: str = "c-no-g"
    violations: tuple = ()
    constraint_weight: float = 0.0
    messages: tuple = field(default=())

    @property
    def final_cost(self):
        return self.cost_trace[-1]

    @property
    def vector(self):
        """``[m, m c, H_xx, H_yy, H_zz, H_xy, H_xz, H_yz]`` about the body origin."""
        if isinstance(self.params, InertialParams):
            from .inertia import vectorize
            return vectorize(self.params)
        return np.asarray(self.params, dtype=float)


# ---------------------------------------------------------------------------
# linearization
# ---------------------------------------------------------------------------

@dataclass
class Linearization:
    r_pose: np.ndarray      # (T, 6)
    j_pose: np.ndarray      # (T, 6, 6)
    r_force: np.ndarray     # (T, n, 3)
    w_force: np.ndarray     # (T, n) diagonal Jacobian entries
    r_point: np.ndarray     # (T, n, 3)
    w_point: float
    r_dyn: np.ndarray       # (W, 6)
    j_dyn_x: np.ndarray     # (W, 6, 18)
    j_dyn_y: np.ndarray     # (W, 6, 6n)
    j_dyn_w: np.ndarray     # (W, 6, 10)
    r_extra: np.ndarray     # (k,) consistency and prior rows
    j_extra: np.ndarray     # (k, 10)


def _pose_jacobians(graph: FactorGraph, values: Values, h: float):
    t = graph.n_steps
    jac = np.empty((t, 6, 6))
    for j in range(6):
        d = np.zeros((t, 6))
        d[:, j] = h
        rp, pp = retract_pose(values.rots, values.positions, d)
        rm, pm = retract_pose(values.rots, values.positions, -d)
        jac[:, :, j] = (graph.pose_residuals(rp, pp) - graph.pose_residuals(rm, pm)) / (2 * h)
    return jac


def _windows(arr):
    return np.stack([arr[:-2], arr[1:-1], arr[2:]])


def _dynamics_pose_jacobian(graph: FactorGraph, values: Values, h: float):
    w = graph.n_windows
    rots, pos = _windows(values.rots), _windows(values.positions)
    jac = np.empty((w, 6, 18))
    for k in range(3):
        for j in range(6):
            d = np.zeros((w, 6))
            d[:, j] = h
            cols = []
            for sign in (1.0, -1.0):
                r2, p2 = rots.copy(), pos.copy()
                r2[k], p2[k] = retract_pose(rots[k], pos[k], sign * d)
                kin = graph.window_kinematics(r2, p2)
                cols.append(graph.dynamics_residuals(kin, values.forces, values.points,
                                                     values.inertial))
            jac[:, :, 6 * k + j] = (cols[0] - cols[1]) / (2 * h)
    return jac


def _dynamics_contact_jacobian(graph: FactorGraph, values: Values, kin, h, analytic):
    w, n = graph.n_windows, graph.n_contacts
    scale = graph.dyn_scale
    jac = np.zeros((w, 6, 6 * n))
    if analytic:
        f = values.forces[:w]
        p = values.points[:w]
        for i in range(n):
            jac[:, :3, 3 * i:3 * i + 3] = -np.eye(3)
            jac[:, 3:, 3 * i:3 * i + 3] = -hat(p[:, i])
            jac[:, 3:, 3 * (n + i):3 * (n + i) + 3] = hat(f[:, i])
        return jac * scale[:, None]
    for block, name in ((0, "forces"), (1, "points")):
        base = getattr(values, name)
        for i in range(n):
            for j in range(3):
                cols = []
                for sign in (1.0, -1.0):
                    arr = base.copy()
                    arr[:, i, j] += sign * h
                    f = arr if name == "forces" else values.forces
                    p = arr if name == "points" else values.points
                    cols.append(graph.dynamics_residuals(kin, f, p, values.inertial))
                jac[:, :, 3 * (block * n + i) + j] = (cols[0] - cols[1]) / (2 * h)
    return jac


def _inertial_jacobian(func, inertial, h):
    cols = []
    for j in range(INERTIAL_DIM):
        d = np.zeros(INERTIAL_DIM)
        d[j] = h
        cols.append((func(inertial.retract(d)) - func(inertial.retract(-d))) / (2 * h))
    return np.stack(cols, axis=-1)


def _dynamics_inertial_jacobian(graph, values, kin, h, analytic):
    if analytic and isinstance(values.inertial, VectorInertia):
        from .dynamics import regressor
        y = regressor(kin["omega_prev"], kin["omega_curr"], kin["linear_accel"],
                      kin["angular_accel"], kin["g_body"])
        return y * graph.dyn_scale[:, None]
    return _inertial_jacobian(
        lambda w: graph.dynamics_residuals(kin, values.forces, values.points, w),
        values.inertial, h)


def _extra_rows(graph: FactorGraph, inertial, h):
    rows, jacs = [], []
    if graph.has_constraints:
        rows.append(graph.constraint_residual(inertial))
        jacs.append(_hinge_jacobian(graph, inertial, h))
    if graph.has_prior:
        rows.append(graph.prior_residual(inertial))
        jacs.append(_inertial_jacobian(graph.prior_residual, inertial, h))
    if not rows:
        return np.zeros(0), np.zeros((0, INERTIAL_DIM))
    return np.concatenate(rows), np.concatenate(jacs, axis=0)


def _hinge_jacobian(graph, inertial, h):
    """Margins are linear in ``(m, c, L)``; the hinge keeps only active rows."""
    hull = graph.hull
    active = inertial.margins(hull) > 0
    jac = np.zeros((graph.constraint_dim, INERTIAL_DIM))
    jac[0, 0] = -1.0
    jac[1:4, 4:7] = -np.eye(3)
    jac[4:, 1:4] = hull.normals
    jac[~active] = 0.0
    return jac * graph.constraint_weight


def linearize(graph: FactorGraph, values: Values) -> Linearization:
    cfg = graph.config
    h = cfg.jacobian_step
    analytic = cfg.jacobian_mode == "analytic-where-available"
    kin = graph.window_kinematics(values.rots, values.positions)
    r_extra, j_extra = _extra_rows(graph, values.inertial, h)
    if cfg.jacobian_mode == "numeric" and graph.has_constraints:
        j_extra[:graph.constraint_dim] = _inertial_jacobian(graph.constraint_residual,
                                                            values.inertial, h)
    rots, pos, net_f, net_t = graph.kernel_args(values)
    m, mc, hb = values.inertial.terms()
    if analytic:
        # compiled central differences; the numpy path below is the reference
        j_pose = kernels.pose_jacobians(graph.meas_rots, graph.meas_pos, rots, pos,
                                        graph.pose_scale, h)
        j_dyn_x = kernels.dynamics_pose_jacobian(
            rots, pos, graph.stamps, graph.gravity, net_f, net_t, float(m),
            np.asarray(mc, float), np.asarray(hb, float), cfg.twist_mode == "se3",
            graph.dyn_scale, h)
    else:
        j_pose = _pose_jacobians(graph, values, h)
        j_dyn_x = _dynamics_pose_jacobian(graph, values, h)
    return Linearization(
        r_pose=graph.fast_pose_residuals(values),
        j_pose=j_pose,
        r_force=graph.force_residuals(values.forces),
        w_force=1.0 / graph.force_sigma,
        r_point=graph.point_residuals(values.points),
        w_point=1.0 / cfg.contact_sigma,
        r_dyn=graph.fast_dynamics_residuals(values),
        j_dyn_x=j_dyn_x,
        j_dyn_y=_dynamics_contact_jacobian(graph, values, kin, h, analytic),
        j_dyn_w=_dynamics_inertial_jacobian(graph, values, kin, h, analytic),
        r_extra=r_extra,
        j_extra=j_extra,
    )


# ---------------------------------------------------------------------------
# normal equations
# ---------------------------------------------------------------------------

@dataclass
class NormalEquations:
    hyy: np.ndarray   # (T, 6n, 6n)
    hyx: np.ndarray   # (W, 6n, 18)
    hyw: np.ndarray   # (W, 6n, 10)
    gy: np.ndarray    # (T, 6n)
    hxx_blocks: np.ndarray  # (T, 6, 6) from pose factors
    hxx_win: np.ndarray     # (W, 18, 18) from dynamics factors
    hxw: np.ndarray   # (W, 18, 10)
    gx: np.ndarray    # (T, 6)
    hww: np.ndarray   # (10, 10)
    gw: np.ndarray    # (10,)


def normal_equations(lin: Linearization, n_steps: int, n_contacts: int) -> NormalEquations:
    w = lin.r_dyn.shape[0]
    ny = 6 * n_contacts
    diag_y = np.concatenate([np.repeat(lin.w_force ** 2, 3, axis=1),
                             np.full((n_steps, 3 * n_contacts), lin.w_point ** 2)], axis=1)
    hyy = np.zeros((n_steps, ny, ny))
    idx = np.arange(ny)
    hyy[:, idx, idx] = diag_y
    jy, jx, jw, r = lin.j_dyn_y, lin.j_dyn_x, lin.j_dyn_w, lin.r_dyn
    jyt = np.swapaxes(jy, 1, 2)
    hyy[:w] += jyt @ jy
    gy = np.concatenate([(lin.w_force[..., None] * lin.r_force).reshape(n_steps, -1),
                         (lin.w_point * lin.r_point).reshape(n_steps, -1)], axis=1)
    gy[:w] += np.einsum("wij,wi->wj", jy, r)
    jpt = np.swapaxes(lin.j_pose, 1, 2)
    gx = np.einsum("tij,ti->tj", lin.j_pose, lin.r_pose)
    gx_win = np.einsum("wij,wi->wj", jx, r)
    for k in range(3):
        gx[k:k + w] += gx_win[:, 6 * k:6 * k + 6]
    jxt = np.swapaxes(jx, 1, 2)
    jwt = np.swapaxes(jw, 1, 2)
    hww = np.einsum("wki,wkj->ij", jw, jw) + lin.j_extra.T @ lin.j_extra
    gw = np.einsum("wij,wi->j", jw, r) + lin.j_extra.T @ lin.r_extra
    return NormalEquations(hyy, jyt @ jx, jyt @ jw, gy, jpt @ lin.j_pose, jxt @ jx, jxt @ jw,
                           gx, hww, gw)


class _BandLayout:
    """Index arrays scattering per-window 18x18 blocks into lower band storage."""

    def __init__(self, n_steps, n_windows):
        self.n = POSE_DIM * n_steps
        self.bandwidth = 3 * POSE_DIM - 1
        a, b = np.tril_indices(3 * POSE_DIM)
        off = POSE_DIM * np.arange(n_windows)[:, None]
        self.win_rows = (a - b)[None, :].repeat(n_windows, 0)
        self.win_cols = b[None, :] + off
        self.win_src = (a, b)
        a6, b6 = np.tril_indices(POSE_DIM)
        off6 = POSE_DIM * np.arange(n_steps)[:, None]
        self.blk_rows = (a6 - b6)[None, :].repeat(n_steps, 0)
        self.blk_cols = b6[None, :] + off6
        self.blk_src = (a6, b6)

    def assemble(self, blocks, win):
        ab = np.zeros((self.bandwidth + 1, self.n))
        np.add.at(ab, (self.blk_rows, self.blk_cols), blocks[:, self.blk_src[0], self.blk_src[1]])
        np.add.at(ab, (self.win_rows, self.win_cols), win[:, self.win_src[0], self.win_src[1]])
        return ab


def _scatter_windows(win_vecs, n_steps):
    """Sum per-window 18-row arrays onto their three poses."""
    w = win_vecs.shape[0]
    out = np.zeros((n_steps, POSE_DIM) + win_vecs.shape[2:])
    for k in range(3):
        out[k:k + w] += win_vecs[:, POSE_DIM * k:POSE_DIM * (k + 1)]
    return out


def _gather_windows(x, n_windows):
    return np.concatenate([x[k:k + n_windows] for k in range(3)], axis=1)


def solve_step(ne: NormalEquations, lam: float, layout: _BandLayout):
    """Damped Gauss-Newton step ``(dx, dy, dw)``; raises ``LinAlgError`` if the
    damped system is not positive definite."""
    n_steps = ne.gx.shape[0]
    w = ne.hyx.shape[0]

    def damp(h):
        d = np.diagonal(h, axis1=-2, axis2=-1)
        floor = 1e-9 * max(float(np.max(np.abs(d))), 1e-12)
        out = h.copy()
        idx = np.arange(h.shape[-1])
        out[..., idx, idx] += lam * (d + floor)
        return out

    hyy = damp(ne.hyy)
    rhs = np.concatenate([ne.hyx, ne.hyw, ne.gy[:w, :, None]], axis=2)
    sol = np.linalg.solve(hyy[:w], rhs)
    sol_x, sol_w, sol_g = sol[..., :18], sol[..., 18:28], sol[..., 28]
    hyx_t = np.swapaxes(ne.hyx, 1, 2)
    hyw_t = np.swapaxes(ne.hyw, 1, 2)
    win = ne.hxx_win - hyx_t @ sol_x
    hxw = _scatter_windows(ne.hxw - hyx_t @ sol_w, n_steps).reshape(-1, INERTIAL_DIM)
    hww = ne.hww - np.einsum("wij,wjk->ik", hyw_t, sol_w)
    gx = (ne.gx + _scatter_windows(-np.einsum("wij,wj->wi", hyx_t, sol_g), n_steps)).reshape(-1)
    gw = ne.gw - np.einsum("wij,wj->i", hyw_t, sol_g)

    # damping of the pose diagonal, applied on the undamped pose Hessian
    blocks = ne.hxx_blocks.copy()
    diag_pose = np.diagonal(ne.hxx_blocks, axis1=1, axis2=2).copy()
    diag_pose += _scatter_windows(np.diagonal(ne.hxx_win, axis1=1, axis2=2)[..., None],
                                  n_steps)[..., 0]
    floor = 1e-9 * max(float(diag_pose.max()), 1e-12)
    idx = np.arange(POSE_DIM)
    blocks[:, idx, idx] += lam * (diag_pose + floor)
    ab = layout.assemble(blocks, win)
    chol = cholesky_banded(ab, lower=True)
    rhs_x = np.concatenate([gx[:, None], hxw], axis=1)
    z = cho_solve_banded((chol, True), rhs_x)
    z_g, z_w = z[:, 0], z[:, 1:]
    hww_d = damp(ne.hww)[..., :, :] - ne.hww + hww
    schur = hww_d - hxw.T @ z_w
    schur = 0.5 * (schur + schur.T)
    dw = -np.linalg.solve(schur, gw - hxw.T @ z_g)
    if not np.all(np.isfinite(dw)):
        raise LinAlgError("singular inertial block")
    dx = -(z_g + z_w @ dw)
    dx_t = dx.reshape(n_steps, POSE_DIM)
    dy = np.empty_like(ne.gy)
    dy[:w] = -(sol_g + np.einsum("wij,wj->wi", sol_x, _gather_windows(dx_t, w)) + sol_w @ dw)
    if w < n_steps:
        dy[w:] = -np.linalg.solve(hyy[w:], ne.gy[w:, :, None])[..., 0]
    return dx_t, dy, dw


def _split_y(dy, n_contacts):
    t = dy.shape[0]
    return dy[:, :3 * n_contacts].reshape(t, n_contacts, 3), \
        dy[:, 3 * n_contacts:].reshape(t, n_contacts, 3)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _run_lm(graph: FactorGraph, values: Values, cfg: SolverConfig, trace: list, layout):
    lam = cfg.initial_damping
    cost = trace[-1]
    reason = "max-iterations"
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        ne = normal_equations(linearize(graph, values), graph.n_steps, graph.n_contacts)
        accepted = False
        while lam <= cfg.max_damping:
            try:
                dx, dy, dw = solve_step(ne, lam, layout)
                d_force, d_point = _split_y(dy, graph.n_contacts)
                candidate = values.retract(dx, d_force, d_point, dw)
                new_cost = graph.cost(candidate)
            except (LinAlgError, np.linalg.LinAlgError, DataError, FloatingPointError):
                new_cost = np.inf
            if new_cost < cost:
                accepted = True
                break
            lam *= cfg.damping_up
        if not accepted:
            reason = "max-damping"
            break
        decrease = (cost - new_cost) / max(cost, np.finfo(float).tiny)
        values, cost = candidate, new_cost
        trace.append(cost)
        lam = max(lam / cfg.damping_down, 1e-15)
        if decrease < cfg.tolerance:
            reason = "converged"
            break
    return values, reason, iterations


def _max_margin(graph: FactorGraph, inertial):
    return float(np.max(inertial.margins(graph.hull)))


def _snap_feasible(inertial: ManifoldInertia, hull):
    """Remove violations below the hinge tolerance: clip the moments and pull
    the CoM towards the hull centroid until it is inside."""
    moments = np.maximum(inertial.moments, 0.0)
    com = inertial.com
    margins = hull.margins(com)
    if np.any(margins > 0):
        centre = hull.centroid
        c_margins = hull.margins(centre)
        d = hull.normals @ (com - centre)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(d > 0, -c_margins / d, np.inf)
        com = centre + min(1.0, float(s.min())) * (1 - 1e-12) * (com - centre)
    return ManifoldInertia(inertial.mass, com, moments, inertial.rotation)


def solve(graph: FactorGraph, config: SolverConfig = None, init=None) -> SolveReport:
    """Levenberg-Marquardt from ``init`` (defaults from the config).

    Constrained variants get a hard feasibility check at convergence; if any
    hinge is still violated by more than the tolerance the constraint weight
    is escalated once and the solve resumed.  A remaining violation sets
    ``failed``.
    """
    cfg = config or graph.config
    start = time.perf_counter()
    graph.constraint_weight = cfg.constraint_weight
    values = graph.initial_values(init)
    layout = _BandLayout(graph.n_steps, graph.n_windows)
    trace = [graph.cost(values)]
    values, reason, iterations = _run_lm(graph, values, cfg, trace, layout)
    messages = []
    failed = False
    if graph.has_constraints:
        if _max_margin(graph, values.inertial) > cfg.hinge_tolerance:
            graph.constraint_weight = cfg.constraint_weight * cfg.escalation
            messages.append(f"constraint weight escalated to {graph.constraint_weight:g}")
            trace.append(graph.cost(values))
            values, reason, more = _run_lm(graph, values, cfg, trace, layout)
            iterations += more
        if _max_margin(graph, values.inertial) > cfg.hinge_tolerance:
            failed = True
            messages.append("consistency constraints violated at convergence")
        elif np.max(values.inertial.margins(graph.hull)) > 0 or values.inertial.mass <= 0:
            values = Values(values.rots, values.positions, values.forces, values.points,
                            _snap_feasible(values.inertial, graph.hull))
    if reason == "max-damping":
        messages.append("no decreasing step at maximum damping")
    if isinstance(values.inertial, ManifoldInertia):
        params = values.inertial.params()
        violations = tuple(consistency_violations(params, graph.hull))
    else:
        params = np.array(values.inertial.vector)
        violations = ()
    return SolveReport(params, values, tuple(trace), reason, time.perf_counter() - start,
                       iterations, failed, cfg.variant, violations, graph.constraint_weight,
                       tuple(messages))
