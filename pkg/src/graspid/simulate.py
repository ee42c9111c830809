"""Deterministic rigid-body simulator with prescribed multi-contact forces.

The integrator is a semi-implicit Euler scheme on the body twist.  Its wrench
balance is the same discrete relation the dynamics factor evaluates: the force
applied at step ``j`` is balanced in the body frame of step ``j``, against the
twist change between the intervals ``[j, j+1]`` and ``[j+1, j+2]``, with the
second twist carried to frame ``j`` by the first-order transport.  Sampling at
the integration rate therefore produces data on which the ground-truth
parameters zero the dynamics residual up to round-off; sampling coarser adds
the usual finite-difference error of the estimator, not integrator error.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np

from . import _kernels as kernels
from .dynamics import STANDARD_GRAVITY
from .inertia import ConvexHull, InertialParams, body_inertia, consistency_violations
from .lie import Pose, Rotation, Twist, matrix_to_quat, quat_canonical, quat_exp, quat_multiply
from .trajectory import Trajectory

PLACEHOLDER_SIGMA = 1e-6


class SingularInertiaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# model and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RigidBodyModel:
    params: InertialParams
    hull: ConvexHull
    contact_points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.contact_points, dtype=float).reshape(-1, 3)
        if pts.shape[0] < 1:
            raise ValueError("at least one contact point is required")
        if consistency_violations(self.params, self.hull):
            raise ValueError("model parameters are not physically consistent")
        for p in pts:
            if not self.hull.contains(p, tol=1e-6):
                raise ValueError(f"contact point {p} lies outside the hull")
        pts.setflags(write=False)
        object.__setattr__(self, "contact_points", pts)

    @property
    def centroid(self):
        return self.hull.centroid


@dataclass(frozen=True)
class ExcitationProfile:
    """Reference motion tracked by a computed-wrench controller.

    The body origin follows ``A_i sin(2 pi f_i t + phase)`` along each world
    axis and the orientation follows a rotation vector with per-axis amplitude
    ``B_i`` at the same frequencies (permuted).  ``jitter_amplitude`` adds a
    fast oscillating force through the CoM, useful for producing motion that a
    100 Hz sampler under-resolves.
    """

    translation_amplitude: tuple = (0.08, 0.08, 0.08)
    rotation_amplitude: tuple = (0.25, 0.2, 0.2)
    frequencies: tuple = (0.7, 1.1, 1.3)
    jitter_amplitude: tuple = (0.0, 0.0, 0.0)
    jitter_frequencies: tuple = (23.0, 29.0, 37.0)
    squeeze: float = 5.0
    stiffness: float = 40.0
    damping: float = 12.0
    random_phase: bool = True

    def scaled(self, factor):
        return replace(self,
                       translation_amplitude=tuple(factor * a for a in self.translation_amplitude),
                       rotation_amplitude=tuple(factor * a for a in self.rotation_amplitude))


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    sample_period: float = 0.01
    duration: float = 10.0
    gravity: tuple = tuple(STANDARD_GRAVITY)
    profile: ExcitationProfile = field(default_factory=ExcitationProfile)
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.dt > self.sample_period * (1 + 1e-12):
            raise ValueError("dt must not exceed the sample period")
        ratio = self.sample_period / self.dt
        if abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("sample period must be an integer multiple of dt")
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    @property
    def substeps(self):
        return int(round(self.sample_period / self.dt))

    @property
    def n_samples(self):
        return int(round(self.duration / self.sample_period))


@dataclass(frozen=True)
class RigidState:
    pose: Pose
    twist: Twist


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

_cross = kernels.cross
_hat = kernels.hat
_so3_exp = kernels.so3_exp
_so3_log = kernels.so3_log
_left_jacobian = kernels.left_jacobian


@numba.njit(cache=True)
def _discrete_accel(mass, mc, h, g_body, omega, force, torque, dt):
    """Solve the discrete wrench balance for ``(a, alpha)`` in the frame where
    ``force``/``torque`` act, with ``omega`` the twist of the first interval."""
    lhs = np.zeros((6, 6))
    rhs = np.zeros(6)
    wc = _cross(omega, mc)
    hw = h @ omega
    for i in range(3):
        lhs[i, i] = mass
    top = -_hat(mc) - dt * _hat(wc)
    bottom = h - dt * _hat(hw)
    mc_hat = _hat(mc)
    for i in range(3):
        for j in range(3):
            lhs[i, 3 + j] = top[i, j]
            lhs[3 + i, j] = mc_hat[i, j]
            lhs[3 + i, 3 + j] = bottom[i, j]
    f = force + mass * g_body - _cross(omega, wc)
    t = torque + _cross(mc, g_body) - _cross(omega, hw)
    for i in range(3):
        rhs[i] = f[i]
        rhs[3 + i] = t[i]
    sol = np.linalg.solve(lhs, rhs)
    return sol[:3], sol[3:]


@numba.njit(cache=True)
def _advance(r, p, xi, mass, mc, h, gravity, force, torque, dt):
    """One integrator step from ``(X_j, xi_{j-1,j})`` with the wrench of step
    ``j - 1``; returns the next pose and twist plus the accelerations."""
    omega = xi[:3].copy()
    vel = xi[3:].copy()
    r_prev = r @ _so3_exp(-omega * dt)
    g_body = r_prev.T @ gravity
    lin, ang = _discrete_accel(mass, mc, h, g_body, omega, force, torque, dt)
    w_new = omega + ang * dt
    v_new = vel + lin * dt
    carry = np.eye(3) + dt * _hat(omega)
    w_next = np.linalg.solve(carry, w_new)
    v_next = np.linalg.solve(carry, v_new)
    xi_next = np.empty(6)
    xi_next[:3] = w_next
    xi_next[3:] = v_next
    phi = w_next * dt
    r_new = r @ _so3_exp(phi)
    p_new = p + r @ (_left_jacobian(phi) @ (v_next * dt))
    return r_new, p_new, xi_next, lin, ang, w_new


@numba.njit(cache=True)
def _control(t, r, p, xi, mass, mc, h, gravity, ref_r, ref_p, amp_p, amp_r, freq_p, freq_r,
             phase_p, phase_r, jit_amp, jit_freq, jit_phase, kp, kd):
    two_pi = 2.0 * np.pi
    pd = ref_p.copy()
    vd = np.zeros(3)
    ad = np.zeros(3)
    th = np.zeros(3)
    thd = np.zeros(3)
    thdd = np.zeros(3)
    for i in range(3):
        wp = two_pi * freq_p[i]
        s = np.sin(wp * t + phase_p[i])
        c = np.cos(wp * t + phase_p[i])
        pd[i] += amp_p[i] * s
        vd[i] = amp_p[i] * wp * c
        ad[i] = -amp_p[i] * wp * wp * s
        wr = two_pi * freq_r[i]
        s = np.sin(wr * t + phase_r[i])
        c = np.cos(wr * t + phase_r[i])
        th[i] = amp_r[i] * s
        thd[i] = amp_r[i] * wr * c
        thdd[i] = -amp_r[i] * wr * wr * s
    rd = ref_r @ _so3_exp(th)
    omega = xi[:3]
    v_world = r @ xi[3:]
    a_world = ad + kp * (pd - p) + kd * (vd - v_world)
    a_body = r.T @ a_world
    rel = r.T @ rd
    w_des = rel @ thd
    alpha = rel @ thdd + kp * _so3_log(rel) + kd * (w_des - omega)
    g_body = r.T @ gravity
    lin = a_body - g_body
    hw = h @ omega
    force = mass * lin + _cross(alpha, mc) + _cross(omega, _cross(omega, mc))
    torque = _cross(mc, lin) + h @ alpha + _cross(omega, hw)
    for i in range(3):
        jit = jit_amp[i] * np.sin(two_pi * jit_freq[i] * t + jit_phase[i])
        force[i] += jit
    com = mc / mass
    e = np.zeros(3)
    for i in range(3):
        e[i] = jit_amp[i] * np.sin(two_pi * jit_freq[i] * t + jit_phase[i])
    torque += _cross(com, e)
    return force, torque


@numba.njit(cache=True)
def _integrate(mass, mc, h, gravity, dt, n_samples, every, r0, p0, xi0,
               ref_r, ref_p, amp_p, amp_r, freq_p, freq_r, phase_p, phase_r,
               jit_amp, jit_freq, jit_phase, kp, kd):
    rots = np.empty((n_samples, 3, 3))
    pos = np.empty((n_samples, 3))
    wrench = np.empty((n_samples, 6))
    acc = np.empty((n_samples, 6))
    w_prev = np.empty((n_samples, 3))
    w_curr = np.empty((n_samples, 3))
    frame_g = np.empty((n_samples, 3))

    r = r0.copy()
    p = p0.copy()
    xi = xi0.copy()
    r_prev = r @ _so3_exp(-xi[:3] * dt)
    p_prev = p - r_prev @ (_left_jacobian(xi[:3] * dt) @ (xi[3:] * dt))
    f_prev, t_prev = _control(-dt, r_prev, p_prev, xi, mass, mc, h, gravity, ref_r, ref_p,
                              amp_p, amp_r, freq_p, freq_r, phase_p, phase_r,
                              jit_amp, jit_freq, jit_phase, kp, kd)
    n_steps = (n_samples - 1) * every + 2
    for j in range(n_steps):
        f, tq = _control(j * dt, r, p, xi, mass, mc, h, gravity, ref_r, ref_p,
                         amp_p, amp_r, freq_p, freq_r, phase_p, phase_r,
                         jit_amp, jit_freq, jit_phase, kp, kd)
        if j % every == 0 and j // every < n_samples:
            k = j // every
            rots[k] = r
            pos[k] = p
            wrench[k, :3] = f
            wrench[k, 3:] = tq
        r_new, p_new, xi_new, lin, ang, w_new = _advance(r, p, xi, mass, mc, h, gravity,
                                                         f_prev, t_prev, dt)
        if j >= 1 and (j - 1) % every == 0 and (j - 1) // every < n_samples:
            k = (j - 1) // every
            acc[k, :3] = ang
            acc[k, 3:] = lin
            w_prev[k] = xi[:3]
            w_curr[k] = w_new
            frame_g[k] = (r @ _so3_exp(-xi[:3] * dt)).T @ gravity
        r, p, xi = r_new, p_new, xi_new
        f_prev, t_prev = f, tq
    return rots, pos, wrench, acc, w_prev, w_curr, frame_g


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _mass_arrays(params: InertialParams):
    h = body_inertia(params)
    return float(params.mass), params.mass * np.asarray(params.com), np.ascontiguousarray(h)


def _check_inertia(params: InertialParams):
    if np.sum(np.asarray(params.principal_moments) <= 0.0) >= 2:
        raise SingularInertiaError("two or more vanishing principal moments give a singular inertia")


def step(state: RigidState, model: RigidBodyModel, forces, dt: float,
         gravity=STANDARD_GRAVITY) -> RigidState:
    """Advance one step under body-frame contact ``forces`` (one per contact
    point of ``model``).

    The state's twist is the constant twist of the interval that ended at the
    state's pose; gravity is resolved in the frame one step back, where the
    forces are balanced.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_inertia(model.params)
    forces = np.asarray(forces, dtype=float).reshape(-1, 3)
    net_f = forces.sum(axis=0)
    net_t = np.cross(model.contact_points, forces).sum(axis=0)
    mass, mc, h = _mass_arrays(model.params)
    r_new, p_new, xi_new, *_ = _advance(
        state.pose.rotation.matrix(), np.array(state.pose.translation), state.twist.vector(),
        mass, mc, h, np.asarray(gravity, dtype=float), net_f, net_t, float(dt))
    return RigidState(Pose(Rotation.from_matrix(r_new), p_new), Twist.from_vector(xi_new))


def grasp_matrix(points):
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    g = np.zeros((6, 3 * n))
    for i, p in enumerate(points):
        g[:3, 3 * i:3 * i + 3] = np.eye(3)
        g[3:, 3 * i:3 * i + 3] = np.array([[0, -p[2], p[1]], [p[2], 0, -p[0]], [-p[1], p[0], 0]])
    return g


def distribute_wrench(points, wrench, squeeze: float = 0.0, center=None):
    """Split a net body-frame wrench over contact points.

    The minimum-norm distribution is combined with an internal squeeze that
    pushes every contact towards ``center`` and is projected onto the null
    space of the grasp map, so the net wrench is unchanged.
    """
    points = np.asarray(points, dtype=float)
    wrench = np.asarray(wrench, dtype=float)
    g = grasp_matrix(points)
    g_pinv = np.linalg.pinv(g)
    forces = g_pinv @ wrench
    if squeeze and points.shape[0] > 1:
        center = points.mean(axis=0) if center is None else np.asarray(center, dtype=float)
        inward = center - points
        norms = np.linalg.norm(inward, axis=1, keepdims=True)
        inward = np.where(norms > 0, inward / np.where(norms > 0, norms, 1.0), 0.0)
        internal = squeeze * inward.reshape(-1)
        forces = forces + internal - g_pinv @ (g @ internal)
    return forces.reshape(-1, 3)


def _phases(profile: ExcitationProfile, seed: int):
    rng = np.random.default_rng(seed)
    if profile.random_phase:
        return rng.uniform(0, 2 * np.pi, size=(3, 3))
    return np.zeros((3, 3))


def commanded_wrench(model: RigidBodyModel, time: float, profile: ExcitationProfile,
                     state: RigidState = None, gravity=STANDARD_GRAVITY, seed: int = 0):
    """Net body-frame wrench the excitation controller requests at ``time``.

    Without ``state`` the body is assumed to sit exactly on the reference.
    """
    mass, mc, h = _mass_arrays(model.params)
    phases = _phases(profile, seed)
    ref_r, ref_p = np.eye(3), np.zeros(3)
    amp_p = np.asarray(profile.translation_amplitude, float)
    amp_r = np.asarray(profile.rotation_amplitude, float)
    freq = np.asarray(profile.frequencies, float)
    freq_r = freq[[1, 2, 0]]
    if state is None:
        th = amp_r * np.sin(2 * np.pi * freq_r * time + phases[1])
        pos = amp_p * np.sin(2 * np.pi * freq * time + phases[0])
        from .lie import so3_exp
        r = so3_exp(th)
        vel_w = amp_p * 2 * np.pi * freq * np.cos(2 * np.pi * freq * time + phases[0])
        w = amp_r * 2 * np.pi * freq_r * np.cos(2 * np.pi * freq_r * time + phases[1])
        xi = np.concatenate([w, r.T @ vel_w])
    else:
        r = state.pose.rotation.matrix()
        pos = np.array(state.pose.translation)
        xi = state.twist.vector()
    f, t = _control(float(time), r, pos, xi, mass, mc, h, np.asarray(gravity, float),
                    ref_r, ref_p, amp_p, amp_r, freq, freq_r, phases[0], phases[1],
                    np.asarray(profile.jitter_amplitude, float),
                    np.asarray(profile.jitter_frequencies, float), phases[2],
                    float(profile.stiffness), float(profile.damping))
    return np.concatenate([f, t])


def synthesize_grasp_forces(model: RigidBodyModel, time: float, profile: ExcitationProfile,
                            state: RigidState = None, gravity=STANDARD_GRAVITY, seed: int = 0):
    """Per-contact body-frame forces realizing :func:`commanded_wrench`."""
    wrench = commanded_wrench(model, time, profile, state, gravity, seed)
    return distribute_wrench(model.contact_points, wrench, profile.squeeze, model.centroid)


def run_sim(model: RigidBodyModel, config: SimConfig = SimConfig()) -> Trajectory:
    """Integrate the excitation and sample poses and contact forces.

    Contact observations carry the exact applied forces with a placeholder
    sigma of 1e-6 N.  ``Trajectory.truth`` holds the integrator's own
    accelerations and velocities at each sample, expressed like the estimator's
    kinematic windows.
    """
    _check_inertia(model.params)
    profile = config.profile
    mass, mc, h = _mass_arrays(model.params)
    phases = _phases(profile, config.seed)
    freq = np.asarray(profile.frequencies, float)
    rots, pos, wrench, acc, w_prev, w_curr, frame_g = _integrate(
        mass, mc, h, np.asarray(config.gravity, float), float(config.dt), config.n_samples,
        config.substeps, np.eye(3), np.zeros(3), _initial_twist(profile, phases),
        np.eye(3), np.zeros(3),
        np.asarray(profile.translation_amplitude, float),
        np.asarray(profile.rotation_amplitude, float), freq, freq[[1, 2, 0]],
        phases[0], phases[1], np.asarray(profile.jitter_amplitude, float),
        np.asarray(profile.jitter_frequencies, float), phases[2],
        float(profile.stiffness), float(profile.damping))
    if not np.all(np.isfinite(pos)):
        raise FloatingPointError("simulation diverged")

    g = grasp_matrix(model.contact_points)
    g_pinv = np.linalg.pinv(g)
    internal = np.zeros(3 * len(model.contact_points))
    if profile.squeeze and len(model.contact_points) > 1:
        inward = model.centroid - model.contact_points
        inward /= np.linalg.norm(inward, axis=1, keepdims=True)
        internal = profile.squeeze * inward.reshape(-1)
        internal = internal - g_pinv @ (g @ internal)
    forces = (wrench @ g_pinv.T + internal).reshape(len(pos), -1, 3)

    n_t, n_c = forces.shape[:2]
    stamps = np.arange(n_t) * config.sample_period
    points = np.broadcast_to(model.contact_points, (n_t, n_c, 3))
    truth = {"linear_accel": acc[:, 3:], "angular_accel": acc[:, :3], "omega_prev": w_prev,
             "omega_curr": w_curr, "g_body": frame_g, "wrench": wrench}
    meta = {"seed": int(config.seed), "noise_sigma2": 0.0, "source": "sim"}
    return Trajectory(stamps, matrix_to_quat(rots), pos, np.arange(n_c), points, forces,
                      np.full((n_t, n_c), PLACEHOLDER_SIGMA), None, meta, truth)


def _initial_twist(profile, phases):
    """Start on the reference velocity so the controller has no transient."""
    freq = np.asarray(profile.frequencies, float)
    freq_r = freq[[1, 2, 0]]
    amp_p = np.asarray(profile.translation_amplitude, float)
    amp_r = np.asarray(profile.rotation_amplitude, float)
    vel = amp_p * 2 * np.pi * freq * np.cos(phases[0])
    w = amp_r * 2 * np.pi * freq_r * np.cos(phases[1])
    return np.concatenate([w, vel])


def add_force_noise(traj: Trajectory, sigma2: float, seed: int) -> Trajectory:
    """I.i.d. zero-mean Gaussian noise of variance ``sigma2`` on every force axis."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if sigma2 == 0:
        return traj
    rng = np.random.default_rng(seed)
    sigma = float(np.sqrt(sigma2))
    forces = traj.forces + rng.normal(0.0, sigma, size=traj.forces.shape)
    meta = dict(traj.metadata, noise_sigma2=float(sigma2), noise_seed=int(seed))
    return traj.with_arrays(forces=forces, sigmas=np.full_like(traj.sigmas, sigma),
                            metadata=meta)


def add_pose_noise(traj: Trajectory, rot_sigma: float, trans_sigma: float, seed: int) -> Trajectory:
    """Right-perturb every pose by ``exp`` of Gaussian local noise."""
    if rot_sigma < 0 or trans_sigma < 0:
        raise ValueError("sigmas must be non-negative")
    if rot_sigma == 0 and trans_sigma == 0:
        return traj
    rng = np.random.default_rng(seed)
    n = len(traj)
    d_rot = rng.normal(0.0, rot_sigma, size=(n, 3))
    d_trans = rng.normal(0.0, trans_sigma, size=(n, 3))
    quats = quat_canonical(quat_multiply(traj.quats, quat_exp(d_rot)))
    rots = traj.rotations()
    positions = traj.positions + np.einsum("tij,tj->ti", rots, d_trans)
    meta = dict(traj.metadata, pose_noise=[float(rot_sigma), float(trans_sigma)])
    return traj.with_arrays(quats=quats, positions=positions, metadata=meta)


def as_wrist_ft(traj: Trajectory, offset: float = 0.1) -> Trajectory:
    """Collapse the contacts into a wrist force/torque style dataset.

    The net wrench about the body origin is carried by three virtual contacts:
    one at the origin and two at ``offset`` along x and y, which is enough to
    express any torque with point forces.
    """
    net_f = traj.forces.sum(axis=1)
    net_t = np.cross(traj.points, traj.forces).sum(axis=1)
    n = len(traj)
    f1 = np.stack([np.zeros(n), net_t[:, 2] / offset, -net_t[:, 1] / offset], axis=1)
    f2 = np.stack([np.zeros(n), np.zeros(n), net_t[:, 0] / offset], axis=1)
    f0 = net_f - f1 - f2
    points = np.broadcast_to(np.array([[0, 0, 0], [offset, 0, 0], [0, offset, 0]], float),
                             (n, 3, 3))
    sigma = traj.sigmas.max(axis=1, keepdims=True).repeat(3, axis=1)
    meta = dict(traj.metadata, source="wrist-ft-style")
    return Trajectory(traj.stamps, traj.quats, traj.positions, np.arange(3), points,
                      np.stack([f0, f1, f2], axis=1), sigma, None, meta, traj.truth)


# reference object: Table I ground truth of the simulated study
TABLE_I_MASS = 1.3
TABLE_I_COM = (0.2, 0.5, 0.1)
TABLE_I_INERTIA_CM = np.array([[40.15, -12.97, -2.59],
                               [-12.97, 12.92, -6.49],
                               [-2.59, -6.49, 47.99]]) * 1e-2


def reference_model() -> RigidBodyModel:
    """Four-contact box grasp with the simulated object's ground-truth inertia."""
    from .inertia import params_from_matrix
    params = params_from_matrix(TABLE_I_MASS, TABLE_I_COM, TABLE_I_INERTIA_CM)
    hull = ConvexHull.box([-0.3, 0.0, -0.3], [0.5, 0.8, 0.3])
    points = np.array([[-0.3, 0.4, 0.0],
                       [0.5, 0.2, 0.1],
                       [0.5, 0.4, -0.1],
                       [0.5, 0.6, 0.1]])
    return RigidBodyModel(params, hull, points)
