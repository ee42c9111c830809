"""Rotation and rigid-transform algebra plus finite-difference body kinematics.

Every function with a ``_batch`` suffix (and the lower-case helpers such as
:func:`hat`, :func:`so3_exp`, :func:`se3_log`) broadcasts over leading axes so
that whole trajectories can be processed at once.  The small value classes
(:class:`Rotation`, :class:`Pose`, :class:`Twist`, ...) wrap single elements
and are immutable.

Twists are ordered angular first: ``xi = (omega, v)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SMALL_ANGLE = 1e-7
_SERIES_ANGLE = 1e-2
MIN_DT = 1e-9


class DegenerateTimestampError(ValueError):
    """Raised when consecutive stamps are not strictly increasing."""


# ---------------------------------------------------------------------------
# batch primitives
# ---------------------------------------------------------------------------

def hat(v):
    """Cross-product matrix, ``hat(x) @ y == cross(x, y)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(m):
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def quat_multiply(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_canonical(q):
    """Normalize and flip sign so that ``w >= 0``."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., :1] < 0.0, -q, q)


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def matrix_to_quat(m):
    """Rotation matrix to canonical quaternion.

    Branches on the largest of the trace and the three diagonal entries, which
    keeps the recovered axis well conditioned near a half turn.
    """
    m = np.asarray(m, dtype=float)
    shape = m.shape[:-2]
    m = m.reshape(-1, 3, 3)
    tr = np.trace(m, axis1=1, axis2=2)
    diag = np.stack([tr, m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]], axis=1)
    branch = np.argmax(diag, axis=1)
    q = np.empty((m.shape[0], 4))

    i = branch == 0
    s = 2.0 * np.sqrt(1.0 + tr[i])
    q[i] = np.stack([0.25 * s,
                     (m[i, 2, 1] - m[i, 1, 2]) / s,
                     (m[i, 0, 2] - m[i, 2, 0]) / s,
                     (m[i, 1, 0] - m[i, 0, 1]) / s], axis=1)
    i = branch == 1
    s = 2.0 * np.sqrt(1.0 + m[i, 0, 0] - m[i, 1, 1] - m[i, 2, 2])
    q[i] = np.stack([(m[i, 2, 1] - m[i, 1, 2]) / s,
                     0.25 * s,
                     (m[i, 0, 1] + m[i, 1, 0]) / s,
                     (m[i, 0, 2] + m[i, 2, 0]) / s], axis=1)
    i = branch == 2
    s = 2.0 * np.sqrt(1.0 + m[i, 1, 1] - m[i, 0, 0] - m[i, 2, 2])
    q[i] = np.stack([(m[i, 0, 2] - m[i, 2, 0]) / s,
                     (m[i, 0, 1] + m[i, 1, 0]) / s,
                     0.25 * s,
                     (m[i, 1, 2] + m[i, 2, 1]) / s], axis=1)
    i = branch == 3
    s = 2.0 * np.sqrt(1.0 + m[i, 2, 2] - m[i, 0, 0] - m[i, 1, 1])
    q[i] = np.stack([(m[i, 1, 0] - m[i, 0, 1]) / s,
                     (m[i, 0, 2] + m[i, 2, 0]) / s,
                     (m[i, 1, 2] + m[i, 2, 1]) / s,
                     0.25 * s], axis=1)
    return quat_canonical(q).reshape(shape + (4,))


def quat_exp(phi):
    """Axis-angle vector to unit quaternion (canonical sign)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    w = np.where(small, 1.0 - theta ** 2 / 8.0, np.cos(0.5 * safe))
    k = np.where(small, 0.5 - theta ** 2 / 48.0, np.sin(0.5 * safe) / safe)
    return quat_canonical(np.concatenate([w[..., None], k[..., None] * phi], axis=-1))


def quat_log(q):
    """Unit quaternion to axis-angle vector with angle in ``[0, pi]``."""
    q = quat_canonical(q)
    w = q[..., 0]
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1)
    small = n < SMALL_ANGLE
    safe_n = np.where(small, 1.0, n)
    safe_w = np.where(small, w, 1.0)
    k = np.where(small,
                 2.0 / safe_w * (1.0 - n ** 2 / (3.0 * safe_w ** 2)),
                 2.0 * np.arctan2(n, w) / safe_n)
    return k[..., None] * v


def so3_exp(phi):
    return quat_to_matrix(quat_exp(phi))


def so3_log(m):
    return quat_log(matrix_to_quat(m))


def _coefficients(theta):
    """Return ``(1-cos t)/t^2, (t-sin t)/t^3, (1-(t/2)cot(t/2))/t^2``."""
    t2 = theta * theta
    series = theta < _SERIES_ANGLE
    safe = np.where(series, 1.0, theta)
    b = np.where(series,
                 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                 2.0 * np.sin(0.5 * safe) ** 2 / safe ** 2)
    c = np.where(series,
                 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
                 (safe - np.sin(safe)) / safe ** 3)
    d = np.where(series,
                 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0,
                 (1.0 - 0.5 * safe / np.tan(0.5 * safe)) / safe ** 2)
    return b, c, d


def so3_left_jacobian(phi):
    phi = np.asarray(phi, dtype=float)
    b, c, _ = _coefficients(np.linalg.norm(phi, axis=-1))
    w = hat(phi)
    return np.eye(3) + b[..., None, None] * w + c[..., None, None] * (w @ w)


def so3_left_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    _, _, d = _coefficients(np.linalg.norm(phi, axis=-1))
    w = hat(phi)
    return np.eye(3) - 0.5 * w + d[..., None, None] * (w @ w)


def se3_exp(xi):
    """Twist ``(omega, v)`` to ``(R, t)``."""
    xi = np.asarray(xi, dtype=float)
    omega, v = xi[..., :3], xi[..., 3:]
    rot = so3_exp(omega)
    trans = np.einsum("...ij,...j->...i", so3_left_jacobian(omega), v)
    return rot, trans


def se3_log(rot, trans):
    """``(R, t)`` to twist ``(omega, v)``; inverse of :func:`se3_exp`."""
    omega = so3_log(rot)
    v = np.einsum("...ij,...j->...i", so3_left_jacobian_inv(omega), np.asarray(trans, float))
    return np.concatenate([omega, v], axis=-1)


def compose(rot_a, t_a, rot_b, t_b):
    return rot_a @ rot_b, t_a + np.einsum("...ij,...j->...i", rot_a, t_b)


def relative(rot_a, t_a, rot_b, t_b):
    """``a^-1 * b`` in matrix form."""
    rot_at = np.swapaxes(rot_a, -1, -2)
    return rot_at @ rot_b, np.einsum("...ij,...j->...i", rot_at, t_b - t_a)


def retract_pose(rot, trans, delta):
    """Right perturbation ``X * exp(delta)``."""
    d_rot, d_trans = se3_exp(delta)
    return compose(rot, trans, d_rot, d_trans)


def twist_between(rot_a, t_a, rot_b, t_b, dt, mode="se3"):
    """Constant body twist carrying pose ``a`` to pose ``b`` over ``dt``.

    ``mode="se3"`` uses the coupled SE(3) logarithm; ``"decoupled"`` takes the
    SO(3) logarithm of the rotation and the plain translation difference in
    frame ``a``.
    """
    rel_r, rel_t = relative(rot_a, t_a, rot_b, t_b)
    dt = np.asarray(dt, dtype=float)[..., None]
    if mode == "se3":
        return se3_log(rel_r, rel_t) / dt
    if mode == "decoupled":
        return np.concatenate([so3_log(rel_r), rel_t], axis=-1) / dt
    raise ValueError(f"unknown twist mode {mode!r}")


def transport(xi, omega_ref, dt):
    """First-order change of frame ``xi + (omega_ref x xi) * dt`` per 3-block."""
    xi = np.asarray(xi, dtype=float)
    omega_ref = np.asarray(omega_ref, dtype=float)
    dt = np.asarray(dt, dtype=float)[..., None]
    ang = xi[..., :3] + np.cross(omega_ref, xi[..., :3]) * dt
    lin = xi[..., 3:] + np.cross(omega_ref, xi[..., 3:]) * dt
    return np.concatenate([ang, lin], axis=-1)


def window_kinematics_batch(rots, trans, stamps, mode="se3"):
    """Finite-difference kinematics for every window ``(k, k+1, k+2)``.

    Parameters
    ----------
    rots, trans : arrays of shape (3, ..., 3, 3) and (3, ..., 3)
        The three poses of each window stacked on the first axis.
    stamps : array of shape (3, ...)

    Returns
    -------
    dict with ``omega_prev``, ``omega_curr``, ``linear_accel`` and
    ``angular_accel``, all expressed in the body frame of the first pose.
    """
    stamps = np.asarray(stamps, dtype=float)
    dt1 = stamps[1] - stamps[0]
    dt2 = stamps[2] - stamps[1]
    if np.any(dt1 <= MIN_DT) or np.any(dt2 <= MIN_DT):
        raise DegenerateTimestampError("stamps must increase by more than 1e-9 s")
    xi_prev = twist_between(rots[0], trans[0], rots[1], trans[1], dt1, mode)
    xi_next = twist_between(rots[1], trans[1], rots[2], trans[2], dt2, mode)
    xi_curr = transport(xi_next, xi_prev[..., :3], dt2)
    accel = (xi_curr - xi_prev) / dt2[..., None]
    return {
        "omega_prev": xi_prev[..., :3],
        "omega_curr": xi_curr[..., :3],
        "angular_accel": accel[..., :3],
        "linear_accel": accel[..., 3:],
    }


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

def _vec3(x, name):
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {np.shape(x)}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion ``(w, x, y, z)`` stored with ``w >= 0``."""

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        if q.shape != (4,) or not np.all(np.isfinite(q)) or np.linalg.norm(q) == 0:
            raise ValueError(f"invalid quaternion {self.q!r}")
        q = quat_canonical(q)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m):
        return cls(matrix_to_quat(m))

    @classmethod
    def from_rotvec(cls, phi):
        return cls(quat_exp(phi))

    def matrix(self):
        return quat_to_matrix(self.q)

    def rotvec(self):
        return quat_log(self.q)

    def inverse(self):
        return Rotation(self.q * np.array([1.0, -1.0, -1.0, -1.0]))

    def apply(self, v):
        return self.matrix() @ np.asarray(v, dtype=float)

    def __mul__(self, other):
        return Rotation(quat_multiply(self.q, other.q))

    def __eq__(self, other):
        return isinstance(other, Rotation) and np.array_equal(self.q, other.q)

    def __hash__(self):
        return hash(self.q.tobytes())


@dataclass(frozen=True)
class Pose:
    rotation: Rotation = field(default_factory=Rotation)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "translation", _vec3(self.translation, "translation"))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        return cls(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    def matrix(self):
        out = np.eye(4)
        out[:3, :3] = self.rotation.matrix()
        out[:3, 3] = self.translation
        return out

    def inverse(self):
        inv = self.rotation.inverse()
        return Pose(inv, -inv.apply(self.translation))

    def transform(self, point):
        return self.rotation.apply(point) + self.translation

    def __mul__(self, other):
        return Pose(self.rotation * other.rotation, self.transform(other.translation))

    def __eq__(self, other):
        return (isinstance(other, Pose) and self.rotation == other.rotation
                and np.array_equal(self.translation, other.translation))

    def __hash__(self):
        return hash((self.rotation, self.translation.tobytes()))


@dataclass(frozen=True)
class Twist:
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        ang = _vec3(self.angular, "angular")
        lin = _vec3(self.linear, "linear")
        if not (np.all(np.isfinite(ang)) and np.all(np.isfinite(lin))):
            raise ValueError("twist components must be finite")
        object.__setattr__(self, "angular", ang)
        object.__setattr__(self, "linear", lin)

    @classmethod
    def from_vector(cls, xi):
        xi = np.asarray(xi, dtype=float)
        return cls(xi[:3], xi[3:])

    def vector(self):
        return np.concatenate([self.angular, self.linear])


@dataclass(frozen=True)
class TimedPose:
    pose: Pose
    stamp: float

    def __post_init__(self):
        stamp = float(self.stamp)
        if not np.isfinite(stamp) or stamp < 0:
            raise ValueError(f"stamp must be finite and non-negative, got {self.stamp}")
        object.__setattr__(self, "stamp", stamp)


@dataclass(frozen=True)
class KinematicWindow:
    """Velocities and accelerations of a three-pose window, all in the frame
    of the first pose."""

    omega_prev: np.ndarray
    omega_curr: np.ndarray
    linear_accel: np.ndarray
    angular_accel: np.ndarray
    frame_pose: Pose

    def __post_init__(self):
        for name in ("omega_prev", "omega_curr", "linear_accel", "angular_accel"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))


# ---------------------------------------------------------------------------
# single-value operations
# ---------------------------------------------------------------------------

def log_rotation(r: Rotation) -> np.ndarray:
    return quat_log(r.q)


def exp_rotation(phi) -> Rotation:
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("rotation vector must be finite")
    return Rotation(quat_exp(phi))


def relative_pose(a: Pose, b: Pose) -> Pose:
    return a.inverse() * b


def exp_pose(xi) -> Pose:
    rot, trans = se3_exp(np.asarray(xi, dtype=float))
    return Pose(Rotation.from_matrix(rot), trans)


def log_pose(x: Pose) -> np.ndarray:
    return se3_log(x.rotation.matrix(), x.translation)


def body_twist(a: TimedPose, b: TimedPose, mode: str = "se3") -> Twist:
    """Constant body-frame twist moving ``a`` onto ``b``."""
    dt = b.stamp - a.stamp
    if dt <= MIN_DT:
        raise DegenerateTimestampError(f"non-increasing stamps {a.stamp} -> {b.stamp}")
    xi = twist_between(a.pose.rotation.matrix(), a.pose.translation,
                       b.pose.rotation.matrix(), b.pose.translation, dt, mode)
    return Twist.from_vector(xi)


def transport_twist(tw: Twist, omega_ref, dt: float) -> Twist:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Twist.from_vector(transport(tw.vector(), omega_ref, dt))


def window_kinematics(p0: TimedPose, p1: TimedPose, p2: TimedPose,
                      mode: str = "se3") -> KinematicWindow:
    rots = np.stack([p.pose.rotation.matrix() for p in (p0, p1, p2)])
    trans = np.stack([p.pose.translation for p in (p0, p1, p2)])
    k = window_kinematics_batch(rots, trans, np.array([p0.stamp, p1.stamp, p2.stamp]), mode)
    return KinematicWindow(frame_pose=p0.pose, **k)
