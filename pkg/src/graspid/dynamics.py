"""Newton-Euler wrench balance between inertial parameters, kinematics and
contact forces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inertia import InertialMatrixForm, InertialParams, body_inertia, sym_from_six
from .lie import KinematicWindow, Pose

STANDARD_GRAVITY = np.array([0.0, 0.0, -9.81])
BROKEN_CONTACT_SIGMA = 1e3


@dataclass(frozen=True)
class ContactObservation:
    """One fingertip measurement, point and force in the object body frame."""

    contact_id: int
    point: np.ndarray
    force: np.ndarray
    force_sigma: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "contact_id", int(self.contact_id))
        for name in ("point", "force"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        sigma = float(self.force_sigma)
        if not sigma > 0:
            raise ValueError("force_sigma must be positive")
        object.__setattr__(self, "force_sigma", sigma)

    @classmethod
    def broken(cls, contact_id, point):
        """A contact that lost touch: zero force with a very loose sigma."""
        return cls(contact_id, point, np.zeros(3), BROKEN_CONTACT_SIGMA)


@dataclass(frozen=True)
class WrenchResidual:
    force_residual: np.ndarray
    torque_residual: np.ndarray

    def vector(self):
        return np.concatenate([self.force_residual, self.torque_residual])

    def norm(self):
        return float(np.linalg.norm(self.vector()))


def gravity_in_frame(world_gravity, frame: Pose) -> np.ndarray:
    return frame.rotation.matrix().T @ np.asarray(world_gravity, dtype=float)


def mass_terms(p):
    """``(m, m c, H_body)`` for any supported parameter container."""
    if isinstance(p, InertialParams):
        return p.mass, p.mass * p.com, body_inertia(p)
    if isinstance(p, InertialMatrixForm):
        return p.mass, p.mass * p.com, p.inertia_body
    v = np.asarray(p, dtype=float)
    if v.shape[-1] != 10:
        raise TypeError(f"unsupported inertial parameter container {type(p).__name__}")
    return v[..., 0], v[..., 1:4], sym_from_six(v[..., 4:])


def wrench_terms(mass, first_moment, inertia, omega_prev, omega_curr,
                 linear_accel, angular_accel, g_body):
    """Batched ``(A, B)`` of the body-frame Newton-Euler equations.

    ``first_moment`` is ``m c``; every argument broadcasts over leading axes.
    """
    mass = np.asarray(mass, dtype=float)[..., None]
    mc = np.asarray(first_moment, dtype=float)
    h = np.asarray(inertia, dtype=float)
    lin = np.asarray(linear_accel, dtype=float) - np.asarray(g_body, dtype=float)
    alpha = np.asarray(angular_accel, dtype=float)
    w_prev = np.asarray(omega_prev, dtype=float)
    w_curr = np.asarray(omega_curr, dtype=float)
    force = (mass * lin + np.cross(alpha, mc)
             + np.cross(w_curr, np.cross(w_prev, mc)))
    torque = (np.cross(mc, lin) + np.einsum("...ij,...j->...i", h, alpha)
              + np.cross(w_curr, np.einsum("...ij,...j->...i", h, w_prev)))
    return force, torque


def newton_euler_terms(p, k: KinematicWindow, g_body):
    m, mc, h = mass_terms(p)
    return wrench_terms(m, mc, h, k.omega_prev, k.omega_curr,
                        k.linear_accel, k.angular_accel, g_body)


def contact_wrench(points, forces):
    """Net force and torque about the body origin, summed over the second to
    last axis."""
    forces = np.asarray(forces, dtype=float)
    points = np.asarray(points, dtype=float)
    return forces.sum(axis=-2), np.cross(points, forces).sum(axis=-2)


def dynamics_residual(p, k: KinematicWindow, contacts, g_body) -> WrenchResidual:
    if len(contacts) == 0:
        raise ValueError("at least one contact observation is required")
    a, b = newton_euler_terms(p, k, g_body)
    f, tau = contact_wrench([c.point for c in contacts], [c.force for c in contacts])
    return WrenchResidual(a - f, b - tau)


def regressor(omega_prev, omega_curr, linear_accel, angular_accel, g_body):
    """Matrix ``Y`` (shape ``(..., 6, 10)``) with ``[A; B] = Y @ vectorize(p)``."""
    cols = []
    for j in range(10):
        e = np.zeros(10)
        e[j] = 1.0
        f, t = wrench_terms(e[0], e[1:4], sym_from_six(e[4:]), omega_prev, omega_curr,
                            linear_accel, angular_accel, g_body)
        cols.append(np.concatenate([f, t], axis=-1))
    return np.stack(cols, axis=-1)
