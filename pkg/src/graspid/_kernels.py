"""Compiled scalar Lie-group and residual kernels.

These mirror the vectorized functions in :mod:`graspid.lie` and
:mod:`graspid.graph` (same formulas and series thresholds) and exist only to
remove per-call overhead in the solver's inner loops and the simulator.
"""
from __future__ import annotations

import numba
import numpy as np

SMALL_ANGLE = 1e-7
SERIES_ANGLE = 1e-2


@numba.njit(cache=True)
def cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


@numba.njit(cache=True)
def hat(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


@numba.njit(cache=True)
def mv(a, x):
    """``a @ x`` for 3x3 by 3 without a BLAS call."""
    out = np.empty(3)
    for i in range(3):
        out[i] = a[i, 0] * x[0] + a[i, 1] * x[1] + a[i, 2] * x[2]
    return out


@numba.njit(cache=True)
def mtv(a, x):
    """``a.T @ x``"""
    out = np.empty(3)
    for i in range(3):
        out[i] = a[0, i] * x[0] + a[1, i] * x[1] + a[2, i] * x[2]
    return out


@numba.njit(cache=True)
def mm(a, b):
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]
    return out


@numba.njit(cache=True)
def mtm(a, b):
    """``a.T @ b``"""
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[0, i] * b[0, j] + a[1, i] * b[1, j] + a[2, i] * b[2, j]
    return out


@numba.njit(cache=True)
def hat_apply(phi, b, c, x):
    """``(I + b W + c W^2) x`` with ``W = hat(phi)``, using cross products."""
    wx = cross(phi, x)
    wwx = cross(phi, wx)
    return x + b * wx + c * wwx


@numba.njit(cache=True)
def so3_exp(phi):
    theta = np.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    if theta < SMALL_ANGLE:
        w = 1.0 - theta * theta / 8.0
        k = 0.5 - theta * theta / 48.0
    else:
        w = np.cos(0.5 * theta)
        k = np.sin(0.5 * theta) / theta
    x, y, z = k * phi[0], k * phi[1], k * phi[2]
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]])


@numba.njit(cache=True)
def matrix_to_quat(m):
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    best = tr
    branch = 0
    for i in range(3):
        if m[i, i] > best:
            best = m[i, i]
            branch = i + 1
    if branch == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif branch == 1:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif branch == 2:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    q = q / np.sqrt(np.sum(q * q))
    if q[0] < 0:
        q = -q
    return q


@numba.njit(cache=True)
def so3_log(m):
    q = matrix_to_quat(m)
    w = q[0]
    n = np.sqrt(q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
    if n < SMALL_ANGLE:
        k = 2.0 / w * (1.0 - n * n / (3.0 * w * w))
    else:
        k = 2.0 * np.arctan2(n, w) / n
    return k * q[1:]


@numba.njit(cache=True)
def coefficients(theta):
    t2 = theta * theta
    if theta < SERIES_ANGLE:
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        b = 2.0 * np.sin(0.5 * theta) ** 2 / t2
        c = (theta - np.sin(theta)) / (t2 * theta)
        d = (1.0 - 0.5 * theta / np.tan(0.5 * theta)) / t2
    return b, c, d


@numba.njit(cache=True)
def left_jacobian(phi):
    theta = np.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    b, c, _ = coefficients(theta)
    w = hat(phi)
    return np.eye(3) + b * w + c * (w @ w)


@numba.njit(cache=True)
def left_jacobian_inv(phi):
    theta = np.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    _, _, d = coefficients(theta)
    w = hat(phi)
    return np.eye(3) - 0.5 * w + d * (w @ w)


@numba.njit(cache=True)
def left_jacobian_apply(phi, x):
    theta = np.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    b, c, _ = coefficients(theta)
    return hat_apply(phi, b, c, x)


@numba.njit(cache=True)
def left_jacobian_inv_apply(phi, x):
    theta = np.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    _, _, d = coefficients(theta)
    return hat_apply(phi, -0.5, d, x)


@numba.njit(cache=True)
def retract(r, p, delta):
    """``X exp(delta)`` for a twist ``delta = (omega, v)``."""
    phi = delta[:3]
    return mm(r, so3_exp(phi)), p + mv(r, left_jacobian_apply(phi, delta[3:]))


@numba.njit(cache=True)
def twist_between(ra, pa, rb, pb, dt, coupled):
    rel_r = mtm(ra, rb)
    rel_t = mtv(ra, pb - pa)
    omega = so3_log(rel_r)
    out = np.empty(6)
    out[:3] = omega / dt
    if coupled:
        out[3:] = left_jacobian_inv_apply(omega, rel_t) / dt
    else:
        out[3:] = rel_t / dt
    return out


@numba.njit(cache=True)
def pose_error(rm, pm, r, p):
    """``log(Z^-1 X)`` as ``(omega, v)``."""
    rel_r = mtm(rm, r)
    rel_t = mtv(rm, p - pm)
    omega = so3_log(rel_r)
    out = np.empty(6)
    out[:3] = omega
    out[3:] = left_jacobian_inv_apply(omega, rel_t)
    return out


@numba.njit(cache=True)
def residual_from_twists(xi_prev, xi_next, r0, dt2, gravity, net_f, net_t, mass, mc, h, scale):
    w_prev = xi_prev[:3]
    w_curr = xi_next[:3] + cross(w_prev, xi_next[:3]) * dt2
    v_curr = xi_next[3:] + cross(w_prev, xi_next[3:]) * dt2
    alpha = (w_curr - w_prev) / dt2
    lin = (v_curr - xi_prev[3:]) / dt2 - mtv(r0, gravity)
    force = mass * lin + cross(alpha, mc) + cross(w_curr, cross(w_prev, mc))
    torque = cross(mc, lin) + mv(h, alpha) + cross(w_curr, mv(h, w_prev))
    out = np.empty(6)
    out[:3] = (force - net_f) * scale[:3]
    out[3:] = (torque - net_t) * scale[3:]
    return out


@numba.njit(cache=True)
def window_residual(r0, p0, r1, p1, r2, p2, dt1, dt2, gravity, net_f, net_t,
                    mass, mc, h, coupled, scale):
    xi_prev = twist_between(r0, p0, r1, p1, dt1, coupled)
    xi_next = twist_between(r1, p1, r2, p2, dt2, coupled)
    return residual_from_twists(xi_prev, xi_next, r0, dt2, gravity, net_f, net_t,
                                mass, mc, h, scale)


@numba.njit(cache=True)
def dynamics_residuals(rots, pos, stamps, gravity, net_f, net_t, mass, mc, h, coupled, scale):
    n = rots.shape[0] - 2
    out = np.empty((n, 6))
    for t in range(n):
        out[t] = window_residual(rots[t], pos[t], rots[t + 1], pos[t + 1], rots[t + 2],
                                 pos[t + 2], stamps[t + 1] - stamps[t],
                                 stamps[t + 2] - stamps[t + 1], gravity, net_f[t], net_t[t],
                                 mass, mc, h, coupled, scale)
    return out


@numba.njit(cache=True)
def dynamics_pose_jacobian(rots, pos, stamps, gravity, net_f, net_t, mass, mc, h, coupled,
                           scale, step):
    """Central differences of every window residual with respect to its three
    poses, in right-perturbation local coordinates.  A perturbed pose only
    changes the twists it bounds, so the other twist is reused."""
    n = rots.shape[0] - 2
    jac = np.empty((n, 6, 18))
    delta = np.zeros(6)
    for t in range(n):
        r0, r1, r2 = rots[t], rots[t + 1], rots[t + 2]
        p0, p1, p2 = pos[t], pos[t + 1], pos[t + 2]
        dt1 = stamps[t + 1] - stamps[t]
        dt2 = stamps[t + 2] - stamps[t + 1]
        xp = twist_between(r0, p0, r1, p1, dt1, coupled)
        xn = twist_between(r1, p1, r2, p2, dt2, coupled)
        for k in range(3):
            rk0 = rots[t + k]
            pk0 = pos[t + k]
            for j in range(6):
                delta[:] = 0.0
                delta[j] = step
                rp, pp = retract(rk0, pk0, delta)
                delta[j] = -step
                rm, pm = retract(rk0, pk0, delta)
                if k == 0:
                    res_p = residual_from_twists(twist_between(rp, pp, r1, p1, dt1, coupled), xn,
                                                 rp, dt2, gravity, net_f[t], net_t[t], mass, mc,
                                                 h, scale)
                    res_m = residual_from_twists(twist_between(rm, pm, r1, p1, dt1, coupled), xn,
                                                 rm, dt2, gravity, net_f[t], net_t[t], mass, mc,
                                                 h, scale)
                elif k == 1:
                    res_p = residual_from_twists(twist_between(r0, p0, rp, pp, dt1, coupled),
                                                 twist_between(rp, pp, r2, p2, dt2, coupled),
                                                 r0, dt2, gravity, net_f[t], net_t[t], mass, mc,
                                                 h, scale)
                    res_m = residual_from_twists(twist_between(r0, p0, rm, pm, dt1, coupled),
                                                 twist_between(rm, pm, r2, p2, dt2, coupled),
                                                 r0, dt2, gravity, net_f[t], net_t[t], mass, mc,
                                                 h, scale)
                else:
                    res_p = residual_from_twists(xp, twist_between(r1, p1, rp, pp, dt2, coupled),
                                                 r0, dt2, gravity, net_f[t], net_t[t], mass, mc,
                                                 h, scale)
                    res_m = residual_from_twists(xp, twist_between(r1, p1, rm, pm, dt2, coupled),
                                                 r0, dt2, gravity, net_f[t], net_t[t], mass, mc,
                                                 h, scale)
                jac[t, :, 6 * k + j] = (res_p - res_m) / (2.0 * step)
    return jac


@numba.njit(cache=True)
def pose_residuals(meas_r, meas_p, rots, pos, scale):
    n = rots.shape[0]
    out = np.empty((n, 6))
    for t in range(n):
        out[t] = pose_error(meas_r[t], meas_p[t], rots[t], pos[t]) * scale
    return out


@numba.njit(cache=True)
def pose_jacobians(meas_r, meas_p, rots, pos, scale, step):
    n = rots.shape[0]
    jac = np.empty((n, 6, 6))
    delta = np.zeros(6)
    for t in range(n):
        for j in range(6):
            delta[:] = 0.0
            delta[j] = step
            rp, pp = retract(rots[t], pos[t], delta)
            delta[j] = -step
            rm, pm = retract(rots[t], pos[t], delta)
            jac[t, :, j] = (pose_error(meas_r[t], meas_p[t], rp, pp)
                            - pose_error(meas_r[t], meas_p[t], rm, pm)) * scale / (2.0 * step)
    return jac
