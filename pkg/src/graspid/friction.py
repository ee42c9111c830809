"""Coulomb static friction: closed-form coefficient, force-servo slip trials and
the tilting-slope reference measurement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inertia import ConvexHull


class NonPressingForceError(ValueError):
    pass


class DegenerateForceError(ValueError):
    pass


class InitialSlipError(ValueError):
    """The contact already slips at the initial normal force."""


@dataclass(frozen=True)
class ContactSurface:
    """Surface with outward normal ``normal`` and true static coefficient ``mu``.

    ``warp`` tilts the effective normal away from the tangential push by
    ``warp * |f_n|`` radians, emulating a compliant object surface.
    """

    normal: np.ndarray
    mu: float
    warp: float = 0.0

    def __post_init__(self):
        n = np.array(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("surface normal must be a unit vector")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.warp < 0:
            raise ValueError("warp must be non-negative")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "mu", float(self.mu))

    def tangent(self):
        """A fixed unit tangent used as the push direction."""
        n = self.normal
        seed = np.eye(3)[int(np.argmin(np.abs(n)))]
        t = seed - (seed @ n) * n
        return t / np.linalg.norm(t)


@dataclass(frozen=True)
class ServoConfig:
    initial_normal: float = 5.0
    tangent_force: float = 1.0
    decrement: float = 0.01
    noise_sigma: float = 0.0
    max_steps: int = 10000
    normal_floor: float = 0.0

    def __post_init__(self):
        for name in ("initial_normal", "tangent_force", "noise_sigma", "normal_floor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.decrement > 0:
            raise ValueError("decrement must be positive")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValueError("max_steps must be a positive integer")


@dataclass(frozen=True)
class SlipEvent:
    f_slip: np.ndarray
    step: int
    slipped: bool


def estimate_mu(f_slip, normal) -> float:
    """``tan(arccos(f_hat . n))`` for a force pressing into a surface with
    outward normal ``-normal``; ``normal`` points along the pressing force."""
    f = np.asarray(f_slip, dtype=float).reshape(3)
    n = np.asarray(normal, dtype=float).reshape(3)
    size = np.linalg.norm(f)
    if size < 1e-9:
        raise DegenerateForceError("slip force is too small to define a direction")
    cos = float(np.clip((f / size) @ n, -1.0, 1.0))
    if cos <= 0:
        raise NonPressingForceError("force does not press into the surface")
    return float(np.tan(np.arccos(cos)))


def force_at_angle(mu: float, normal, tangent, magnitude: float = 1.0):
    """Force whose angle to ``normal`` is ``arctan(mu)``."""
    n = np.asarray(normal, dtype=float)
    t = np.asarray(tangent, dtype=float)
    return magnitude * (n + mu * t) / np.hypot(1.0, mu)


def _effective_normal(surface: ContactSurface, f_n: float):
    if surface.warp == 0.0:
        return surface.normal
    angle = surface.warp * f_n
    t = surface.tangent()
    return np.cos(angle) * surface.normal - np.sin(angle) * t


def servo_until_slip(surface: ContactSurface, cfg: ServoConfig, seed: int = 0) -> SlipEvent:
    """Lower the normal force at constant tangential force until the contact slips.

    Each step applies ``f_n n + f_t t``; slip happens at the first step where
    ``|f_t| > mu |f_n|`` with respect to the effective normal.  The returned
    force is the noisy measurement at the last step that held.

    Raises
    ------
    InitialSlipError
        If the contact slips before any step has held.
    """
    rng = np.random.default_rng(seed)
    n, t = surface.normal, surface.tangent()
    f_t = cfg.tangent_force
    previous = None
    for step in range(cfg.max_steps + 1):
        f_n = cfg.initial_normal - step * cfg.decrement
        if f_n < cfg.normal_floor:
            break
        applied = f_n * n + f_t * t
        measured = applied + rng.normal(0.0, cfg.noise_sigma, 3) if cfg.noise_sigma else applied
        n_eff = _effective_normal(surface, f_n)
        normal_part = applied @ n_eff
        tangential = np.linalg.norm(applied - normal_part * n_eff)
        if tangential > surface.mu * abs(normal_part):
            if previous is None:
                raise InitialSlipError(
                    f"contact slips at the initial normal force {cfg.initial_normal:g} N; "
                    f"it must exceed tangent_force / mu = {f_t / surface.mu:g} N")
            return SlipEvent(previous[0], previous[1], True)
        previous = (measured, step)
    last = previous[0] if previous is not None else cfg.initial_normal * n + f_t * t
    return SlipEvent(last, previous[1] if previous is not None else 0, False)


def slope_method_oracle(surface: ContactSurface, angle_step: float, seed: int = 0) -> float:
    """Tilt a platform in ``angle_step`` increments until ``tan(theta) > mu``
    and return the midpoint of the last bracket ``[tan(theta - step), tan(theta)]``.

    The procedure is deterministic; ``seed`` is accepted for interface
    symmetry with the servo trial.
    """
    if not angle_step > 0:
        raise ValueError("angle_step must be positive")
    k = int(np.floor(np.arctan(surface.mu) / angle_step)) + 1
    while np.tan(k * angle_step) <= surface.mu:
        k += 1
    while k > 1 and np.tan((k - 1) * angle_step) > surface.mu:
        k -= 1
    theta = k * angle_step
    return 0.5 * (np.tan(theta - angle_step) + np.tan(theta))


def surface_normal_at(hull: ConvexHull, point) -> np.ndarray:
    """Outward normal of the face nearest to ``point``; ties go to the lowest
    face index."""
    point = np.asarray(point, dtype=float)
    best, best_d = 0, np.inf
    for i, face in enumerate(hull.faces):
        d = _distance_to_polygon(point, hull.vertices[list(face)], hull.normals[i])
        if d < best_d - 1e-12:
            best, best_d = i, d
    return np.array(hull.normals[best])


def _distance_to_polygon(point, verts, normal):
    """Distance from ``point`` to a convex planar polygon."""
    offset = (point - verts[0]) @ normal
    proj = point - offset * normal
    inside = True
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        if np.cross(b - a, proj - a) @ normal < -1e-12:
            inside = False
            break
    if inside:
        return abs(offset)
    best = np.inf
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        ab = b - a
        s = np.clip((point - a) @ ab / (ab @ ab), 0.0, 1.0)
        best = min(best, np.linalg.norm(point - (a + s * ab)))
    return best


@dataclass(frozen=True)
class FrictionTrial:
    object_id: str
    trial: int
    mu_true: float
    mu_est: float
    f_slip: np.ndarray
    slipped: bool


def run_trials(mu_true: float, cfg: ServoConfig, trials: int, seed: int = 0,
               normal=(0.0, 0.0, 1.0), object_id: str = "sim") -> list:
    """Independent servo trials with seeds ``seed, seed + 1, ...``."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    surface = ContactSurface(normal, mu_true)
    out = []
    for k in range(trials):
        ev = servo_until_slip(surface, cfg, seed + k)
        mu = estimate_mu(ev.f_slip, surface.normal) if ev.slipped else float("nan")
        out.append(FrictionTrial(object_id, k, float(mu_true), mu, ev.f_slip, ev.slipped))
    return out
