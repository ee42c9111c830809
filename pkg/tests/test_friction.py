import numpy as np
import pytest

from graspid.friction import (ContactSurface, DegenerateForceError, InitialSlipError,
                              NonPressingForceError,
                              ServoConfig, estimate_mu, force_at_angle, run_trials,
                              servo_until_slip, slope_method_oracle, surface_normal_at)
from graspid.inertia import ConvexHull

Z = np.array([0.0, 0.0, 1.0])
X = np.array([1.0, 0.0, 0.0])


def test_estimate_mu_closed_forms():
    assert estimate_mu([1.0, 0.0, 1.0], Z) == pytest.approx(1.0, abs=1e-15)
    assert estimate_mu([0.0, 0.0, 2.0], Z) == 0.0
    f = force_at_angle(0.5, Z, X, magnitude=3.0)
    assert estimate_mu(f, Z) == pytest.approx(0.5, abs=1e-12)


def test_estimate_mu_errors():
    with pytest.raises(NonPressingForceError):
        estimate_mu([0.0, 0.0, -1.0], Z)
    with pytest.raises(NonPressingForceError):
        estimate_mu([1.0, 0.0, 0.0], Z)
    with pytest.raises(DegenerateForceError):
        estimate_mu([0.0, 0.0, 1e-12], Z)


def test_servo_threshold_arithmetic():
    ev = servo_until_slip(ContactSurface(Z, 0.8), ServoConfig())
    assert ev.slipped
    assert 0.7937 <= estimate_mu(ev.f_slip, Z) <= 0.8


def test_servo_no_slip_above_floor():
    ev = servo_until_slip(ContactSurface(Z, 10.0), ServoConfig(normal_floor=0.5))
    assert not ev.slipped


def test_servo_noise_median():
    trials = run_trials(0.5, ServoConfig(noise_sigma=0.02), 10, seed=0)
    assert np.median([abs(t.mu_est - 0.5) for t in trials]) < 0.02


def test_slip_event_respects_cone():
    surface = ContactSurface(Z, 0.6)
    ev = servo_until_slip(surface, ServoConfig())
    tangential = np.linalg.norm(ev.f_slip - (ev.f_slip @ Z) * Z)
    assert tangential <= surface.mu * (ev.f_slip @ Z) + 1e-12


def test_slope_method():
    assert abs(slope_method_oracle(ContactSurface(Z, 1.0), 1e-4) - 1.0) < 1e-4
    assert slope_method_oracle(ContactSurface(Z, 1e-12), 1e-3) < 1e-3
    with pytest.raises(ValueError):
        slope_method_oracle(ContactSurface(Z, 1.0), 0.0)


@pytest.mark.parametrize("mu", [0.1, 0.25, 0.5, 0.8, 1.2])
def test_servo_agrees_with_slope(mu):
    cfg = ServoConfig(initial_normal=max(5.0, 2.0 / mu))
    surface = ContactSurface(Z, mu)
    servo = estimate_mu(servo_until_slip(surface, cfg).f_slip, Z)
    slope = slope_method_oracle(surface, 1e-4)
    # one decrement of normal force at the slip threshold, expressed in mu
    f_n = cfg.tangent_force / mu
    quantum = mu - cfg.tangent_force / (f_n + cfg.decrement)
    assert abs(servo - mu) <= quantum + 1e-12
    assert abs(servo - slope) < max(quantum, 1e-4) + 1e-12


def test_servo_rejects_start_outside_cone():
    with pytest.raises(InitialSlipError):
        servo_until_slip(ContactSurface(Z, 0.1), ServoConfig(initial_normal=5.0))


def test_surface_normals_on_cube():
    cube = ConvexHull.box([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5])
    np.testing.assert_array_equal(surface_normal_at(cube, [0.5 + 1e-6, 0.0, 0.0]), X)
    corner = surface_normal_at(cube, [0.5, 0.5, 0.5])
    incident = [i for i, n in enumerate(cube.normals) if n @ [0.5, 0.5, 0.5] == 0.5]
    np.testing.assert_array_equal(corner, cube.normals[min(incident)])


def test_surface_normals_random_points():
    rng = np.random.default_rng(0)
    hull = ConvexHull.from_vertices(rng.normal(size=(30, 3)))
    for _ in range(50):
        face = rng.integers(len(hull.faces))
        verts = hull.vertices[list(hull.faces[face])]
        w = rng.dirichlet(np.ones(len(verts)))
        point = w @ verts + 1e-4 * hull.normals[face]
        n = surface_normal_at(hull, point)
        k = int(np.argmin(np.linalg.norm(hull.normals - n, axis=1)))
        # containment oracle: the projection lies on the returned face
        proj = point - (hull.normals[k] @ point - hull.offsets[k]) * hull.normals[k]
        assert hull.contains(proj, tol=1e-9)
        assert abs(hull.normals[k] @ proj - hull.offsets[k]) < 1e-9


def test_config_validation():
    with pytest.raises(ValueError):
        ServoConfig(decrement=0.0)
    with pytest.raises(ValueError):
        ContactSurface([0.0, 0.0, 2.0], 0.5)
    with pytest.raises(ValueError):
        run_trials(0.5, ServoConfig(), 0)
