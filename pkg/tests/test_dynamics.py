import numpy as np
import pytest

from graspid.baseline import kinematics
from graspid.dynamics import (ContactObservation, contact_wrench, dynamics_residual,
                              gravity_in_frame, mass_terms, newton_euler_terms, regressor,
                              wrench_terms)
from graspid.inertia import InertialParams, params_from_matrix, vectorize
from graspid.lie import KinematicWindow, Pose, exp_rotation
from graspid.simulate import SimConfig, run_sim

from test_inertia import GT_COM, GT_HCM, GT_MASS

G = np.array([0.0, 0.0, -9.81])


def _window(omega_prev=(0, 0, 0), omega_curr=(0, 0, 0), lin=(0, 0, 0), ang=(0, 0, 0)):
    return KinematicWindow(np.array(omega_prev, float), np.array(omega_curr, float),
                           np.array(lin, float), np.array(ang, float), Pose.identity())


def _gt():
    return params_from_matrix(GT_MASS, GT_COM, GT_HCM)


def _formula_oracle(m, c, h, wp, wc, a, alpha, g):
    """Newton-Euler written out with explicit matrices."""
    def skew(v):
        return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    mc = m * c
    force = m * (a - g) - skew(mc) @ alpha + skew(wc) @ skew(wp) @ mc
    torque = skew(mc) @ (a - g) + h @ alpha + skew(wc) @ (h @ wp)
    return force, torque


def test_gravity_in_frame():
    np.testing.assert_array_equal(gravity_in_frame(G, Pose.identity()), G)
    rx = Pose(exp_rotation([np.pi / 2, 0.0, 0.0]), np.zeros(3))
    out = gravity_in_frame(G, rx)
    np.testing.assert_allclose(out, rx.rotation.matrix().T @ G, atol=1e-15)
    np.testing.assert_allclose(np.abs(out), [0.0, 9.81, 0.0], atol=1e-14)
    rng = np.random.default_rng(0)
    for _ in range(20):
        frame = Pose(exp_rotation(rng.normal(size=3)), rng.normal(size=3))
        assert np.linalg.norm(gravity_in_frame(G, frame)) == pytest.approx(9.81, rel=1e-14)


def test_static_object_terms():
    a, b = newton_euler_terms(_gt(), _window(), G)
    np.testing.assert_allclose(a, [0.0, 0.0, 12.753], atol=1e-12)
    np.testing.assert_allclose(b, [6.3765, -2.5506, 0.0], atol=1e-12)


def test_mass_free_limit():
    p = InertialParams(0.0, np.zeros(3), [0.1, 0.2, 0.3], exp_rotation([0.2, 0.1, 0.0]))
    k = _window([0.1, 0.2, 0.3], [0.2, 0.1, 0.4], [1, 2, 3], [0.5, -0.5, 1.0])
    a, b = newton_euler_terms(p, k, G)
    _, _, h = mass_terms(p)
    np.testing.assert_array_equal(a, 0.0)
    np.testing.assert_allclose(b, h @ k.angular_accel + np.cross(k.omega_curr, h @ k.omega_prev))


def test_random_inputs_match_formula_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        m, c = rng.uniform(0.1, 3), rng.normal(size=3)
        q = rng.normal(size=(3, 3))
        h = q @ q.T
        wp, wc, a, al, g = rng.normal(size=(5, 3))
        got = wrench_terms(m, m * c, h, wp, wc, a, al, g)
        want = _formula_oracle(m, c, h, wp, wc, a, al, g)
        np.testing.assert_allclose(got[0], want[0], atol=1e-12)
        np.testing.assert_allclose(got[1], want[1], atol=1e-12)


def test_regressor_is_linear_in_parameters():
    rng = np.random.default_rng(2)
    wp, wc, a, al, g = rng.normal(size=(5, 3))
    p = _gt()
    y = regressor(wp, wc, a, al, g)
    m, mc, h = mass_terms(p)
    f, t = wrench_terms(m, mc, h, wp, wc, a, al, g)
    np.testing.assert_allclose(y @ vectorize(p), np.concatenate([f, t]), atol=1e-12)


def test_static_grasp_equilibrium():
    p = _gt()
    need_f = -p.mass * G
    need_t = np.cross(p.mass * p.com, -G)
    # two contacts sharing the load, plus an equal and opposite squeeze pair
    points = np.array([p.com + [0.1, 0.0, 0.0], p.com - [0.1, 0.0, 0.0]])
    squeeze = np.array([-3.0, 0.0, 0.0])
    forces = np.array([0.5 * need_f + squeeze, 0.5 * need_f - squeeze])
    contacts = [ContactObservation(i, pt, f) for i, (pt, f) in enumerate(zip(points, forces))]
    f, t = contact_wrench(points, forces)
    np.testing.assert_allclose(t, need_t, atol=1e-12)
    r = dynamics_residual(p, _window(), contacts, G)
    assert np.abs(r.vector()).max() < 1e-10


def test_mass_perturbation_is_linear():
    p = _gt()
    k = _window(lin=[0.0, 0.0, -9.81])
    dm = 0.25
    # keep m c fixed to isolate the mass term
    bumped_vec = vectorize(p).copy()
    bumped_vec[0] += dm
    f0, _ = wrench_terms(*mass_terms(vectorize(p)), k.omega_prev, k.omega_curr,
                         k.linear_accel, k.angular_accel, G)
    f1, _ = wrench_terms(*mass_terms(bumped_vec), k.omega_prev, k.omega_curr,
                         k.linear_accel, k.angular_accel, G)
    np.testing.assert_allclose(f1 - f0, dm * (k.linear_accel - G), atol=1e-14)


def test_contact_observation_validation():
    with pytest.raises(ValueError):
        ContactObservation(0, [0, 0, 0], [0, 0, 0], force_sigma=0.0)
    broken = ContactObservation.broken(3, [0.1, 0.2, 0.3])
    assert broken.force_sigma >= 1e3 and np.all(broken.force == 0)


def test_residual_on_simulated_ground_truth(model):
    # sampling at the integrator step makes the finite differences exact
    traj = run_sim(model, SimConfig(duration=0.5, sample_period=1e-4, dt=1e-4))
    k = kinematics(traj)
    m, mc, h = mass_terms(model.params)
    a, b = wrench_terms(m, mc, h, k["omega_prev"], k["omega_curr"], k["linear_accel"],
                        k["angular_accel"], k["g_body"])
    f, t = contact_wrench(traj.points[:-2], traj.forces[:-2])
    assert max(np.abs(a - f).max(), np.abs(b - t).max()) < 1e-6


def test_residual_with_recorded_accelerations(model, short_traj):
    tr = short_traj.truth
    m, mc, h = mass_terms(model.params)
    a, b = wrench_terms(m, mc, h, tr["omega_prev"], tr["omega_curr"], tr["linear_accel"],
                        tr["angular_accel"], tr["g_body"])
    f, t = contact_wrench(short_traj.points, short_traj.forces)
    assert max(np.abs(a - f).max(), np.abs(b - t).max()) < 1e-6


def test_empty_contacts_rejected():
    with pytest.raises(ValueError):
        dynamics_residual(_gt(), _window(), [], G)
