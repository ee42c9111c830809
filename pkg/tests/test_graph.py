import numpy as np
import pytest

from graspid.dynamics import STANDARD_GRAVITY
from graspid.graph import (DataError, ManifoldInertia, SolverConfig, Values, VariableId,
                           VectorInertia, build_graph, constraint_residual, numeric_jacobian,
                           retract)
from graspid.inertia import ConvexHull, InertialParams, vectorize
from graspid.lie import exp_rotation, hat, so3_exp
from graspid.simulate import add_force_noise, add_pose_noise
from graspid.solver import linearize

HULL = ConvexHull.box([-0.3, 0.0, -0.3], [0.5, 0.8, 0.3])


def _graph(traj, variant="c-no-g", **kw):
    prior = kw.pop("prior", None)
    return build_graph(traj, HULL, SolverConfig(variant=variant, **kw), prior)


def _perturbed_values(graph, rng, inertial):
    v = graph.initial_values()
    d_pose = rng.normal(size=(graph.n_steps, 6)) * 1e-3
    return Values(v.rots, v.positions, v.forces, v.points, inertial).retract(
        d_pose, rng.normal(size=v.forces.shape) * 0.05, rng.normal(size=v.points.shape) * 1e-3,
        np.zeros(10))


def _richardson(fun, x0_dim, h=1e-3):
    """Fourth-order central-difference oracle in local coordinates."""
    cols = []
    for j in range(x0_dim):
        def central(step):
            e = np.zeros(x0_dim)
            e[j] = step
            return (fun(e) - fun(-e)) / (2 * step)
        cols.append((4 * central(h / 2) - central(h)) / 3)
    return np.stack(cols, axis=1)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_factor_counts(short_traj):
    traj = short_traj.slice(0, 3)
    g = _graph(traj)
    assert g.count("M", "pose") == 3
    assert g.count("M", "force") == 12
    assert g.count("M", "contact") == 12
    assert g.count("D") == 1
    assert g.count("C") == 1 and g.count("B") == 0
    g = _graph(short_traj.slice(0, 50), "no-c-no-g")
    assert g.count("D") == 48
    assert g.count("B") == 0 and g.count("C") == 0
    gp = _graph(traj, "c-plus-g", prior=InertialParams(1.0, [0.1, 0.4, 0.0], [0.1, 0.1, 0.1]))
    assert gp.count("B") == 1 and gp.count("C") == 1
    dims = {f.label: f.dim for f in gp.factors}
    assert dims == {"pose": 6, "force": 3, "contact": 3, "dynamics": 6,
                    "consistency": 4 + 6, "geodesic": 1}


def test_build_graph_validation(short_traj):
    with pytest.raises(ValueError):
        _graph(short_traj.slice(0, 2))
    with pytest.raises(ValueError):
        _graph(short_traj.slice(0, 5), "c-plus-g")
    with pytest.raises(ValueError):
        SolverConfig(variant="bogus")
    with pytest.raises(ValueError):
        SolverConfig(initial_damping=0.0)


def test_variables_are_unique(short_traj):
    g = _graph(short_traj.slice(0, 6))
    keys = {k for f in g.factors for k in f.keys}
    n_t, n_c = 6, 4
    assert len(keys) == n_t + 2 * n_t * n_c + 1
    with pytest.raises(ValueError):
        VariableId("bogus")


def test_constraint_residual_arithmetic():
    ok = InertialParams(1.0, [0.1, 0.4, 0.0], [0.1, 0.1, 0.1])
    np.testing.assert_array_equal(constraint_residual(ok, HULL, 10.0), 0.0)
    neg = InertialParams(-0.1, [0.1, 0.4, 0.0], [0.1, 0.1, 0.1])
    r = constraint_residual(neg, HULL, 10.0)
    assert r[0] == pytest.approx(1.0) and np.all(r[1:] == 0)
    out = InertialParams(1.0, [0.52, 0.4, 0.0], [0.1, 0.1, 0.1])
    r = constraint_residual(out, HULL, 10.0)
    assert np.count_nonzero(r) == 1 and r.max() == pytest.approx(0.2)


def test_pose_retraction():
    var = VariableId("pose", 0)
    rot, pos = retract(var, (np.eye(3), np.zeros(3)), np.zeros(6))
    np.testing.assert_array_equal(rot, np.eye(3))
    np.testing.assert_array_equal(pos, np.zeros(3))
    eps = 1e-6
    rot, _ = retract(var, (np.eye(3), np.zeros(3)), [0, 0, eps, 0, 0, 0])
    assert np.abs(rot - (np.eye(3) + hat([0, 0, eps]))).max() < 1e-11


def test_chained_retractions_first_order():
    rng = np.random.default_rng(0)
    var = VariableId("pose", 0)
    base = (so3_exp(rng.normal(size=3)), rng.normal(size=3))
    for scale in (1e-2, 1e-3):
        d1, d2 = rng.normal(size=6) * scale, rng.normal(size=6) * scale
        chained = retract(var, retract(var, base, d1), d2)
        single = retract(var, base, d1 + d2)
        err = max(np.abs(chained[0] - single[0]).max(), np.abs(chained[1] - single[1]).max())
        assert err < 10 * scale ** 2


def test_vector_and_scalar_retraction():
    np.testing.assert_array_equal(retract(VariableId("force", 0, 0), [1.0, 2.0, 3.0], [1, 1, 1]),
                                  [2.0, 3.0, 4.0])
    w = ManifoldInertia(1.0, np.zeros(3), np.ones(3), np.eye(3))
    moved = retract(VariableId("inertial"), w, np.r_[0.5, np.zeros(6), 0, 0, 0.1])
    assert moved.mass == 1.5
    np.testing.assert_allclose(moved.rotation, so3_exp([0, 0, 0.1]))
    with pytest.raises(ValueError):
        retract(VariableId("inertial"), w, np.zeros(3))


def test_numeric_jacobian_linear_factor(short_traj):
    g = _graph(short_traj.slice(0, 4))
    v = g.initial_values()
    force_factor = next(f for f in g.factors if f.label == "force")
    jac = numeric_jacobian(force_factor, v)
    np.testing.assert_allclose(jac[force_factor.keys[0]], force_factor.sqrt_info, atol=1e-8)


def test_pose_factor_identity_block(short_traj):
    g = _graph(short_traj.slice(0, 4), pose_rot_sigma=1.0, pose_trans_sigma=1.0)
    v = g.initial_values()
    factor = g.factors[0]
    np.testing.assert_allclose(numeric_jacobian(factor, v)[factor.keys[0]], np.eye(6),
                               atol=1e-8)


def test_dynamics_mass_column(short_traj):
    g = _graph(short_traj.slice(0, 4), "baseline-fg", dynamics_force_sigma=1.0,
               dynamics_torque_sigma=1.0)
    v = g.initial_values(vectorize(InertialParams(1.3, [0.2, 0.5, 0.1], [0.1, 0.1, 0.1])))
    factor = next(f for f in g.factors if f.kind == "D")
    col = numeric_jacobian(factor, v)[VariableId("inertial")][:3, 0]
    kin = g.window_kinematics(v.rots, v.positions)
    g_body = v.rots[0].T @ STANDARD_GRAVITY
    np.testing.assert_allclose(col, kin["linear_accel"][0] - g_body, atol=1e-6)


@pytest.mark.parametrize("mode", ["analytic-where-available", "numeric"])
@pytest.mark.parametrize("variant", ["c-no-g", "baseline-fg", "c-plus-g"])
def test_linearization_matches_refined_oracle(short_traj, mode, variant):
    rng = np.random.default_rng(1)
    traj = add_pose_noise(add_force_noise(short_traj.slice(0, 8), 0.1, 2), 1e-3, 1e-3, 3)
    truth = InertialParams(1.3, [0.2, 0.5, 0.1], [0.05, 0.1, 0.3], exp_rotation([0.2, 0.1, 0.3]))
    prior = InertialParams(1.0, [0.1, 0.4, 0.0], [0.1, 0.1, 0.1])
    g = _graph(traj, variant, jacobian_mode=mode, prior=prior if variant == "c-plus-g" else None)
    inertial = (ManifoldInertia.from_params(truth) if variant != "baseline-fg"
                else VectorInertia(vectorize(truth)))
    values = _perturbed_values(g, rng, inertial)
    lin = linearize(g, values)
    n = g.n_contacts
    dyn = [f for f in g.factors if f.kind == "D"]
    for t in (0, 3, 5):
        f = dyn[t]
        poses = f.keys[:3]
        for k, var in enumerate(poses):
            oracle = _richardson(lambda d: f.residual(values.with_variable(
                var, retract(var, values.get(var), d))), 6)
            assert _rel(lin.j_dyn_x[t][:, 6 * k:6 * k + 6], oracle) < 1e-5
        for i in range(n):
            for block, kind in ((0, "force"), (1, "contact")):
                var = VariableId(kind, t, i)
                oracle = _richardson(lambda d: f.residual(values.with_variable(
                    var, retract(var, values.get(var), d))), 3)
                cols = slice(3 * (block * n + i), 3 * (block * n + i) + 3)
                assert _rel(lin.j_dyn_y[t][:, cols], oracle) < 1e-5
        w = VariableId("inertial")
        oracle = _richardson(lambda d: f.residual(values.with_variable(
            w, values.inertial.retract(d))), 10)
        assert _rel(lin.j_dyn_w[t], oracle) < 1e-5
    for t in (0, 7):
        f = g.factors[t]
        var = f.keys[0]
        oracle = _richardson(lambda d: f.residual(values.with_variable(
            var, retract(var, values.get(var), d))), 6)
        assert _rel(lin.j_pose[t], oracle) < 1e-5
    if variant == "c-plus-g":
        b = next(f for f in g.factors if f.kind == "B")
        oracle = _richardson(lambda d: b.residual(values.with_variable(
            VariableId("inertial"), values.inertial.retract(d))), 10)
        assert _rel(lin.j_extra[-1:], oracle) < 1e-5


def test_hinge_jacobian_on_active_constraints(short_traj):
    g = _graph(short_traj.slice(0, 5))
    bad = ManifoldInertia(-0.2, np.array([0.6, 0.4, 0.0]), np.array([-0.01, 0.1, 0.1]),
                          np.eye(3))
    values = g.initial_values().with_variable(VariableId("inertial"), bad)
    lin = linearize(g, values)
    c = next(f for f in g.factors if f.kind == "C")
    oracle = _richardson(lambda d: c.residual(values.with_variable(
        VariableId("inertial"), bad.retract(d))), 10, h=1e-4)
    assert _rel(lin.j_extra[:g.constraint_dim], oracle) < 1e-5


def test_nonfinite_cost_is_a_data_error(short_traj):
    traj = short_traj.slice(0, 5)
    forces = traj.forces.copy()
    forces[2, 1, 0] = np.nan
    g = _graph(traj.with_arrays(forces=forces))
    with pytest.raises(DataError):
        g.cost(g.initial_values())
