import numpy as np
import pytest

from graspid.simulate import SimConfig, reference_model, run_sim


@pytest.fixture(scope="session")
def model():
    return reference_model()


@pytest.fixture(scope="session")
def short_traj(model):
    """Two seconds of noiseless simulated data."""
    return run_sim(model, SimConfig(duration=2.0, seed=3))


def random_rotvecs(rng, n, max_angle=np.pi - 1e-3):
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    return axes * rng.uniform(0.0, max_angle, size=(n, 1))
