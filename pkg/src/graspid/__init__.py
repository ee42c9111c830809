"""Physically consistent inertial parameter and friction estimation for grasped objects."""
from .baseline import baseline_least_squares
from .estimators import FrictionEstimator, InertialEstimator
from .friction import ContactSurface, ServoConfig, estimate_mu, run_trials, servo_until_slip
from .graph import SolverConfig, build_graph
from .inertia import ConvexHull, InertialParams, consistency_violations, inertial_error
from .simulate import ExcitationProfile, SimConfig, reference_model, run_sim
from .solver import solve
from .trajectory import Trajectory

__all__ = [
    "ContactSurface", "ConvexHull", "ExcitationProfile", "FrictionEstimator",
    "InertialEstimator", "InertialParams", "ServoConfig", "SimConfig", "SolverConfig",
    "Trajectory", "baseline_least_squares", "build_graph", "consistency_violations",
    "estimate_mu", "inertial_error", "reference_model", "run_sim", "run_trials",
    "servo_until_slip", "solve",
]
