"""Linear least-squares identification from finite-difference kinematics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .dynamics import STANDARD_GRAVITY, contact_wrench, regressor
from .lie import window_kinematics_batch
from .trajectory import Trajectory

SG_WINDOW = 51
SG_ORDER = 3


class RankDeficiencyWarning(UserWarning):
    pass


def savitzky_golay(signal, window: int = SG_WINDOW, order: int = SG_ORDER):
    """Polynomial smoothing along the first axis.

    Edge samples use the polynomial fitted to the first or last full window,
    so any polynomial of degree ``<= order`` is reproduced everywhere.
    """
    signal = np.asarray(signal, dtype=float)
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if order < 0 or window <= order:
        raise ValueError("window must exceed the polynomial order")
    if signal.shape[0] < window:
        raise ValueError("signal is shorter than the window")
    return savgol_filter(signal, int(window), int(order), axis=0, mode="interp")


@dataclass(frozen=True)
class LinearSystem:
    """Stacked ``Y w = b`` over every kinematic window."""

    regressor: np.ndarray
    wrench: np.ndarray

    @property
    def matrix(self):
        return self.regressor.reshape(-1, 10)

    @property
    def rhs(self):
        return self.wrench.reshape(-1)


@dataclass(frozen=True)
class BaselineResult:
    vector: np.ndarray
    rank: int
    singular_values: np.ndarray
    rank_deficient: bool
    residual_norm: float


def kinematics(traj: Trajectory, mode: str = "se3"):
    """Finite-difference windows of a trajectory plus gravity in each window frame."""
    if len(traj) < 3:
        raise ValueError("at least 3 timesteps are required")
    rots = traj.rotations()
    pos = traj.positions
    st = traj.stamps
    k = window_kinematics_batch(np.stack([rots[:-2], rots[1:-1], rots[2:]]),
                                np.stack([pos[:-2], pos[1:-1], pos[2:]]),
                                np.stack([st[:-2], st[1:-1], st[2:]]), mode)
    k["g_body"] = np.einsum("tji,j->ti", rots[:-2], gravity_of(traj))
    return k


def gravity_of(traj: Trajectory):
    return np.asarray(traj.metadata.get("gravity", STANDARD_GRAVITY), dtype=float)


def linear_system(traj: Trajectory, smoothing: bool = False, exact_kinematics: bool = False,
                  window: int = SG_WINDOW, order: int = SG_ORDER) -> LinearSystem:
    """Regressor and net contact wrench for every window.

    With ``exact_kinematics`` the simulator's recorded accelerations replace the
    finite differences (only available on simulated data).  ``smoothing``
    filters the measured net wrench with a Savitzky-Golay filter.
    """
    if exact_kinematics:
        if traj.truth is None:
            raise ValueError("trajectory carries no simulator ground truth")
        tr = traj.truth
        y = regressor(tr["omega_prev"], tr["omega_curr"], tr["linear_accel"],
                      tr["angular_accel"], tr["g_body"])
        n = len(traj)
    else:
        k = kinematics(traj)
        y = regressor(k["omega_prev"], k["omega_curr"], k["linear_accel"],
                      k["angular_accel"], k["g_body"])
        n = len(traj) - 2
    points, forces, _ = traj.effective()
    f, t = contact_wrench(points, forces)
    wrench = np.concatenate([f, t], axis=1)
    if smoothing:
        wrench = savitzky_golay(wrench, window, order)
    return LinearSystem(y, wrench[:n])


def solve_linear(system: LinearSystem, rcond: float = 1e-10) -> BaselineResult:
    a, b = system.matrix, system.rhs
    sol, _, rank, sv = np.linalg.lstsq(a, b, rcond=rcond)
    deficient = rank < a.shape[1]
    if deficient:
        warnings.warn(f"regressor rank {rank} < 10; returning the minimum-norm solution",
                      RankDeficiencyWarning, stacklevel=2)
    return BaselineResult(sol, int(rank), sv, bool(deficient), float(np.linalg.norm(a @ sol - b)))


def baseline_least_squares(traj: Trajectory, smoothing: bool = True,
                           exact_kinematics: bool = False) -> BaselineResult:
    """Vector parameters ``[m, m c, H]`` from the stacked linear system."""
    if smoothing and len(traj) <= SG_WINDOW:
        raise ValueError(f"smoothing needs more than {SG_WINDOW} samples")
    return solve_linear(linear_system(traj, smoothing, exact_kinematics))
