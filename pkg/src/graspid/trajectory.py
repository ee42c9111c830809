"""Timestamped pose and contact-force datasets."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import BROKEN_CONTACT_SIGMA, ContactObservation
from .lie import Pose, Rotation, TimedPose, quat_canonical, quat_to_matrix

SOURCES = ("sim", "wrist-ft-style", "in-hand-style")


@dataclass(frozen=True)
class Trajectory:
    """Array-backed dataset of ``T`` samples with ``n`` contact slots.

    Attributes
    ----------
    stamps : (T,) seconds, strictly increasing
    quats : (T, 4) world-frame orientation ``(w, x, y, z)``
    positions : (T, 3) world-frame position in meters
    contact_ids : (n,) stable identifiers of the contact slots
    points, forces : (T, n, 3) body frame
    sigmas : (T, n) force noise scale in newtons
    present : (T, n) bool, False where a contact was not reported
    metadata : dict with ``seed``, ``noise_sigma2`` and ``source``
    truth : optional simulator ground truth (not serialized)
    """

    stamps: np.ndarray
    quats: np.ndarray
    positions: np.ndarray
    contact_ids: np.ndarray
    points: np.ndarray
    forces: np.ndarray
    sigmas: np.ndarray
    present: np.ndarray = None
    metadata: dict = field(default_factory=dict)
    truth: dict = None

    def __post_init__(self):
        stamps = np.array(self.stamps, dtype=float).reshape(-1)
        n_t = stamps.size
        if n_t > 1 and np.any(np.diff(stamps) <= 0):
            raise ValueError("stamps must be strictly increasing")
        quats = quat_canonical(np.array(self.quats, dtype=float).reshape(n_t, 4))
        ids = np.array(self.contact_ids, dtype=int).reshape(-1)
        n_c = ids.size
        if len(set(ids.tolist())) != n_c:
            raise ValueError("contact ids must be unique")
        present = self.present
        if present is None:
            present = np.ones((n_t, n_c), dtype=bool)
        arrays = {
            "stamps": stamps,
            "quats": quats,
            "positions": np.array(self.positions, dtype=float).reshape(n_t, 3),
            "contact_ids": ids,
            "points": np.array(self.points, dtype=float).reshape(n_t, n_c, 3),
            "forces": np.array(self.forces, dtype=float).reshape(n_t, n_c, 3),
            "sigmas": np.array(self.sigmas, dtype=float).reshape(n_t, n_c),
            "present": np.array(present, dtype=bool).reshape(n_t, n_c),
        }
        if np.any(arrays["sigmas"] <= 0):
            raise ValueError("force sigmas must be positive")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "metadata", dict(self.metadata or {}))

    def __len__(self):
        return self.stamps.size

    @property
    def n_contacts(self):
        return self.contact_ids.size

    def rotations(self):
        return quat_to_matrix(self.quats)

    def timed_pose(self, t: int) -> TimedPose:
        return TimedPose(Pose(Rotation(self.quats[t]), self.positions[t]), self.stamps[t])

    @property
    def poses(self):
        return [self.timed_pose(t) for t in range(len(self))]

    def contacts_at(self, t: int):
        return [ContactObservation(cid, self.points[t, i], self.forces[t, i], self.sigmas[t, i])
                for i, cid in enumerate(self.contact_ids) if self.present[t, i]]

    def effective(self):
        """Forces, points and sigmas with missing contacts encoded as broken
        (zero force, loose sigma) so every slot can be used at every step."""
        forces = np.where(self.present[..., None], self.forces, 0.0)
        sigmas = np.where(self.present, self.sigmas, BROKEN_CONTACT_SIGMA)
        return self.points, forces, sigmas

    def with_arrays(self, **changes) -> "Trajectory":
        return replace(self, **changes)

    def slice(self, start=None, stop=None) -> "Trajectory":
        s = slice(start, stop)
        truth = None
        if self.truth is not None:
            truth = {k: v[s] for k, v in self.truth.items()}
        return Trajectory(self.stamps[s], self.quats[s], self.positions[s], self.contact_ids,
                          self.points[s], self.forces[s], self.sigmas[s], self.present[s],
                          dict(self.metadata), truth)
