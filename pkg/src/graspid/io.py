"""File formats: trajectory JSONL, parameter/hull/config files, reports and CSV tables."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .graph import SolverConfig
from .inertia import (ConvexHull, InertialMatrixForm, InertialParams, body_inertia, devectorize,
                      inertial_error, params_from_body, params_from_matrix, six_from_sym,
                      sym_from_six, vectorize)
from .lie import Rotation
from .simulate import ExcitationProfile, RigidBodyModel, SimConfig
from .trajectory import Trajectory

QUAT_TOL = 1e-6
QUAT_RENORM = 1e-9
METHODS = ("baseline", "baseline-fg", "no-c-no-g", "c-no-g", "c-plus-g")


class DataFormatError(ValueError):
    """Malformed or inconsistent input data."""


def fmt(x) -> str:
    """Float with 17 significant digits."""
    x = float(x)
    if not np.isfinite(x):
        raise DataFormatError("non-finite numbers cannot be serialized")
    return format(x, ".17g")


def _vec(values) -> str:
    return "[" + ",".join(fmt(v) for v in np.ravel(values)) + "]"


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def trajectory_lines(traj: Trajectory):
    for t in range(len(traj)):
        contacts = []
        for i, cid in enumerate(traj.contact_ids):
            if not traj.present[t, i]:
                continue
            contacts.append('{"id":%d,"p":%s,"f":%s,"sigma":%s}' % (
                int(cid), _vec(traj.points[t, i]), _vec(traj.forces[t, i]),
                fmt(traj.sigmas[t, i])))
        pose = np.concatenate([traj.quats[t], traj.positions[t]])
        line = '{"t":%d,"stamp":%s,"pose":%s,"contacts":[%s]' % (
            t, fmt(traj.stamps[t]), _vec(pose), ",".join(contacts))
        if t == 0 and traj.metadata:
            line += ',"meta":' + json.dumps(_jsonable(traj.metadata), sort_keys=True,
                                            separators=(",", ":"))
        yield line + "}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def write_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in trajectory_lines(traj):
            fh.write(line + "\n")


def read_trajectory(path) -> Trajectory:
    """Parse a trajectory JSONL file.

    Contacts missing from a line are marked absent; their point is carried
    over from the nearest line where the contact was reported.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
                records.append((lineno, float(rec["stamp"]), np.asarray(rec["pose"], float),
                                rec.get("contacts", []), rec.get("meta")))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed record ({exc})") from None
    if not records:
        raise DataFormatError(f"{path}: no records")
    ids = []
    for _, _, _, contacts, _ in records:
        for c in contacts:
            if int(c["id"]) not in ids:
                ids.append(int(c["id"]))
    n_t, n_c = len(records), len(ids)
    col = {cid: i for i, cid in enumerate(ids)}
    stamps = np.empty(n_t)
    poses = np.empty((n_t, 7))
    points = np.full((n_t, n_c, 3), np.nan)
    forces = np.zeros((n_t, n_c, 3))
    sigmas = np.ones((n_t, n_c))
    present = np.zeros((n_t, n_c), dtype=bool)
    meta = {}
    for t, (lineno, stamp, pose, contacts, m) in enumerate(records):
        if pose.shape != (7,):
            raise DataFormatError(f"{path}:{lineno}: pose must have 7 numbers")
        q = pose[:4]
        err = abs(np.linalg.norm(q) - 1.0)
        if err > QUAT_TOL:
            raise DataFormatError(f"{path}:{lineno}: quaternion norm off by {err:.3g}")
        if err > QUAT_RENORM:
            warnings.warn(f"{path}:{lineno}: renormalizing quaternion (norm error {err:.3g})",
                          stacklevel=2)
        stamps[t] = stamp
        poses[t] = np.concatenate([q / np.linalg.norm(q), pose[4:]])
        if m:
            meta = dict(m)
        for c in contacts:
            i = col[int(c["id"])]
            if present[t, i]:
                raise DataFormatError(f"{path}:{lineno}: duplicate contact id {c['id']}")
            points[t, i] = c["p"]
            forces[t, i] = c["f"]
            sigmas[t, i] = float(c.get("sigma", 1e-6))
            present[t, i] = True
    if n_t > 1 and np.any(np.diff(stamps) <= 0):
        raise DataFormatError(f"{path}: stamps must be strictly increasing")
    if not np.all(np.isfinite(poses)):
        raise DataFormatError(f"{path}: non-finite pose values")
    for i in range(n_c):
        seen = np.flatnonzero(present[:, i])
        nearest = seen[np.abs(np.arange(n_t)[:, None] - seen[None, :]).argmin(axis=1)]
        points[:, i] = points[nearest, i]
    try:
        return Trajectory(stamps, poses[:, :4], poses[:, 4:], ids, points, forces, sigmas,
                          present, meta)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# parameters, hulls, models and configs
# ---------------------------------------------------------------------------

def params_to_dict(p: InertialParams) -> dict:
    return {"mass": p.mass, "com": list(map(float, p.com)),
            "L": list(map(float, p.principal_moments)),
            "principal_rotation_quaternion": list(map(float, p.principal_rotation.q))}


def params_from_dict(d: dict) -> InertialParams:
    """Either ``{mass, com, L, principal_rotation_quaternion}`` or
    ``{mass, com, H_cm}`` (3x3 or the six components xx, yy, zz, xy, xz, yz)."""
    try:
        if "L" in d:
            q = d.get("principal_rotation_quaternion", [1.0, 0.0, 0.0, 0.0])
            return InertialParams(float(d["mass"]), d["com"], d["L"], Rotation(q))
        h = np.asarray(d["H_cm"], dtype=float)
        if h.shape == (6,):
            h = sym_from_six(h)
        return params_from_matrix(float(d["mass"]), d["com"], h)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid inertial parameter record: {exc}") from None


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def load_params(path) -> InertialParams:
    d = load_json(path)
    return params_from_dict(d.get("params", d))


def save_params(p: InertialParams, path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(p), indent=2) + "\n")


def hull_from_dict(d: dict) -> ConvexHull:
    """``{vertices}``, ``{normals, offsets}`` or ``{lower, upper}`` (a box)."""
    try:
        if "vertices" in d:
            return ConvexHull.from_vertices(d["vertices"])
        if "normals" in d:
            return ConvexHull(np.asarray(d["normals"], float), np.asarray(d["offsets"], float))
        return ConvexHull.box(d["lower"], d["upper"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid hull record: {exc}") from None


def hull_to_dict(hull: ConvexHull) -> dict:
    return {"vertices": hull.vertices.tolist()}


def load_hull(path) -> ConvexHull:
    d = load_json(path)
    return hull_from_dict(d.get("hull", d))


def model_from_dict(d: dict) -> RigidBodyModel:
    try:
        return RigidBodyModel(params_from_dict(d["params"]), hull_from_dict(d["hull"]),
                              np.asarray(d["contact_points"], float))
    except KeyError as exc:
        raise DataFormatError(f"model file is missing {exc}") from None
    except ValueError as exc:
        raise DataFormatError(f"invalid model: {exc}") from None


def model_to_dict(model: RigidBodyModel) -> dict:
    return {"params": params_to_dict(model.params), "hull": hull_to_dict(model.hull),
            "contact_points": model.contact_points.tolist()}


def load_model(path) -> RigidBodyModel:
    return model_from_dict(load_json(path))


def sim_config_from_dict(d: dict) -> SimConfig:
    d = dict(d)
    try:
        profile = ExcitationProfile(**{k: tuple(v) if isinstance(v, list) else v
                                       for k, v in d.pop("profile", {}).items()})
        if "gravity" in d:
            d["gravity"] = tuple(d["gravity"])
        return SimConfig(profile=profile, **d)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid simulation config: {exc}") from None


def load_sim_config(path) -> SimConfig:
    return sim_config_from_dict(load_json(path))


def parse_key_values(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(kind, value: str):
    if kind in (int, "int"):
        return int(value)
    if kind in (float, "float"):
        return float(value)
    if kind in (bool, "bool"):
        return value.lower() in ("1", "true", "yes", "on")
    return value


def dataclass_from_key_values(cls, text: str):
    kv = parse_key_values(text)
    known = {f.name: f.type for f in fields(cls)}
    unknown = set(kv) - set(known)
    if unknown:
        raise DataFormatError(f"unknown keys: {', '.join(sorted(unknown))}")
    try:
        return cls(**{k: _coerce(known[k], v) for k, v in kv.items()})
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"invalid {cls.__name__}: {exc}") from None


def load_solver_config(path) -> SolverConfig:
    return dataclass_from_key_values(SolverConfig, Path(path).read_text())


def dump_key_values(obj) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(obj).items())


# ---------------------------------------------------------------------------
# reports and tables
# ---------------------------------------------------------------------------

def estimate_forms(vector=None, params: InertialParams = None) -> dict:
    """Manifold and matrix forms of an estimate given either representation."""
    if params is None:
        vector = np.asarray(vector, dtype=float)
        if vector[0] == 0:
            return {"vector": vector.tolist()}
        mf = devectorize(vector)
        params = params_from_body(mf.mass, mf.com, mf.inertia_body)
    mf = InertialMatrixForm.from_body(params.mass, params.com, body_inertia(params))
    return {
        "vector": vectorize(params).tolist(),
        "manifold": params_to_dict(params),
        "matrix": {"mass": mf.mass, "com": mf.com.tolist(),
                   "H_cm": mf.inertia_cm.tolist(), "H_body": mf.inertia_body.tolist()},
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")


def read_report(path) -> dict:
    d = load_json(path)
    if "estimate" not in d or "matrix" not in d["estimate"]:
        raise DataFormatError(f"{path}: report has no matrix-form estimate")
    return d


def report_matrix_form(report: dict) -> InertialMatrixForm:
    m = report["estimate"]["matrix"]
    return InertialMatrixForm.from_cm(m["mass"], m["com"], np.asarray(m["H_cm"], float))


METRIC_COLUMNS = ("dataset", "method", "m", "cx", "cy", "cz", "Hxx", "Hyy", "Hzz", "Hxy",
                  "Hxz", "Hyz", "inertial_error", "wall_time")


def metrics_row(dataset: str, method: str, est: InertialMatrixForm, gt: InertialParams,
                wall_time: float) -> dict:
    err = inertial_error(gt, est)
    h = six_from_sym(est.inertia_cm)
    values = [est.mass, *est.com, *h, err, wall_time]
    row = {"dataset": dataset, "method": method}
    row.update({k: float(v) for k, v in zip(METRIC_COLUMNS[2:], values)})
    return row


def write_csv(rows, columns, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (fmt(v) if isinstance(v, float) and np.isfinite(v) else v)
                        for k, v in row.items()})


FRICTION_COLUMNS = ("object_id", "trial", "mu_true", "mu_est", "f_slip_x", "f_slip_y",
                    "f_slip_z")


def friction_rows(trials):
    for tr in trials:
        yield {"object_id": tr.object_id, "trial": tr.trial, "mu_true": tr.mu_true,
               "mu_est": tr.mu_est, "f_slip_x": float(tr.f_slip[0]),
               "f_slip_y": float(tr.f_slip[1]), "f_slip_z": float(tr.f_slip[2])}

