"""Inertial parameterizations, pseudo-inertia projection and consistency checks.

The manifold parameterization stores mass, center of mass, the three second
moments ``L = (L_x, L_y, L_z)`` along the principal axes and the rotation from
the principal axes to the body frame.  The rotational inertia it generates is
taken about the body-frame origin.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull as _QHull
from scipy.spatial import HalfspaceIntersection
from scipy.optimize import linprog

from .lie import Rotation

PARALLEL_AXIS = ("standard", "paper")
HULL_TOL = 1e-9


class SingularPriorError(ValueError):
    """The pseudo-inertia used as reference cannot be inverted."""


class DegenerateMassError(ValueError):
    pass


@dataclass(frozen=True)
class InertialParams:
    mass: float
    com: np.ndarray
    principal_moments: np.ndarray
    principal_rotation: Rotation = field(default_factory=Rotation)

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        for name in ("com", "principal_moments"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (3,):
                raise ValueError(f"{name} must have 3 components")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not isinstance(self.principal_rotation, Rotation):
            object.__setattr__(self, "principal_rotation", Rotation(self.principal_rotation))

    def scaled(self, factor: float) -> "InertialParams":
        """Same body with mass and second moments multiplied by ``factor``."""
        return InertialParams(self.mass * factor, self.com,
                              self.principal_moments * factor, self.principal_rotation)


@dataclass(frozen=True)
class InertialMatrixForm:
    """Mass, CoM and inertia both about the body origin and about the CoM."""

    mass: float
    com: np.ndarray
    inertia_body: np.ndarray
    inertia_cm: np.ndarray
    convention: str = "standard"

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        com = np.array(self.com, dtype=float).reshape(3)
        hb = np.array(self.inertia_body, dtype=float).reshape(3, 3)
        hc = np.array(self.inertia_cm, dtype=float).reshape(3, 3)
        scale = max(1.0, np.abs(hb).max())
        if np.abs(hb - hb.T).max() > 1e-12 * scale or np.abs(hc - hc.T).max() > 1e-12 * scale:
            raise ValueError("inertia matrices must be symmetric")
        expected = hb - parallel_axis_shift(self.mass, com, self.convention)
        if np.abs(expected - hc).max() > 1e-9 * scale:
            raise ValueError("inertia_cm is inconsistent with inertia_body (parallel axis)")
        for name, arr in (("com", com), ("inertia_body", hb), ("inertia_cm", hc)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_body(cls, mass, com, inertia_body, convention="standard"):
        hb = _sym(inertia_body)
        return cls(mass, com, hb, hb - parallel_axis_shift(mass, com, convention), convention)

    @classmethod
    def from_cm(cls, mass, com, inertia_cm, convention="standard"):
        hc = _sym(inertia_cm)
        return cls(mass, com, hc + parallel_axis_shift(mass, com, convention), hc, convention)


def _sym(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def parallel_axis_shift(mass, com, convention="standard"):
    """Inertia of a point mass at ``com`` about the origin.

    ``"standard"`` is ``m (|c|^2 I - c c^T)``; ``"paper"`` is the literal
    ``m c c^T`` variant kept for comparison.
    """
    com = np.asarray(com, dtype=float)
    if convention == "standard":
        return mass * (com @ com * np.eye(3) - np.outer(com, com))
    if convention == "paper":
        return mass * np.outer(com, com)
    raise ValueError(f"parallel-axis convention must be one of {PARALLEL_AXIS}")


def principal_inertia(moments):
    lx, ly, lz = np.asarray(moments, dtype=float)
    return np.array([ly + lz, lx + lz, lx + ly])


def body_inertia(p: InertialParams) -> np.ndarray:
    rot = p.principal_rotation.matrix()
    h = rot @ np.diag(principal_inertia(p.principal_moments)) @ rot.T
    return _sym(h)


def cm_inertia(p: InertialParams, convention: str = "standard") -> np.ndarray:
    return _sym(body_inertia(p) - parallel_axis_shift(p.mass, p.com, convention))


def matrix_form(p: InertialParams, convention: str = "standard") -> InertialMatrixForm:
    return InertialMatrixForm.from_body(p.mass, p.com, body_inertia(p), convention)


def _canonical_axes(vecs):
    vecs = vecs.copy()
    for j in range(3):
        col = vecs[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            vecs[:, j] = -col
    if np.linalg.det(vecs) < 0:
        vecs[:, 2] = -vecs[:, 2]
    return vecs


def params_from_body(mass, com, inertia_body) -> InertialParams:
    hb = _sym(inertia_body)
    vals, vecs = np.linalg.eigh(hb)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    spread = np.ptp(vals)
    if spread <= 1e-12 * max(1.0, np.abs(vals).max()):
        vecs = np.eye(3)
    else:
        vecs = _canonical_axes(vecs)
    h1, h2, h3 = vals
    moments = 0.5 * np.array([h2 + h3 - h1, h1 + h3 - h2, h1 + h2 - h3])
    return InertialParams(mass, com, moments, Rotation.from_matrix(vecs))


def params_from_matrix(mass, com, inertia_cm, convention: str = "standard") -> InertialParams:
    """Inverse of :func:`cm_inertia`: eigendecompose the body-origin inertia.

    Eigenvalues are sorted in descending order; eigenvector signs are fixed so
    the first non-zero component is positive, and the last axis is flipped if
    needed to obtain a proper rotation.
    """
    hb = _sym(inertia_cm) + parallel_axis_shift(mass, com, convention)
    return params_from_body(mass, com, hb)


def pseudo_inertia(mass, com, inertia_body) -> np.ndarray:
    h = _sym(inertia_body)
    com = np.asarray(com, dtype=float)
    out = np.empty((4, 4))
    out[:3, :3] = 0.5 * np.trace(h) * np.eye(3) - h
    out[:3, 3] = mass * com
    out[3, :3] = mass * com
    out[3, 3] = mass
    return out


def project_pseudo(p) -> np.ndarray:
    """Pseudo-inertia ``[[tr(H)/2 I - H, m c], [m c^T, m]]`` with ``H`` about
    the body origin.  Accepts :class:`InertialParams`,
    :class:`InertialMatrixForm` or an already projected 4x4 array."""
    if isinstance(p, InertialParams):
        return pseudo_inertia(p.mass, p.com, body_inertia(p))
    if isinstance(p, InertialMatrixForm):
        return pseudo_inertia(p.mass, p.com, p.inertia_body)
    arr = np.asarray(p, dtype=float)
    if arr.shape != (4, 4):
        raise TypeError(f"cannot project object of type {type(p).__name__}")
    return arr


def _trace_ratio(reference, other):
    ref = project_pseudo(reference)
    try:
        if np.linalg.cond(ref) > 1e14:
            raise np.linalg.LinAlgError
        return float(np.trace(np.linalg.solve(ref, project_pseudo(other))))
    except np.linalg.LinAlgError:
        raise SingularPriorError("reference pseudo-inertia is singular") from None


def geodesic_prior_value(p, prior) -> float:
    """``tr(P_prior^-1 P)``; equals 4 when ``p`` matches the prior."""
    return _trace_ratio(prior, p)


def inertial_error(gt, est) -> float:
    """``|4 - tr(P_gt^-1 P_est)|`` between two inertial estimates."""
    return abs(4.0 - _trace_ratio(gt, est))


# ---------------------------------------------------------------------------
# vector parameterization
# ---------------------------------------------------------------------------

VECTOR_LABELS = ("m", "mcx", "mcy", "mcz", "Hxx", "Hyy", "Hzz", "Hxy", "Hxz", "Hyz")


def sym_from_six(h6):
    h6 = np.asarray(h6, dtype=float)
    xx, yy, zz, xy, xz, yz = np.moveaxis(h6, -1, 0)
    return np.stack([np.stack([xx, xy, xz], -1),
                     np.stack([xy, yy, yz], -1),
                     np.stack([xz, yz, zz], -1)], -2)


def six_from_sym(h):
    h = np.asarray(h, dtype=float)
    return np.stack([h[..., 0, 0], h[..., 1, 1], h[..., 2, 2],
                     h[..., 0, 1], h[..., 0, 2], h[..., 1, 2]], -1)


def vectorize(p) -> np.ndarray:
    """``[m, m c, H_xx, H_yy, H_zz, H_xy, H_xz, H_yz]`` with ``H`` about the
    body origin."""
    if isinstance(p, InertialParams):
        p = matrix_form(p)
    return np.concatenate([[p.mass], p.mass * np.asarray(p.com), six_from_sym(p.inertia_body)])


def devectorize(v, convention: str = "standard") -> InertialMatrixForm:
    v = np.asarray(v, dtype=float).reshape(10)
    if v[0] == 0.0:
        raise DegenerateMassError("cannot recover the CoM of a zero-mass vector")
    return InertialMatrixForm.from_body(v[0], v[1:4] / v[0], sym_from_six(v[4:]), convention)


# ---------------------------------------------------------------------------
# convex hull and consistency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexHull:
    """Bounded convex polytope ``{x : normals @ x <= offsets}`` in the body frame."""

    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray = None
    faces: tuple = ()

    def __post_init__(self):
        n = np.array(self.normals, dtype=float).reshape(-1, 3)
        d = np.array(self.offsets, dtype=float).reshape(-1)
        if n.shape[0] != d.shape[0] or n.shape[0] < 4:
            raise ValueError("a bounded hull needs at least four halfspaces")
        norms = np.linalg.norm(n, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("hull normals must have unit norm")
        verts = self.vertices
        if verts is None:
            verts = _vertices_from_halfspaces(n, d)
        verts = np.array(verts, dtype=float).reshape(-1, 3)
        faces = self.faces or _faces(n, d, verts)
        for name, arr in (("normals", n), ("offsets", d), ("vertices", verts)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "faces", tuple(faces))

    @classmethod
    def from_vertices(cls, vertices):
        pts = np.asarray(vertices, dtype=float).reshape(-1, 3)
        qh = _QHull(pts)
        normals, offsets = [], []
        for eq in qh.equations:
            nrm, off = eq[:3], -eq[3]
            scale = np.linalg.norm(nrm)
            nrm, off = nrm / scale, off / scale
            if any(np.allclose(nrm, m, atol=1e-9) and abs(off - o) < 1e-9
                   for m, o in zip(normals, offsets)):
                continue
            normals.append(nrm)
            offsets.append(off)
        return cls(np.array(normals), np.array(offsets), pts[qh.vertices])

    @classmethod
    def box(cls, lower, upper):
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        eye = np.eye(3)
        normals = np.concatenate([eye, -eye])
        offsets = np.concatenate([hi, -lo])
        return cls(normals, offsets)

    def margins(self, point) -> np.ndarray:
        """Signed distances ``n . x - d`` (positive means outside that face)."""
        return self.normals @ np.asarray(point, dtype=float) - self.offsets

    def contains(self, point, tol: float = HULL_TOL) -> bool:
        return bool(np.all(self.margins(point) <= tol))

    @property
    def centroid(self) -> np.ndarray:
        qh = _QHull(self.vertices)
        ref = self.vertices.mean(axis=0)
        vol, acc = 0.0, np.zeros(3)
        for simplex in qh.simplices:
            a, b, c = self.vertices[simplex]
            v = abs(np.dot(a - ref, np.cross(b - ref, c - ref))) / 6.0
            vol += v
            acc += v * (a + b + c + ref) / 4.0
        return acc / vol


def _vertices_from_halfspaces(normals, offsets):
    # interior point: Chebyshev center of the polytope
    res = linprog(c=[0, 0, 0, -1],
                  A_ub=np.hstack([normals, np.ones((len(normals), 1))]),
                  b_ub=offsets, bounds=[(None, None)] * 3 + [(0, None)])
    if not res.success or res.x[3] <= 0:
        raise ValueError("halfspaces do not enclose a bounded, non-empty region")
    inter = HalfspaceIntersection(np.hstack([normals, -offsets[:, None]]), res.x[:3])
    pts = inter.intersections
    if not np.all(np.isfinite(pts)) or np.abs(pts).max() > 1e6:
        raise ValueError("hull is unbounded")
    unique = []
    for p in pts:
        if not any(np.linalg.norm(p - u) < 1e-9 for u in unique):
            unique.append(p)
    return np.array(unique)


def _faces(normals, offsets, verts):
    faces = []
    for n, d in zip(normals, offsets):
        idx = np.flatnonzero(np.abs(verts @ n - d) < 1e-7)
        if idx.size:
            center = verts[idx].mean(axis=0)
            u = verts[idx[0]] - center
            if np.linalg.norm(u) > 0:
                u /= np.linalg.norm(u)
            w = np.cross(n, u)
            rel = verts[idx] - center
            ang = np.arctan2(rel @ w, rel @ u)
            idx = idx[np.argsort(ang, kind="stable")]
        faces.append(idx)
    return faces


@dataclass(frozen=True)
class Violation:
    constraint: str
    margin: float


def constraint_margins(p: InertialParams, hull: ConvexHull) -> np.ndarray:
    """``[-m, -L_x, -L_y, -L_z, face margins...]``; all ``<= 0`` when consistent."""
    return np.concatenate([[-p.mass], -np.asarray(p.principal_moments), hull.margins(p.com)])


def constraint_names(hull: ConvexHull):
    return ["mass", "L_x", "L_y", "L_z"] + [f"hull[{i}]" for i in range(len(hull.offsets))]


def consistency_violations(p: InertialParams, hull: ConvexHull, tol: float = HULL_TOL):
    """List of violated constraints with their (positive) margins."""
    margins = constraint_margins(p, hull)
    out = []
    for i, (name, margin) in enumerate(zip(constraint_names(hull), margins)):
        bad = margin >= 0.0 if i == 0 else margin > (tol if i >= 4 else 0.0)
        if bad:
            out.append(Violation(name, float(margin)))
    return out


def is_consistent(p, hull: ConvexHull) -> bool:
    return isinstance(p, InertialParams) and not consistency_violations(p, hull)
