"""Convex polygon geometry: ordered half-planes, vertices, edge frames.

A polygon P is stored as a counterclockwise sequence of half-planes
l_i(x) = n_i . x - lambda_i with unit inward normals n_i, so that
P = {x : l_i(x) > 0 for all i}.  Vertex v_i is the intersection of the
lines {l_{i-1} = 0} and {l_i = 0} (indices cyclic), hence edge i runs
from v_i to v_{i+1} along {l_i = 0}.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GeometryError",
    "HalfPlane",
    "EdgeFrame",
    "Polytope",
    "build_polytope",
    "eval_faces",
    "edge_frame",
    "polygon_area",
]

_UNIT_TOL = 1e-12
_COND_LIMIT = 1e12


class GeometryError(ValueError):
    """Invalid half-plane input: unbounded, empty interior, or degenerate."""


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area of a closed polygon given as an (n, 2) array."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class HalfPlane:
    """Half-plane {x : n.x - offset > 0} with |n| = 1."""

    normal: tuple[float, float]
    offset: float

    def value(self, x, y):
        return self.normal[0] * np.asarray(x) + self.normal[1] * np.asarray(y) - self.offset


@dataclass(frozen=True)
class EdgeFrame:
    """Arc-length frame of edge i: x(t) = origin + t * tangent, 0 <= t <= length.

    The inward normal points into P; tangent is the normal rotated by -90
    degrees, which traverses the boundary counterclockwise.
    """

    index: int
    origin: np.ndarray
    tangent: np.ndarray
    length: float
    normal: np.ndarray

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return (self.origin[0] + t * self.tangent[0],
                self.origin[1] + t * self.tangent[1])


@dataclass(frozen=True)
class Polytope:
    faces: tuple[HalfPlane, ...]
    vertices: np.ndarray  # (N, 2), vertex i joins faces i-1 and i

    @property
    def N(self) -> int:
        return len(self.faces)

    @property
    def normals(self) -> np.ndarray:
        return np.array([f.normal for f in self.faces], dtype=float)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([f.offset for f in self.faces], dtype=float)

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = 0.5 * cross.sum()
        cx = ((v[:, 0] + w[:, 0]) * cross).sum() / (6.0 * a)
        cy = ((v[:, 1] + w[:, 1]) * cross).sum() / (6.0 * a)
        return np.array([cx, cy])

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        v = self.vertices
        return (float(v[:, 0].min()), float(v[:, 0].max()),
                float(v[:, 1].min()), float(v[:, 1].max()))

    def face_values(self, x, y) -> np.ndarray:
        """All l_i at the given points; shape (N,) + broadcast shape of x."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n = self.normals
        lam = self.offsets
        return (n[:, 0].reshape((-1,) + (1,) * x.ndim) * x[None]
                + n[:, 1].reshape((-1,) + (1,) * x.ndim) * y[None]
                - lam.reshape((-1,) + (1,) * x.ndim))

    def min_face_value(self, x, y) -> np.ndarray:
        return self.face_values(x, y).min(axis=0)

    def contains(self, x, y, tol: float = 0.0) -> np.ndarray:
        return self.min_face_value(x, y) > -tol

    def interior_angles(self) -> np.ndarray:
        """Interior angle at each vertex; they sum to (N - 2) pi."""
        v = self.vertices
        prev = np.roll(v, 1, axis=0) - v
        nxt = np.roll(v, -1, axis=0) - v
        cosang = (prev * nxt).sum(1) / (np.linalg.norm(prev, axis=1) * np.linalg.norm(nxt, axis=1))
        return np.arccos(np.clip(cosang, -1.0, 1.0))


def build_polytope(faces, strict: bool = False) -> Polytope:
    """Build a Polytope from a sequence of (normal, offset) rows.

    Accepts an (N, 3) array-like of (nx, ny, offset) or a sequence of
    ((nx, ny), offset) pairs.  Normals are normalized to unit length
    (offset rescaled accordingly); with strict=True non-unit input is
    rejected instead.  A clockwise face list is reversed with a warning.

    Raises GeometryError when the intersection is unbounded, has empty
    interior, or adjacent faces are nearly parallel.
    """
    rows = []
    for f in faces:
        if isinstance(f, HalfPlane):
            rows.append([f.normal[0], f.normal[1], f.offset])
        else:
            f = np.asarray(f, dtype=float).ravel()
            if f.size == 3:
                rows.append(f)
            elif f.size == 2:
                raise GeometryError("face rows must be (nx, ny, offset)")
            else:
                rows.append(np.array([f[0], f[1], f[2]]))
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GeometryError("faces must be an (N, 3) array of (nx, ny, offset)")
    if len(arr) < 3:
        raise GeometryError("unbounded intersection: need at least 3 half-planes")

    norms = np.linalg.norm(arr[:, :2], axis=1)
    if np.any(norms < 1e-300):
        raise GeometryError("zero normal vector")
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        if strict:
            raise GeometryError("non-unit normals rejected (strict=True)")
        warnings.warn("normalizing non-unit face normals", stacklevel=2)
    arr = arr / norms[:, None]

    def _turns(a):
        n = a[:, :2]
        prev = np.roll(n, 1, axis=0)
        det = prev[:, 0] * n[:, 1] - prev[:, 1] * n[:, 0]
        dot = (prev * n).sum(1)
        return det, np.arctan2(det, dot)

    det, ang = _turns(arr)
    if np.all(det < 0):
        warnings.warn("face list is clockwise; reversing to counterclockwise", stacklevel=2)
        arr = arr[::-1]
        det, ang = _turns(arr)
    if np.any(det <= 0):
        if np.any(np.abs(det) < 1e-9):
            raise GeometryError("adjacent faces nearly parallel")
        raise GeometryError("faces are not in convex counterclockwise order")
    if abs(ang.sum() - 2.0 * np.pi) > 1e-9:
        raise GeometryError("unbounded intersection: normals do not wind once around the circle")

    # Condition of each 2x2 vertex solve; unit rows make this ~ 1/|det|.
    conds = np.array([np.linalg.cond(np.stack([arr[i - 1, :2], arr[i, :2]]))
                      for i in range(len(arr))])
    if np.any(conds > _COND_LIMIT):
        raise GeometryError("adjacent faces nearly parallel (condition > 1e12)")

    N = len(arr)
    verts = np.empty((N, 2))
    for i in range(N):
        A = np.stack([arr[i - 1, :2], arr[i, :2]])
        b = np.array([arr[i - 1, 2], arr[i, 2]])
        verts[i] = np.linalg.solve(A, b)

    faces_t = tuple(HalfPlane((float(nx), float(ny)), float(off)) for nx, ny, off in arr)
    P = Polytope(faces_t, verts)

    scale = max(1.0, float(np.abs(verts).max()))
    vals = P.face_values(verts[:, 0], verts[:, 1])  # (N, N)
    for i in range(N):
        for j in range(N):
            if j in ((i - 1) % N, i % N):
                if abs(vals[j, i]) > 1e-9 * scale:
                    raise GeometryError("vertex does not lie on its defining faces")
            elif vals[j, i] <= 1e-12 * scale:
                raise GeometryError("empty interior or redundant face "
                                    f"(face {j} fails at vertex {i})")
    if P.area <= 0:
        raise GeometryError("empty interior")
    return P


def eval_faces(P: Polytope, x, y=None):
    """Return (face values l_i(x), strictly-inside flag min_i l_i > 0)."""
    if y is None:
        x = np.asarray(x, dtype=float)
        x, y = x[..., 0], x[..., 1]
    vals = P.face_values(x, y)
    return vals, vals.min(axis=0) > 0


def edge_frame(P: Polytope, i: int) -> EdgeFrame:
    """Arc-length frame of edge i (from vertex i to vertex i+1)."""
    N = P.N
    if not 0 <= i < N:
        raise IndexError(f"edge index {i} out of range for {N} faces")
    v0 = P.vertices[i]
    v1 = P.vertices[(i + 1) % N]
    d = v1 - v0
    L = float(np.linalg.norm(d))
    T = d / L
    n = np.asarray(P.faces[i].normal, dtype=float)
    # tangent must be the inward normal rotated by -90 degrees
    if abs(T[0] - n[1]) > 1e-9 or abs(T[1] + n[0]) > 1e-9:
        raise GeometryError(f"edge {i} frame inconsistent with face normal")
    return EdgeFrame(i, v0.copy(), T, L, n)
