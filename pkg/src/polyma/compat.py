"""Vertex compatibility of the weight h with the polygon.

For det D2 u = 1/(h prod_i l_i) with boundary behavior u ~ sum_i l_i log l_i,
the value of h at each vertex is forced by the geometry alone:

    h(v_k) = 1 / ( det(n_{k-1}, n_k)^2 * prod_{j != k-1, k} l_j(v_k) ).

There is also a distinguished exact weight, here guillemin_h, for which
u = sum_i l_i log l_i solves the equation exactly:

    1/h(x) = sum_{i<j} det(n_i, n_j)^2 * prod_{q != i, j} l_q(x),

a polynomial that is strictly positive on the closed polygon.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FieldError, ScalarField
from .geometry import Polytope

__all__ = [
    "required_h_at_vertex",
    "required_h_all",
    "adjacent_det2",
    "check_h",
    "guillemin_h",
    "CompatReport",
    "VertexReport",
]


def adjacent_det2(P: Polytope, k: int) -> float:
    """det(n_{k-1}, n_k)^2 for the two faces meeting at vertex k."""
    n = P.normals
    a = n[(k - 1) % P.N]
    b = n[k % P.N]
    return float((a[0] * b[1] - a[1] * b[0]) ** 2)


def required_h_at_vertex(P: Polytope, k: int) -> float:
    """The compatibility value h must take at vertex k."""
    N = P.N
    k = k % N
    v = P.vertices[k]
    vals = P.face_values(v[0], v[1])
    prod = 1.0
    for j in range(N):
        if j not in ((k - 1) % N, k):
            prod *= float(vals[j])
    d2 = adjacent_det2(P, k)
    if d2 <= 0 or prod <= 0:
        raise ValueError(f"degenerate vertex {k}: det^2={d2}, prod={prod}")
    return 1.0 / (d2 * prod)


def required_h_all(P: Polytope) -> np.ndarray:
    return np.array([required_h_at_vertex(P, k) for k in range(P.N)])


@dataclass(frozen=True)
class VertexReport:
    index: int
    vertex: tuple[float, float]
    value: float
    required: float
    rel_deviation: float
    passed: bool
    det2: float


@dataclass(frozen=True)
class CompatReport:
    vertices: tuple[VertexReport, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.vertices)

    @property
    def max_deviation(self) -> float:
        return max(v.rel_deviation for v in self.vertices)


def _positivity_screen(P: Polytope, h: ScalarField, n: int = 64) -> None:
    x0, x1, y0, y1 = P.bbox
    gx = np.linspace(x0, x1, n)
    gy = np.linspace(y0, y1, n)
    X, Y = np.meshgrid(gx, gy)
    scale = max(1.0, P.diameter)
    inside = P.min_face_value(X, Y) >= -1e-12 * scale
    vals = h(X, Y)
    bad = inside & ~(vals > 0)
    if bad.any():
        i = np.argwhere(bad)[0]
        raise FieldError("h is not positive on the closed polygon "
                         f"(h={vals[tuple(i)]:.6g} at x={X[tuple(i)]:.6g}, y={Y[tuple(i)]:.6g})")


def check_h(P: Polytope, h: ScalarField, tol: float = 1e-8) -> CompatReport:
    """Compare h at every vertex against the forced compatibility value.

    Rejects (raises FieldError) an h that fails a positivity screen on a
    64 x 64 bounding-box grid restricted to the closed polygon.  Returns a
    per-vertex report with relative deviations; a vertex passes when the
    deviation is at most tol.
    """
    _positivity_screen(P, h)
    reports = []
    for k in range(P.N):
        v = P.vertices[k]
        req = required_h_at_vertex(P, k)
        val = float(h(v[0], v[1]))
        dev = abs(val - req) / abs(req)
        reports.append(VertexReport(k, (float(v[0]), float(v[1])), val, req, dev,
                                    dev <= tol, adjacent_det2(P, k)))
    return CompatReport(tuple(reports), tol)


def guillemin_h(P: Polytope) -> ScalarField:
    """The exact weight for which sum_i l_i log l_i solves the equation.

    1/h is the polynomial sum_{i<j} det(n_i, n_j)^2 prod_{q != i,j} l_q.
    The returned field automatically satisfies check_h to roundoff.
    """
    n = P.normals
    N = P.N
    pairs = []
    for i in range(N):
        for j in range(i + 1, N):
            d = n[i, 0] * n[j, 1] - n[i, 1] * n[j, 0]
            if d != 0.0:
                rest = [q for q in range(N) if q != i and q != j]
                pairs.append((d * d, rest))

    def fn(x, y):
        vals = P.face_values(x, y)
        acc = np.zeros(np.broadcast(np.asarray(x, float), np.asarray(y, float)).shape)
        for d2, rest in pairs:
            term = np.full_like(acc, d2)
            for q in rest:
                term = term * vals[q]
            acc = acc + term
        return 1.0 / acc

    return ScalarField(fn, expr="guillemin_h")
