"""Boundary traces along polygon edges.

On edge i with arc-length parameter t in [0, L], the restriction u_hat of
the potential satisfies the one-dimensional equation

    u_hat''(t) = R(t),   R(t) = 1 / ( h(x(t)) * prod_{q != i} l_q(x(t)) ).

The neighbor faces vanish linearly at the endpoints, l_{i-1} = a t and
l_{i+1} = b (L - t), so H(t) := t (L - t) R(t) extends smoothly to [0, L]
and is computed from that factorization directly (no 0/0 at the ends).
The solution splits into explicit singular parts and a smooth remainder:

    u_hat(t) = c0 t log t + cL (L - t) log(L - t) + r(t) + slope t + intercept,

with c0 = H(0)/L and cL = H(L)/L, which makes u_hat'' - (singular parts)''
bounded.  The remainder r is recovered by interpolating the bounded part of
R with a Chebyshev polynomial and integrating it twice exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev

from .fields import FieldError, ScalarField
from .geometry import EdgeFrame, Polytope, edge_frame

__all__ = [
    "BoundaryTrace",
    "TraceError",
    "edge_rhs",
    "edge_coefficient",
    "solve_trace",
    "solve_edge",
    "eval_trace",
    "trace_from_function",
    "assemble_boundary",
]

RESIDUAL_TARGET = 1e-8


class TraceError(ValueError):
    """Invalid edge data (nonpositive weight, endpoint evaluation, ...)."""


@dataclass(frozen=True)
class BoundaryTrace:
    """Dirichlet trace on one edge: singular log parts plus a smooth tail."""

    edge_index: int
    length: float
    c0: float
    cL: float
    smooth: Chebyshev       # twice-integrated regular remainder r(t)
    slope: float
    intercept: float
    alpha0: float           # value at t = 0
    alpha1: float           # value at t = L
    residual: float         # sup |u_hat'' - R| at check points

    def eval(self, t, order: int = 0):
        """Evaluate the trace or its first/second derivative.

        Derivatives (order >= 1) are infinite at the endpoints, per the
        t log t profile, and requesting them there raises TraceError.
        """
        t = np.asarray(t, dtype=float)
        L = self.length
        if np.any(t < -1e-12 * L) or np.any(t > L * (1 + 1e-12)):
            raise TraceError(f"parameter outside [0, {L}]")
        if order == 0:
            tt = np.clip(t, 0.0, L)
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(tt > 0, tt * np.log(np.where(tt > 0, tt, 1.0)), 0.0) * self.c0
                s = s + np.where(L - tt > 0, (L - tt) * np.log(np.where(L - tt > 0, L - tt, 1.0)), 0.0) * self.cL
            return s + self.smooth(tt) + self.slope * tt + self.intercept
        if np.any(t <= 0) or np.any(t >= L):
            raise TraceError("derivative requested at an edge endpoint (infinite there)")
        if order == 1:
            return (self.c0 * (np.log(t) + 1.0) - self.cL * (np.log(L - t) + 1.0)
                    + self.smooth.deriv(1)(t) + self.slope)
        if order == 2:
            return self.c0 / t + self.cL / (L - t) + self.smooth.deriv(2)(t)
        raise ValueError(f"order must be 0, 1 or 2, got {order}")

    def __call__(self, t):
        return self.eval(t, 0)


def eval_trace(trace: BoundaryTrace, t, order: int = 0):
    return trace.eval(t, order)


def edge_rhs(P: Polytope, h: ScalarField, i: int):
    """Return (H, R, frame) for edge i.

    H(t) = 1 / (h(x(t)) * a * b * prod_{q not in {i-1, i, i+1}} l_q(x(t)))
    is smooth and positive on [0, L]; R(t) = H(t) / (t (L - t)) is the trace
    second derivative.  Raises TraceError if h is not positive on the edge.
    """
    fr = edge_frame(P, i)
    N = P.N
    im1, ip1 = (i - 1) % N, (i + 1) % N
    nm = P.normals
    a = float(np.dot(nm[im1], fr.tangent))
    b = float(-np.dot(nm[ip1], fr.tangent))
    if a <= 0 or b <= 0:
        raise TraceError(f"edge {i}: inconsistent neighbor-face slopes")
    rest = [q for q in range(N) if q not in (im1, i, ip1)]

    ts = np.linspace(0.0, fr.length, 129)
    xs, ys = fr.point(ts)
    hv = h(xs, ys)
    if not np.all(hv > 0):
        k = int(np.argmin(hv))
        raise TraceError(f"h <= 0 on edge {i} (h={hv[k]:.6g} at t={ts[k]:.6g})")

    def H(t):
        t = np.asarray(t, dtype=float)
        x, y = fr.point(t)
        denom = h(x, y) * a * b
        for q in rest:
            denom = denom * P.faces[q].value(x, y)
        return 1.0 / denom

    def R(t):
        t = np.asarray(t, dtype=float)
        return H(t) / (t * (fr.length - t))

    return H, R, fr


def edge_coefficient(P: Polytope, h: ScalarField, i: int) -> Callable:
    """The effective edge weight a_hat(t) = h * prod_{q != i} l_q on edge i.

    This is the coefficient for which u_hat'' = 1 / a_hat; equivalently
    the limit of phi / l_i approaching the edge.
    """
    fr = edge_frame(P, i)
    others = [q for q in range(P.N) if q != i]

    def coeff(t):
        t = np.asarray(t, dtype=float)
        x, y = fr.point(t)
        out = h(x, y)
        for q in others:
            out = out * P.faces[q].value(x, y)
        return out

    return coeff


def solve_trace(H: Callable, L: float, alpha0: float, alpha1: float,
                degree: int = 32, edge_index: int = -1,
                auto_refine: bool = True) -> BoundaryTrace:
    """Solve u_hat'' = H(t)/(t(L-t)) on [0, L] with endpoint values alpha.

    H must be evaluable on all of [0, L].  The bounded remainder
    g = R - (singular parts)'' is interpolated at Chebyshev points of the
    first kind (degree `degree`, doubled while the equation residual stays
    above 1e-8, up to degree 256) and integrated twice in closed form.
    """
    if L <= 0:
        raise TraceError("edge length must be positive")
    c0 = float(H(0.0)) / L
    cL = float(H(L)) / L

    def g(t):
        t = np.asarray(t, dtype=float)
        num = H(t) - c0 * (L - t) - cL * t
        return num / (t * (L - t))

    deg = int(degree)
    while True:
        cheb = Chebyshev.interpolate(g, deg, domain=[0.0, L])
        r = cheb.integ(2)
        tchk = _cheb_points(max(4 * deg + 17, 257), 0.0, L)
        res = float(np.max(np.abs(cheb(tchk) - g(tchk))))
        if res <= RESIDUAL_TARGET or not auto_refine or deg >= 256:
            break
        deg *= 2

    # endpoint conditions: value(0) = alpha0, value(L) = alpha1
    intercept = alpha0 - cL * L * np.log(L) - float(r(0.0))
    slope = (alpha1 - c0 * L * np.log(L) - float(r(L)) - intercept) / L
    return BoundaryTrace(edge_index, float(L), c0, cL, r,
                         float(slope), float(intercept),
                         float(alpha0), float(alpha1), res)


def _cheb_points(n: int, a: float, b: float) -> np.ndarray:
    k = np.arange(n)
    x = np.cos((2 * k + 1) * np.pi / (2 * n))
    return 0.5 * (a + b) + 0.5 * (b - a) * x


def solve_edge(P: Polytope, h: ScalarField, i: int,
               alpha0: float, alpha1: float, degree: int = 32,
               auto_refine: bool = True) -> BoundaryTrace:
    """Boundary trace on edge i with vertex values alpha0 at v_i, alpha1 at v_{i+1}."""
    H, _, fr = edge_rhs(P, h, i)
    return solve_trace(H, fr.length, alpha0, alpha1, degree=degree,
                       edge_index=i, auto_refine=auto_refine)


def trace_from_function(P_or_frame, i: int, f: Callable,
                        degree: int = 16) -> BoundaryTrace:
    """Trace carrying given smooth Dirichlet data f(x, y) restricted to edge i.

    No singular parts (c0 = cL = 0); f is fitted along the edge with a
    Chebyshev interpolant.  Exact for polynomial data of degree <= degree.
    """
    fr = P_or_frame if isinstance(P_or_frame, EdgeFrame) else edge_frame(P_or_frame, i)

    def fedge(t):
        x, y = fr.point(np.asarray(t, dtype=float))
        return f(x, y)

    cheb = Chebyshev.interpolate(fedge, degree, domain=[0.0, fr.length])
    a0 = float(fedge(np.array(0.0)))
    a1 = float(fedge(np.array(fr.length)))
    tchk = _cheb_points(257, 0.0, fr.length)
    res = float(np.max(np.abs(cheb(tchk) - fedge(tchk))))
    intercept = a0 - float(cheb(0.0))
    slope = (a1 - float(cheb(fr.length)) - intercept) / fr.length
    return BoundaryTrace(fr.index, fr.length, 0.0, 0.0, cheb,
                         float(slope), float(intercept), a0, a1, res)


def assemble_boundary(P: Polytope, h: ScalarField, alphas,
                      degree: int = 32) -> list[BoundaryTrace]:
    """Solve all edge traces with shared vertex values alphas[i] at v_i.

    The assembled boundary function is automatically continuous: edge i
    ends at vertex i+1 with the same value edge i+1 starts with.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (P.N,):
        raise TraceError(f"alphas: expected {P.N} vertex values, got {alphas.shape}")
    return [solve_edge(P, h, i, alphas[i], alphas[(i + 1) % P.N], degree=degree)
            for i in range(P.N)]
