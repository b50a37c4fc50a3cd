"""Concavity, Holder, and envelope diagnostics for solved problems.

Three read-only analyses certify measured analogues of the structural
facts the solvers lean on: strict concavity of face-product powers along
interior segments, finiteness of boundary Holder quotients of discrete
solutions, and parabola envelopes with the y log y attainment rate for
the degenerate model solver.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Polytope
from .legendre import PLTGrid
from .ma_solver import DiscreteConvexFn


class DiagnosticsError(RuntimeError):
    pass


def factor_profile(a, b, t, alpha: float):
    """Values and exact second derivative of (prod(a_i + b_i t))^alpha.

    a, b are factor coefficient arrays (one row per linear factor); t is
    the parameter grid.  Returns (values, second).  The derivative is the
    closed form alpha phi (alpha s1^2 - s2) with s_k the power sums of
    r_i = b_i/(a_i + b_i t), not a finite difference.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    lin = a[:, None] + b[:, None] * t[None, :]
    if np.min(lin) <= 0.0:
        raise DiagnosticsError("factors are not positive along the segment")
    r = b[:, None] / lin
    s1 = r.sum(axis=0)
    s2 = (r * r).sum(axis=0)
    phi = np.prod(lin, axis=0) ** alpha
    return phi, alpha * phi * (alpha * s1 * s1 - s2)


@dataclass(frozen=True)
class SegmentSample:
    """One interior segment with the restricted field and its curvature.

    coeff_a[i] + coeff_b[i] * t is the i-th face value along the segment;
    the segment must keep every face strictly positive.
    """

    start: np.ndarray
    end: np.ndarray
    alpha: float
    coeff_a: np.ndarray
    coeff_b: np.ndarray
    t: np.ndarray
    values: np.ndarray
    second: np.ndarray

    def __post_init__(self):
        lin = self.coeff_a[:, None] + self.coeff_b[:, None] * self.t[None, :]
        if np.min(lin) <= 0.0:
            raise ValueError("segment leaves the region of positive faces")


def segment_restriction(P: Polytope, start, end, alpha: float,
                        nparams: int = 32) -> SegmentSample:
    """Restrict (prod l_i)^alpha to the segment [start, end]."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    a = P.face_values(np.array([start[0]]), np.array([start[1]]))[:, 0]
    fb = P.face_values(np.array([end[0]]), np.array([end[1]]))[:, 0]
    t = np.linspace(0.0, 1.0, nparams)
    values, second = factor_profile(a, fb - a, t, alpha)
    return SegmentSample(start=start, end=end, alpha=float(alpha),
                         coeff_a=a, coeff_b=fb - a, t=t,
                         values=values, second=second)


@dataclass(frozen=True)
class BarrierReport:
    """Extremes of the exact segment curvature over random segments."""

    alpha: float
    trials: int
    max_second: float
    worst: SegmentSample


def _interior_points(P: Polytope, count: int, rng) -> np.ndarray:
    verts = P.vertices
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    out = np.empty((count, 2))
    have = 0
    for _ in range(10000):
        batch = rng.uniform(lo, hi, size=(max(count, 256), 2))
        inside = np.min(P.face_values(batch[:, 0], batch[:, 1]), axis=0) > 0.0
        good = batch[inside]
        take = min(len(good), count - have)
        out[have:have + take] = good[:take]
        have += take
        if have == count:
            return out
    raise DiagnosticsError("segment generation failed: rejection sampling "
                           "stalled (degenerate polytope?)")


def barrier_concavity(P: Polytope, alpha: float, trials: int = 10000,
                      seed: int = 0, nparams: int = 32) -> BarrierReport:
    """Max of the exact 1D second derivative over random interior segments.

    Segment endpoints are uniform in P, pulled 1% toward their midpoint so
    every face stays strictly positive along the segment.
    """
    if not 0.0 < alpha < 1.0:
        raise DiagnosticsError(f"alpha must lie in (0, 1), got {alpha}")
    rng = np.random.default_rng(seed)
    pts = _interior_points(P, 2 * trials, rng)
    A = pts[:trials]
    B = pts[trials:]
    mid = 0.5 * (A + B)
    A = mid + 0.99 * (A - mid)
    B = mid + 0.99 * (B - mid)
    fa = P.face_values(A[:, 0], A[:, 1]).T
    fb = P.face_values(B[:, 0], B[:, 1]).T - fa
    t = np.linspace(0.0, 1.0, nparams)
    lin = fa[:, :, None] + fb[:, :, None] * t[None, None, :]
    r = fb[:, :, None] / lin
    s1 = r.sum(axis=1)
    s2 = (r * r).sum(axis=1)
    phi = np.prod(lin, axis=1) ** alpha
    second = alpha * phi * (alpha * s1 * s1 - s2)
    k = int(np.argmax(second.max(axis=1)))
    worst = segment_restriction(P, A[k], B[k], alpha, nparams=nparams)
    return BarrierReport(alpha=float(alpha), trials=trials,
                         max_second=float(second.max()), worst=worst)


@dataclass(frozen=True)
class HolderReport:
    """Sup of |u(x) - u(x0)| / |x - x0|^alpha over interior/boundary pairs."""

    alpha: float
    seminorm: float
    witness_interior: np.ndarray
    witness_boundary: np.ndarray


def holder_exponent(fn: DiscreteConvexFn,
                    alpha_test: Optional[float] = None) -> HolderReport:
    """Boundary Holder quotient of a discrete solution.

    Pairs every interior node with its nearest boundary node.  The default
    exponent is 0.39 on quadrilaterals and 0.9 * 2/(N+1) otherwise, just
    inside the guaranteed range.
    """
    ns = fn.nodes
    if alpha_test is None:
        N = ns.polytope.N
        alpha_test = 0.39 if N == 4 else 0.9 * 2.0 / (N + 1)
    ni = ns.n_interior
    bpts = ns.points[ni:]
    bvals = fn.values[ni:]
    ipts = ns.points[:ni]
    ivals = fn.values[:ni]
    dist, idx = cKDTree(bpts).query(ipts)
    quot = np.abs(ivals - bvals[idx]) / dist ** alpha_test
    k = int(np.argmax(quot))
    return HolderReport(alpha=float(alpha_test), seminorm=float(quot[k]),
                        witness_interior=ipts[k].copy(),
                        witness_boundary=bpts[idx[k]].copy())


@dataclass(frozen=True)
class EnvelopeReport:
    """Parabola-envelope containment and the y log y attainment rate.

    curvature bounds |g''|; the upper/lower envelopes are
    P+-(p) -+ log_slope * y log y +- rim_slope * y +- margin with P+- the
    tangent parabolas of g.  attain_rate is the smallest D with
    |u(p0, y) - g(p0)| <= D |y log y| down the probe columns.
    """

    contained: bool
    witness: Optional[Tuple[int, int]]
    curvature: float
    log_slope: float
    rim_slope: float
    margin: float
    attain_rate: float


def envelope_check(grid: PLTGrid, g: Callable[[np.ndarray], np.ndarray],
                   npoints: int = 16,
                   margin: Optional[float] = None) -> EnvelopeReport:
    """Trap a model solution between explicit super/sub envelopes.

    g is the bottom boundary data as a function of p.  Containment is
    checked node-wise on the full grid for tangent parabolas based at
    `npoints` boundary points; the rim slope is the smallest value that
    dominates the side and top rims.
    """
    p = grid.p
    y = grid.y
    U = grid.values
    gp = g(p)
    step = 1e-4 * max(1.0, float(p[-1] - p[0]))
    curv = np.abs(g(p + step) - 2.0 * gp + g(p - step)) / step**2
    A = float(curv.max())
    B = 2.0 * A
    scale = max(1.0, float(np.abs(U).max()), float(np.abs(gp).max()))
    delta = 1e-8 * scale if margin is None else float(margin)

    safe = np.where(y > 0.0, y, 1.0)
    ylog = y * np.log(safe)
    idx0 = np.unique(np.round(np.linspace(0, len(p) - 1, npoints)).astype(int))
    gslope = (g(p[idx0] + step) - g(p[idx0] - step)) / (2.0 * step)

    rim = np.zeros(U.shape, dtype=bool)
    rim[:, 0] = True
    rim[:, -1] = True
    rim[-1, :] = True
    contained = True
    witness = None
    worst_gap = 0.0
    rim_slope = 0.0
    for col, sl in zip(idx0, gslope):
        dp = p - p[col]
        par_up = gp[col] + sl * dp + 0.5 * A * dp**2
        par_dn = gp[col] + sl * dp - 0.5 * A * dp**2
        up = par_up[None, :] - B * ylog[:, None] + delta
        dn = par_dn[None, :] + B * ylog[:, None] - delta
        yrim = np.broadcast_to(y[:, None], U.shape)[rim]
        gap_up = (U - up)[rim]
        gap_dn = (dn - U)[rim]
        with np.errstate(divide="ignore", invalid="ignore"):
            cu = np.where(yrim > 0, gap_up / np.where(yrim > 0, yrim, 1.0), 0.0)
            cd = np.where(yrim > 0, gap_dn / np.where(yrim > 0, yrim, 1.0), 0.0)
        C = max(0.0, float(cu.max()), float(cd.max()))
        rim_slope = max(rim_slope, C)
        vup = up + C * y[:, None]
        vdn = dn - C * y[:, None]
        tol = 1e-12 * scale
        over = U - vup
        under = vdn - U
        bad = np.maximum(over, under)
        m = float(bad.max())
        if m > tol and m > worst_gap:
            contained = False
            worst_gap = m
            ij = np.unravel_index(int(np.argmax(bad)), bad.shape)
            witness = (int(ij[0]), int(ij[1]))

    half = y <= 0.5 * y[-1]
    meas = half & (np.abs(np.log(safe)) > 0.2) & (y > 0.0)
    D = 0.0
    if meas.any():
        dev = np.abs(U[meas][:, idx0] - gp[idx0][None, :])
        D = float((dev / np.abs(ylog[meas])[:, None]).max())
    return EnvelopeReport(contained=contained, witness=witness,
                          curvature=A, log_slope=B, rim_slope=rim_slope,
                          margin=delta, attain_rate=D)
