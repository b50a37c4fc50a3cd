"""Partial Legendre transform near an edge and the degenerate model solver.

The tangential transform p = u_x, u*(p, y) = x u_x - u turns the
Monge-Ampere equation into the quasilinear equation u*_pp / phi + u*_yy = 0,
which degenerates where phi vanishes.  This module computes the transform of
discrete or closed-form convex data row by row, solves the regularized model
equation u_pp + Y_eps(y) a u_yy + b u_p + c u = f on a half-rectangle, and
measures the transformed-equation residual.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .ma_solver import DiscreteConvexFn, SolverError

__all__ = [
    "TransformError",
    "PLTGrid",
    "DegenerateProblem",
    "plt_forward",
    "model_solve",
    "pl_residual",
    "regularized_height",
]


class TransformError(RuntimeError):
    """Discrete data fails the row convexity the transform requires."""


# ---------------------------------------------------------------------------
# transformed-grid container


def _second_differences(values: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Nonuniform 3-point second differences along the last axis.

    Written against the centered value so the cancellation scale is the
    local increment, not the function magnitude.
    """
    hm = coords[1:-1] - coords[:-2]
    hp = coords[2:] - coords[1:-1]
    mid = values[..., 1:-1]
    num = hm * (values[..., 2:] - mid) + hp * (values[..., :-2] - mid)
    return 2.0 * num / (hm * hp * (hm + hp))


@dataclass(frozen=True)
class PLTGrid:
    """Tensor grid of transformed values u*(p, y) on [p0,p1] x [0,Y].

    values[j, i] holds u* at (p[i], y[j]).  provenance records whether the
    grid came from a transform of solution data or from the model solver.
    Convexity in p and concavity in y are not enforced here; the defect
    fields record the worst violation so callers can assert what their data
    promises (synthetic inputs legitimately break the y-concavity).
    """

    p: np.ndarray
    y: np.ndarray
    values: np.ndarray
    provenance: str = "transform"
    convexity_defect: float = field(init=False, default=0.0)
    concavity_defect: float = field(init=False, default=0.0)

    def __post_init__(self):
        p = np.ascontiguousarray(self.p, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float)
        vals = np.ascontiguousarray(self.values, dtype=float)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "values", vals)
        if vals.shape != (len(y), len(p)):
            raise ValueError(f"values shape {vals.shape} does not match "
                             f"(len(y), len(p)) = ({len(y)}, {len(p)})")
        if len(p) < 3 or len(y) < 2:
            raise ValueError("grid needs at least 3 p-nodes and 2 y-rows")
        if not (np.all(np.diff(p) > 0) and np.all(np.diff(y) > 0)):
            raise ValueError("p and y must be strictly increasing")
        if y[0] < -1e-14:
            raise ValueError("y must start at the edge, y >= 0")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite transformed values")
        # convex in p: second differences bounded below by a roundoff floor
        d2p = _second_differences(vals, p)
        object.__setattr__(self, "convexity_defect",
                           float(max(0.0, -d2p.min())) if d2p.size else 0.0)
        # concave in y on y > 0, skipping the edge row itself
        if len(y) >= 4:
            d2y = _second_differences(vals.T[:, 1:], y[1:])
            object.__setattr__(self, "concavity_defect",
                               float(max(0.0, d2y.max())) if d2y.size else 0.0)

    @property
    def shape(self):
        return self.values.shape

    def tangential_slope(self) -> np.ndarray:
        """u*_p at interior p-nodes by centered differences, per row."""
        hp = self.p[2:] - self.p[1:-1]
        hm = self.p[1:-1] - self.p[:-2]
        v = self.values
        mid = v[:, 1:-1]
        return (hm**2 * (v[:, 2:] - mid) - hp**2 * (v[:, :-2] - mid)) \
            / (hm * hp * (hm + hp))

    def to_rows(self):
        """(p, y, ustar) triples, one per node, row-major in y."""
        pp, yy = np.meshgrid(self.p, self.y)
        return np.column_stack([pp.ravel(), yy.ravel(), self.values.ravel()])


# ---------------------------------------------------------------------------
# forward transform


def _row_derivative(xs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """du/dx at the interior sample points, nonuniform 3-point centered."""
    hm = xs[1:-1] - xs[:-2]
    hp = xs[2:] - xs[1:-1]
    mid = u[1:-1]
    return (hm**2 * (u[2:] - mid) - hp**2 * (u[:-2] - mid)) \
        / (hm * hp * (hm + hp))


def _transform_rows(xs: np.ndarray, rows: np.ndarray, ys: np.ndarray,
                    provenance: str) -> PLTGrid:
    """Transform each fixed-y row of u(x, .) onto a shared uniform p-grid."""
    nrow = rows.shape[0]
    slopes = []
    duals = []
    for j in range(nrow):
        pj = _row_derivative(xs, rows[j])
        if np.any(np.diff(pj) <= 0.0):
            k = int(np.argmax(np.diff(pj) <= 0.0))
            raise TransformError(
                f"tangential derivative not strictly increasing on row "
                f"j={j} (y={ys[j]:.6g}) near sample {k + 1}")
        slopes.append(pj)
        duals.append(pj * xs[1:-1] - rows[j, 1:-1])
    lo = max(pj[0] for pj in slopes)
    hi = min(pj[-1] for pj in slopes)
    if hi <= lo:
        raise TransformError("slope ranges of the rows do not overlap")
    pad = 0.05 * (hi - lo)
    pgrid = np.linspace(lo + pad, hi - pad, len(xs))
    vals = np.empty((nrow, len(pgrid)))
    for j in range(nrow):
        # the dual pairs sit on tangent lines of u*, so the slope-truncation
        # error cancels to high order; a spline keeps the reconstruction
        # smooth enough that second differences of u* converge
        vals[j] = CubicSpline(slopes[j], duals[j])(pgrid)
    return PLTGrid(p=pgrid, y=ys, values=vals, provenance=provenance)


def plt_forward(u, window=None, nx: int = 129, ny: int = 33,
                ylines: Optional[Sequence[float]] = None) -> PLTGrid:
    """Partial Legendre transform u*(p, y) = x u_x - u, row by row in y.

    u may be a DiscreteConvexFn (sampled on its own graded lines inside the
    window), a callable u(x, y) (sampled on nx uniform columns and ny uniform
    rows, or on explicit ylines), or a PLTGrid (transformed again in its
    tangential variable; window is ignored).  The shared p-grid is the
    intersection of the per-row slope ranges shrunk 5 percent on each side,
    so no row is extrapolated near the fold.
    """
    if isinstance(u, PLTGrid):
        return _transform_rows(u.p, u.values, u.y, provenance="transform")
    if window is None:
        raise ValueError("window=(x0, x1, y0, y1) is required")
    x0, x1, y0, y1 = (float(v) for v in window)
    if not (x1 > x0 and y1 >= y0):
        raise ValueError("window must satisfy x1 > x0 and y1 >= y0")
    if isinstance(u, DiscreteConvexFn):
        ns = u.nodes
        xs = ns.xlines[(ns.xlines >= x0 - 1e-12) & (ns.xlines <= x1 + 1e-12)]
        ys = ns.ylines[(ns.ylines >= y0 - 1e-12) & (ns.ylines <= y1 + 1e-12)]
        if len(xs) < 5 or len(ys) < 2:
            raise TransformError("window captures too few grid lines")
        xx, yy = np.meshgrid(xs, ys)
        rows = u.evaluate(xx.ravel(), yy.ravel()).reshape(len(ys), len(xs))
        return _transform_rows(xs, rows, ys, provenance="transform")
    if callable(u):
        xs = np.linspace(x0, x1, int(nx))
        if ylines is not None:
            ys = np.sort(np.asarray(ylines, dtype=float))
        else:
            ys = np.linspace(y0, y1, int(ny))
        rows = np.empty((len(ys), len(xs)))
        for j, yv in enumerate(ys):
            rows[j] = u(xs, np.full_like(xs, yv))
        return _transform_rows(xs, rows, ys, provenance="transform")
    raise TypeError(f"cannot transform object of type {type(u).__name__}")


# ---------------------------------------------------------------------------
# degenerate model equation


def regularized_height(y: np.ndarray, eps: float) -> np.ndarray:
    """Y_eps(y): equals y above 2*eps, floors at eps below eps, and bridges
    with 2 eps^2/(3 eps - y) in between so that 1/Y_eps is continuous and
    piecewise linear."""
    y = np.asarray(y, dtype=float)
    out = np.where(y <= eps, eps, y)
    mid = (y > eps) & (y < 2.0 * eps)
    den = np.where(mid, 3.0 * eps - y, 1.0)
    out = np.where(mid, 2.0 * eps**2 / den, out)
    return out


def _coef_grid(c, pp, yy):
    if c is None:
        return None
    if np.isscalar(c):
        return None if float(c) == 0.0 else np.full(pp.shape, float(c))
    return np.asarray(c(pp, yy), dtype=float) + np.zeros(pp.shape)


@dataclass(frozen=True)
class DegenerateProblem:
    """Dirichlet problem u_pp + Y_eps(y) a u_yy + b u_p + c u = f on
    [p0,p1] x [0, height], with boundary data g on all four sides.

    a, b, c, f may be callables of (p, y) or constants; g must be callable.
    The y-grid is graded toward the degenerate edge, y_j = height (j/n)^sy.
    """

    g: Callable
    a: Union[Callable, float] = 1.0
    b: Union[Callable, float] = 0.0
    c: Union[Callable, float] = 0.0
    f: Union[Callable, float] = 0.0
    eps: float = 1e-4
    p0: float = -0.5
    p1: float = 0.5
    height: float = 0.5
    n: int = 128
    sy: float = 2.0

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not (self.p1 > self.p0 and self.height > 0.0):
            raise ValueError("degenerate domain is empty")
        if self.n < 8:
            raise ValueError(f"grid too coarse, n={self.n}")
        if not callable(self.g):
            raise ValueError("boundary data g must be callable")

    def grid(self):
        p = np.linspace(self.p0, self.p1, self.n)
        y = self.height * (np.arange(self.n) / (self.n - 1.0))**self.sy
        return p, y


def _assemble(p, y, yeps, A, B, C, F, U):
    """Sparse linear system for the interior nodes, Dirichlet everywhere.

    U carries the boundary values on its rim; interior entries are ignored.
    Row-major interior ordering, k = (j-1)*(np-2) + (i-1).  Off-diagonal
    weights stay nonnegative (drift is upwinded), so with c <= 0 the
    negated matrix is an M-matrix and the scheme is monotone.
    """
    npp = len(p)
    ny = len(y)
    hp = p[1] - p[0]
    ni = npp - 2
    nj = ny - 2
    hmv = (y[1:-1] - y[:-2])[:, None]
    hpv = (y[2:] - y[1:-1])[:, None]
    a = yeps[1:-1][:, None] * (A[1:-1, 1:-1] if A is not None
                               else np.ones((nj, ni)))
    wW = np.full((nj, ni), 1.0 / hp**2)
    wE = np.full((nj, ni), 1.0 / hp**2)
    wS = a * (2.0 / (hmv * (hmv + hpv)))
    wN = a * (2.0 / (hpv * (hmv + hpv)))
    diag = -(wW + wE + wS + wN)
    if B is not None:
        b = B[1:-1, 1:-1]
        wE = wE + np.where(b > 0.0, b, 0.0) / hp
        wW = wW + np.where(b < 0.0, -b, 0.0) / hp
        diag = diag - np.abs(b) / hp
    if C is not None:
        diag = diag + C[1:-1, 1:-1]
    rhs = np.array(F[1:-1, 1:-1]) if F is not None else np.zeros((nj, ni))
    K = np.arange(ni * nj).reshape(nj, ni)
    rows = [K.ravel()]
    cols = [K.ravel()]
    dat = [diag.ravel()]
    # neighbors on the Dirichlet rim move to the right-hand side
    rhs[:, 0] -= wW[:, 0] * U[1:-1, 0]
    rows.append(K[:, 1:].ravel())
    cols.append(K[:, :-1].ravel())
    dat.append(wW[:, 1:].ravel())
    rhs[:, -1] -= wE[:, -1] * U[1:-1, -1]
    rows.append(K[:, :-1].ravel())
    cols.append(K[:, 1:].ravel())
    dat.append(wE[:, :-1].ravel())
    rhs[0, :] -= wS[0, :] * U[0, 1:-1]
    rows.append(K[1:, :].ravel())
    cols.append(K[:-1, :].ravel())
    dat.append(wS[1:, :].ravel())
    rhs[-1, :] -= wN[-1, :] * U[-1, 1:-1]
    rows.append(K[:-1, :].ravel())
    cols.append(K[1:, :].ravel())
    dat.append(wN[:-1, :].ravel())
    mat = sp.csr_matrix((np.concatenate(dat),
                         (np.concatenate(rows), np.concatenate(cols))),
                        shape=(ni * nj, ni * nj))
    return mat, rhs.ravel()


def _linear_solve(mat, rhs, x0):
    """Solve to relative residual 1e-10 in diagonal-scaled units.

    The raw rows span many orders of magnitude on graded grids, so the
    residual is measured after dividing each row by its diagonal; that is
    the same scaling the Jacobi preconditioner applies.  BiCGstab runs
    first, sparse LU with iterative refinement is the fallback.
    """
    diag = mat.diagonal()
    if np.any(diag == 0.0):
        raise SolverError("zero diagonal in the assembled system")
    scale = 1.0 / np.abs(diag)
    bn = np.linalg.norm(scale * rhs)
    if bn == 0.0:
        return np.zeros_like(rhs)
    target = 1e-10 * bn

    def scaled_residual(v):
        return np.linalg.norm(scale * (mat @ v - rhs))

    M = spla.LinearOperator(mat.shape, matvec=lambda v: v / diag)
    x, info = spla.bicgstab(mat, rhs, x0=x0, M=M, rtol=1e-14,
                            atol=0.0, maxiter=400)
    if info == 0 and scaled_residual(x) <= target:
        return x
    lu = spla.splu(mat.tocsc())
    x = lu.solve(rhs)
    for _ in range(3):
        res = scaled_residual(x)
        if res <= target:
            return x
        x = x + lu.solve(rhs - mat @ x)
    res = scaled_residual(x)
    if not np.isfinite(res) or res > target:
        raise SolverError(f"linear solve stagnated, scaled residual "
                          f"{res:.3e} vs target {target:.3e}")
    return x


def model_solve(prob: DegenerateProblem) -> PLTGrid:
    """Solve the regularized model equation by epsilon continuation.

    Solves for eps_k = 1/8, 1/16, ... down to prob.eps, warm-starting each
    linear solve from the previous one.  The discretization is the 5-point
    second-order scheme with nonuniform second differences in y and upwind
    first differences for the drift term.
    """
    p, y = prob.grid()
    n2eps = int(np.sum(y <= 2.0 * prob.eps))
    if n2eps < 4:
        raise SolverError(
            f"grid too coarse for eps={prob.eps:.3e}: only {n2eps} rows "
            f"below 2*eps, need at least 4")
    pp, yy = np.meshgrid(p, y)
    A = _coef_grid(prob.a, pp, yy)
    if A is None and not (np.isscalar(prob.a) and float(prob.a) > 0.0):
        raise SolverError("coefficient a must be positive")
    if A is not None and np.any(A <= 0.0):
        j, i = np.unravel_index(int(np.argmin(A)), A.shape)
        raise SolverError(f"coefficient a <= 0 at (p, y) = "
                          f"({p[i]:.6g}, {y[j]:.6g})")
    if A is not None and np.isscalar(prob.a):
        A = None  # positive constant folds into yeps scaling below
    B = _coef_grid(prob.b, pp, yy)
    C = _coef_grid(prob.c, pp, yy)
    F = _coef_grid(prob.f, pp, yy)

    U = np.zeros((len(y), len(p)))
    U[0, :] = prob.g(p, np.full_like(p, y[0]))
    U[-1, :] = prob.g(p, np.full_like(p, y[-1]))
    U[:, 0] = prob.g(np.full_like(y, p[0]), y)
    U[:, -1] = prob.g(np.full_like(y, p[-1]), y)

    ascale = float(prob.a) if np.isscalar(prob.a) else 1.0
    eps_seq = []
    e = 1.0 / 8.0
    while e > prob.eps:
        eps_seq.append(e)
        e *= 0.5
    eps_seq.append(prob.eps)

    x = None
    for e in eps_seq:
        yeps = regularized_height(y, e) * ascale
        mat, rhs = _assemble(p, y, yeps, A, B, C, F, U)
        x = _linear_solve(mat, rhs, x)
    U[1:-1, 1:-1] = x.reshape(len(y) - 2, len(p) - 2)

    homogeneous = F is None and C is None
    if homogeneous:
        gmax = max(U[0].max(), U[-1].max(), U[:, 0].max(), U[:, -1].max())
        gmin = min(U[0].min(), U[-1].min(), U[:, 0].min(), U[:, -1].min())
        # monotone scheme: extrema sit on the rim up to linear-solve roundoff
        slack = 1e-10 * (gmax - gmin + abs(gmax) + 1.0)
        if U.max() > gmax + slack or U.min() < gmin - slack:
            raise SolverError(
                f"maximum principle violated: range [{U.min():.6g}, "
                f"{U.max():.6g}] vs data [{gmin:.6g}, {gmax:.6g}]")
    return PLTGrid(p=p, y=y, values=U, provenance="model")


# ---------------------------------------------------------------------------
# transformed-equation residual


def pl_residual(grid: PLTGrid, phi, y_min: Optional[float] = None) -> float:
    """Sup of |u*_pp / phi(u*_p, y) + u*_yy| over interior nodes with
    y >= y_min.

    phi is evaluated at the mapped point (x, y) = (u*_p, y).  The default
    cutoff y_min = 2 * max row spacing drops the rows where second
    differences of y log y terms are not resolvable.
    """
    if len(grid.p) < 5 or len(grid.y) < 5:
        raise ValueError("grid interior too small for the residual")
    if y_min is None:
        y_min = 2.0 * float(np.max(np.diff(grid.y)))
    d2p = _second_differences(grid.values, grid.p)          # (ny, np-2)
    d2y = _second_differences(grid.values.T, grid.y).T      # (ny-2, np)
    slope = grid.tangential_slope()                         # (ny, np-2)
    keep = np.nonzero(grid.y[1:-1] >= y_min)[0]
    if len(keep) == 0:
        raise ValueError(f"no interior rows above y_min={y_min:.3e}")
    worst = 0.0
    for j in keep:
        xr = slope[j + 1]
        yr = np.full_like(xr, grid.y[j + 1])
        ph = np.asarray(phi(xr, yr), dtype=float) + np.zeros(xr.shape)
        if np.any(ph <= 0.0):
            i = int(np.argmin(ph))
            raise SolverError(
                f"phi not positive at mapped point (x, y) = "
                f"({xr[i]:.6g}, {grid.y[j + 1]:.6g}) from node "
                f"(i, j) = ({i + 1}, {j + 1})")
        r = np.abs(d2p[j + 1] / ph + d2y[j, 1:-1])
        worst = max(worst, float(r.max()))
    return worst
