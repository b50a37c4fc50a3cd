"""Boundary expansion of transformed solutions and the smooth remainder.

Near a degenerate edge the transformed potential expands as

    u*(p, y) = u0(p) + sum_i (1/i!) uhat_i(p) y^i log y
                     + sum_i (1/i!) u_i(p) y^i.

This module fits that expansion column by column, checks the coefficient
identities (uhat_1 = -u0'' / w with w the edge weight, all higher log
coefficients vanishing for compatible data), and verifies that removing
c y log y from a solution leaves a remainder with bounded derivatives.
"""

from dataclasses import dataclass
from math import factorial
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import Polytope
from .ma_solver import DiscreteConvexFn
from .legendre import PLTGrid

__all__ = [
    "ExpansionError",
    "ExpansionFit",
    "CoefficientReport",
    "SmoothPartReport",
    "fit_expansion",
    "verify_log_coefficients",
    "smooth_part",
    "edge_weight_field",
]


class ExpansionError(RuntimeError):
    """Raised when a fit or remainder check cannot be carried out."""


# ---------------------------------------------------------------------------
# least-squares fit


@dataclass(frozen=True)
class ExpansionFit:
    """Per-column expansion coefficients with the 1/i! normalization.

    uhat[i-1] holds uhat_i (the y^i log y coefficients), upoly[i-1] holds
    u_i; both are multiplied by i! relative to the raw regression
    coefficients.  residual is the per-column sup norm of the fit defect.
    """

    p: np.ndarray
    u0: np.ndarray
    uhat: np.ndarray
    upoly: np.ndarray
    residual: np.ndarray
    window: Tuple[float, float]
    order: int

    def to_rows(self) -> np.ndarray:
        """Columns (p, uhat1, u1, uhat2, u2, ..., residual)."""
        cols = [self.p]
        for i in range(self.order):
            cols.append(self.uhat[i])
            cols.append(self.upoly[i])
        cols.append(self.residual)
        return np.column_stack(cols)


def _design_matrix(ys: np.ndarray, order: int) -> np.ndarray:
    L = np.log(ys)
    cols = [np.ones_like(ys)]
    for i in range(1, order + 1):
        cols.append(ys**i * L)
        cols.append(ys**i)
    return np.column_stack(cols)


def fit_expansion(grid: PLTGrid, order: int = 3,
                  window: Optional[Tuple[float, float]] = None) -> ExpansionFit:
    """Fit the boundary expansion on y in [window[0], window[1]] per column.

    The default window is [2 * max row spacing, 0.1]: below that the rows
    cannot separate y from y log y, above it higher-order terms leak in.
    The boundary value u0 is extrapolated from the two lowest rows (which
    annihilates the y log y term) and refined by the fitted constant, since
    the extrapolant itself carries an O(y) bias from the linear term.
    """
    if order < 1 or order > 5:
        raise ExpansionError(f"order must be between 1 and 5, got {order}")
    y = grid.y
    if window is None:
        inside = np.diff(y)[y[1:] <= 0.1]
        spacing = float(inside.max()) if inside.size else float(np.diff(y).max())
        window = (2.0 * spacing, 0.1)
    ylo, yhi = float(window[0]), float(window[1])
    if not (0.0 < ylo < yhi):
        raise ExpansionError(f"bad fit window ({ylo:.3g}, {yhi:.3g})")
    sel = np.nonzero((y >= ylo) & (y <= yhi) & (y > 0.0))[0]
    if len(sel) < 4 * order:
        raise ExpansionError(
            f"only {len(sel)} rows inside the fit window, need at least "
            f"{4 * order}; widen the window or refine the grid")
    ys = y[sel]
    data = grid.values[sel]

    # two-row extrapolant for u*(p, 0): exact on u0 + c y log y
    y1, y2 = ys[0], ys[1]
    w1, w2 = y1 * np.log(y1), y2 * np.log(y2)
    u0 = (data[0] * w2 - data[1] * w1) / (w2 - w1)

    A = _design_matrix(ys, order)
    norms = np.linalg.norm(A, axis=0)
    Aeq = A / norms
    cond = np.linalg.cond(Aeq)
    if cond > 1e12:
        raise ExpansionError(
            f"normal equations ill-conditioned (cond {cond:.3e}); "
            f"widen the fit window or lower the order")
    coef_eq, _, _, _ = np.linalg.lstsq(Aeq, data - u0[None, :], rcond=None)
    raw = coef_eq / norms[:, None]
    defect = A @ raw - (data - u0[None, :])
    residual = np.abs(defect).max(axis=0)

    uhat = np.empty((order, len(grid.p)))
    upoly = np.empty((order, len(grid.p)))
    for i in range(1, order + 1):
        uhat[i - 1] = factorial(i) * raw[2 * i - 1]
        upoly[i - 1] = factorial(i) * raw[2 * i]
    return ExpansionFit(p=grid.p.copy(), u0=u0 + raw[0], uhat=uhat,
                        upoly=upoly, residual=residual,
                        window=(ylo, yhi), order=order)


# ---------------------------------------------------------------------------
# coefficient identities


def edge_weight_field(P: Polytope, h, edge: int) -> Callable:
    """Weight w = h * prod of the faces other than `edge`.

    Near that edge phi = h prod l factors as l_edge * w, and w is the
    coefficient the transformed equation divides by; the expansion
    identities are stated against it.
    """
    faces = P.faces

    def w(x, y):
        out = np.asarray(h(x, y), dtype=float) + np.zeros(np.broadcast(x, y).shape)
        for j, f in enumerate(faces):
            if j != edge:
                out = out * f.value(x, y)
        return out

    return w


@dataclass(frozen=True)
class CoefficientReport:
    """Sup deviations of the fitted log coefficients over the central half.

    uhat1_dev measures uhat_1 against -1 (the compatible normalization);
    identity_abs and identity_rel measure the raw relation
    uhat_1 = -u0''(p) / w(x(p), 0), which holds for any Dirichlet data.
    """

    uhat1_dev: float
    uhat2_sup: float
    uhat3_sup: float
    identity_abs: float
    identity_rel: float


def verify_log_coefficients(fit: ExpansionFit, weight) -> CoefficientReport:
    """Check uhat_1 = -u0''/w and the vanishing of higher log coefficients.

    weight is the edge weight field (see edge_weight_field), evaluated at
    (x(p), 0) with x(p) = u0'(p).  Sups are taken over the central half of
    the fitted p-range, away from the fold ends.
    """
    if fit.order < 3:
        raise ExpansionError("identity check needs a fit of order >= 3")
    n = len(fit.p)
    lo, hi = n // 4, n - n // 4
    if hi - lo < 3:
        raise ExpansionError("central half of the fit has too few columns")
    hp = np.diff(fit.p)
    hm, hq = hp[:-1], hp[1:]
    mid = fit.u0[1:-1]
    u0pp = 2.0 * (hm * (fit.u0[2:] - mid) + hq * (fit.u0[:-2] - mid)) \
        / (hm * hq * (hm + hq))
    u0p = (hm**2 * (fit.u0[2:] - mid) - hq**2 * (fit.u0[:-2] - mid)) \
        / (hm * hq * (hm + hq))
    ctr = slice(max(lo, 1) - 1, min(hi, n - 1) - 1)
    xs = u0p[ctr]
    wv = np.asarray(weight(xs, np.zeros_like(xs)), dtype=float)
    if np.any(wv <= 0.0):
        raise ExpansionError("edge weight not positive on the mapped window")
    pred = -u0pp[ctr] / wv
    got = fit.uhat[0][1:-1][ctr]
    dev = np.abs(got - pred)
    return CoefficientReport(
        uhat1_dev=float(np.abs(fit.uhat[0][lo:hi] + 1.0).max()),
        uhat2_sup=float(np.abs(fit.uhat[1][lo:hi]).max()),
        uhat3_sup=float(np.abs(fit.uhat[2][lo:hi]).max()),
        identity_abs=float(dev.max()),
        identity_rel=float((dev / np.maximum(np.abs(pred), 1e-12)).max()),
    )


# ---------------------------------------------------------------------------
# smooth remainder


@dataclass(frozen=True)
class SmoothPartReport:
    """Seminorms of f = u - c y log y on nested windows shrinking to the edge.

    Row m covers y <= y_hi / 2^m.  sup_fy and sup_fyy are sup norms of
    first and second y-differences of f; logy_ratio is the sup of the
    discrete u_y divided by |log y| at the row midpoints, the expected
    growth rate of the unsubtracted potential.
    """

    y_tops: np.ndarray
    sup_f: np.ndarray
    sup_fy: np.ndarray
    sup_fyy: np.ndarray
    logy_ratio: np.ndarray
    c: float


def smooth_part(fn: DiscreteConvexFn, c: float,
                window: Tuple[float, float, float] = (0.3, 0.7, 0.1),
                nests: int = 3) -> SmoothPartReport:
    """Sample f = u - c y log y near the bottom edge and difference it.

    window = (x0, x1, y_hi).  The window must stay away from the polytope's
    vertices; a window touching one is rejected, matching the hypothesis
    under which the smooth decomposition holds.
    """
    x0, x1, yhi = (float(v) for v in window)
    P = fn.nodes.polytope
    for k, v in enumerate(P.vertices):
        if x0 - 1e-12 <= v[0] <= x1 + 1e-12 and -1e-12 <= v[1] <= yhi + 1e-12:
            raise ExpansionError(
                f"window touches vertex {k} at ({v[0]:.6g}, {v[1]:.6g}); "
                f"the decomposition holds away from the vertices")
    xs = fn.nodes.xlines[(fn.nodes.xlines >= x0) & (fn.nodes.xlines <= x1)]
    ys = fn.nodes.ylines[(fn.nodes.ylines >= 0.0)
                         & (fn.nodes.ylines <= yhi)]
    if len(xs) < 3 or len(ys) < 6:
        raise ExpansionError("window captures too few grid lines")
    xx, yy = np.meshgrid(xs, ys)
    U = fn.evaluate(xx.ravel(), yy.ravel()).reshape(len(ys), len(xs))
    safe = np.where(ys > 0.0, ys, 1.0)
    F = U - c * (ys * np.log(safe))[:, None]

    y_tops = []
    sup_f = []
    sup_fy = []
    sup_fyy = []
    ratios = []
    for m in range(nests):
        top = yhi / 2**m
        rows = np.nonzero(ys <= top + 1e-15)[0]
        if len(rows) < 4:
            break
        ysn = ys[rows]
        Fn = F[rows]
        Un = U[rows]
        dy = np.diff(ysn)
        fy = (Fn[1:] - Fn[:-1]) / dy[:, None]
        hm = dy[:-1][:, None]
        hq = dy[1:][:, None]
        mid = Fn[1:-1]
        fyy = 2.0 * (hm * (Fn[2:] - mid) + hq * (Fn[:-2] - mid)) \
            / (hm * hq * (hm + hq))
        y_tops.append(top)
        sup_f.append(float(np.abs(Fn).max()))
        sup_fy.append(float(np.abs(fy).max()))
        sup_fyy.append(float(np.abs(fyy).max()))
        uy = np.abs((Un[1:] - Un[:-1]) / dy[:, None]).max(axis=1)
        ymid = 0.5 * (ysn[1:] + ysn[:-1])
        logs = np.abs(np.log(np.where(ymid > 0, ymid, 1.0)))
        ok = logs > 0.5
        ratios.append(float((uy[ok] / logs[ok]).max()) if ok.any() else 0.0)
    if not y_tops:
        raise ExpansionError("no nested window held enough rows")
    return SmoothPartReport(
        y_tops=np.array(y_tops), sup_f=np.array(sup_f),
        sup_fy=np.array(sup_fy), sup_fyy=np.array(sup_fyy),
        logy_ratio=np.array(ratios), c=float(c))
