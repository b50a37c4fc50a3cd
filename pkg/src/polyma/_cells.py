"""Compiled kernels for cell clipping, masses, and sweep iterations.

All cells are convex polygons produced by Sutherland-Hodgman clipping with
per-edge source tracking: for a polygon (xs, ys) of m vertices, ss[k] is the
id of the constraint that generated the edge from vertex k to vertex k+1.
Sources >= 0 are node indices; -1 marks a clip-box edge (cell not yet proven
bounded); sources <= -2 mark fixed polygon faces (id = -2 - face_index).

Coordinates are shifted to the first vertex before the shoelace sum: the
near-boundary cells have areas down to ~1e-10 and the shift removes the
cancellation that would otherwise cap relative accuracy near 1e-6.
"""
import numpy as np
from numba import njit, prange

MAXV = 256   # clip buffer capacity
VCAP = 64    # stored vertices per finished cell


@njit(cache=True)
def _clip(xs, ys, ss, m, nx, ny, c, sid, txs, tys, tss):
    """Clip polygon with {nx*X + ny*Y <= c}; returns new count or -1 on overflow."""
    if m == 0:
        return 0
    k = 0
    for a in range(m):
        b = a + 1 if a + 1 < m else 0
        sa = nx * xs[a] + ny * ys[a] - c
        sb = nx * xs[b] + ny * ys[b] - c
        if sa <= 0.0:
            if k >= MAXV:
                return -1
            txs[k] = xs[a]
            tys[k] = ys[a]
            if sb <= 0.0:
                tss[k] = ss[a]
                k += 1
            else:
                tss[k] = ss[a]
                k += 1
                if k >= MAXV:
                    return -1
                den = sa - sb
                t = sa / den if den != 0.0 else 0.5
                txs[k] = xs[a] + t * (xs[b] - xs[a])
                tys[k] = ys[a] + t * (ys[b] - ys[a])
                tss[k] = sid
                k += 1
        elif sb <= 0.0:
            if k >= MAXV:
                return -1
            den = sa - sb
            t = sa / den if den != 0.0 else 0.5
            txs[k] = xs[a] + t * (xs[b] - xs[a])
            tys[k] = ys[a] + t * (ys[b] - ys[a])
            tss[k] = ss[a]
            k += 1
    for q in range(k):
        xs[q] = txs[q]
        ys[q] = tys[q]
        ss[q] = tss[q]
    return k


@njit(cache=True)
def _area(xs, ys, m):
    if m < 3:
        return 0.0
    x0 = xs[0]
    y0 = ys[0]
    s = 0.0
    for k in range(1, m - 1):
        ax = xs[k] - x0
        ay = ys[k] - y0
        bx = xs[k + 1] - x0
        by = ys[k + 1] - y0
        s += ax * by - ay * bx
    return 0.5 * s


@njit(cache=True)
def _box_bound(i, ui, X, V, cand, c0, c1):
    """Clip-box half-width adequate for the subdifferential cell of node i."""
    smax = 0.0
    for idx in range(c0, c1):
        j = cand[idx]
        if j == i:
            continue
        dx = X[j, 0] - X[i, 0]
        dy = X[j, 1] - X[i, 1]
        d = np.sqrt(dx * dx + dy * dy)
        if d > 0.0:
            sl = abs(V[j] - ui) / d
            if sl > smax:
                smax = sl
    return 16.0 + 4.0 * smax


@njit(cache=True)
def _cell_box(i, ui, X, V, cand, c0, c1, xs, ys, ss, txs, tys, tss):
    """Subdifferential cell of node i against candidates; box start with growth.

    Returns m >= 0 on success (m < 3 means empty cell), -1 on buffer overflow,
    -2 if the cell still touches the box after three growths (unbounded).
    """
    B = _box_bound(i, ui, X, V, cand, c0, c1)
    for attempt in range(4):
        xs[0] = -B
        ys[0] = -B
        xs[1] = B
        ys[1] = -B
        xs[2] = B
        ys[2] = B
        xs[3] = -B
        ys[3] = B
        ss[0] = -1
        ss[1] = -1
        ss[2] = -1
        ss[3] = -1
        m = 4
        for idx in range(c0, c1):
            j = cand[idx]
            if j == i:
                continue
            nx = X[j, 0] - X[i, 0]
            ny = X[j, 1] - X[i, 1]
            c = V[j] - ui
            m = _clip(xs, ys, ss, m, nx, ny, c, j, txs, tys, tss)
            if m == -1:
                return -1
            if m < 3:
                return m
        boxy = False
        for k in range(m):
            if ss[k] == -1:
                boxy = True
                break
        if not boxy:
            return m
        B *= 8.0
    return -2


@njit(cache=True)
def _cell_area_at(i, ui, X, V, cand, c0, c1, xs, ys, ss, txs, tys, tss):
    m = _cell_box(i, ui, X, V, cand, c0, c1, xs, ys, ss, txs, tys, tss)
    if m < 0:
        return float(m)
    return _area(xs, ys, m)


@njit(cache=True)
def _gs_sweep(X, V, ni, cand, ptr, tgt, sweep_tol, diam):
    """One Gauss-Seidel sweep: per interior node, bisect u_i to match its mass.

    Returns (max relative mass residual seen before adjustment was accepted,
    max |change|, error flag). flag: 0 ok, 1 overflow, 2 unbounded cell.
    """
    xs = np.empty(MAXV)
    ys = np.empty(MAXV)
    txs = np.empty(MAXV)
    tys = np.empty(MAXV)
    ss = np.empty(MAXV, dtype=np.int64)
    tss = np.empty(MAXV, dtype=np.int64)
    max_rel = 0.0
    max_chg = 0.0
    for i in range(ni):
        t = tgt[i]
        u0 = V[i]
        a0 = _cell_area_at(i, u0, X, V, cand, ptr[i], ptr[i + 1],
                           xs, ys, ss, txs, tys, tss)
        if a0 < 0.0:
            return max_rel, max_chg, 1 if a0 > -1.5 else 2
        rel = abs(a0 - t) / t
        if rel > max_rel:
            max_rel = rel
        if rel <= sweep_tol:
            continue
        # bracket the root: area is nonincreasing in u_i
        d = 1e-4 * diam
        if a0 > t:
            lo = u0
            hi = u0
            ahi = a0
            for _ in range(80):
                hi = hi + d
                d *= 2.0
                ahi = _cell_area_at(i, hi, X, V, cand, ptr[i], ptr[i + 1],
                                    xs, ys, ss, txs, tys, tss)
                if ahi < 0.0:
                    return max_rel, max_chg, 1 if ahi > -1.5 else 2
                if ahi <= t:
                    break
                lo = hi
        else:
            hi = u0
            lo = u0
            for _ in range(80):
                lo = lo - d
                d *= 2.0
                alo = _cell_area_at(i, lo, X, V, cand, ptr[i], ptr[i + 1],
                                    xs, ys, ss, txs, tys, tss)
                if alo < 0.0:
                    return max_rel, max_chg, 1 if alo > -1.5 else 2
                if alo >= t:
                    break
                hi = lo
        # bisect: invariant area(lo) >= t >= area(hi)
        root = u0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            am = _cell_area_at(i, mid, X, V, cand, ptr[i], ptr[i + 1],
                               xs, ys, ss, txs, tys, tss)
            if am < 0.0:
                return max_rel, max_chg, 1 if am > -1.5 else 2
            if abs(am - t) <= 0.25 * sweep_tol * t:
                root = mid
                break
            if am > t:
                lo = mid
            else:
                hi = mid
            root = 0.5 * (lo + hi)
        V[i] = root
        chg = abs(root - u0)
        if chg > max_chg:
            max_chg = chg
    return max_rel, max_chg, 0


@njit(cache=True, parallel=True)
def _cells_box_batch(X, V, ni, cand, ptr, areas, vx, vy, vs, vm, flags):
    """Cells of all interior nodes; stores vertices + edge sources per node."""
    for i in prange(ni):
        xs = np.empty(MAXV)
        ys = np.empty(MAXV)
        txs = np.empty(MAXV)
        tys = np.empty(MAXV)
        ss = np.empty(MAXV, dtype=np.int64)
        tss = np.empty(MAXV, dtype=np.int64)
        m = _cell_box(i, V[i], X, V, cand, ptr[i], ptr[i + 1],
                      xs, ys, ss, txs, tys, tss)
        if m < 0:
            flags[i] = m
            areas[i] = 0.0
            vm[i] = 0
            continue
        if m > VCAP:
            flags[i] = -1
            areas[i] = 0.0
            vm[i] = 0
            continue
        flags[i] = 0
        areas[i] = _area(xs, ys, m)
        vm[i] = m
        for k in range(m):
            vx[i, k] = xs[k]
            vy[i, k] = ys[k]
            vs[i, k] = ss[k]


@njit(cache=True, parallel=True)
def _areas_box_batch(X, V, ni, cand, ptr, areas):
    for i in prange(ni):
        xs = np.empty(MAXV)
        ys = np.empty(MAXV)
        txs = np.empty(MAXV)
        tys = np.empty(MAXV)
        ss = np.empty(MAXV, dtype=np.int64)
        tss = np.empty(MAXV, dtype=np.int64)
        areas[i] = _cell_area_at(i, V[i], X, V, cand, ptr[i], ptr[i + 1],
                                 xs, ys, ss, txs, tys, tss)


@njit(cache=True)
def _jac_from_cells(X, ni, vx, vy, vs, vm, jr, jc, jv, diag):
    """COO entries d(area_i)/d(u_j) = ell_ij/|x_i - x_j| from stored cells.

    diag[i] accumulates the total boundary-length weight (all sources, node
    or not); off-diagonal entries are emitted only for source nodes j < ni.
    Returns number of entries written.
    """
    n = 0
    for i in range(ni):
        m = vm[i]
        for k in range(m):
            j = vs[i, k]
            if j < 0:
                continue
            k2 = k + 1 if k + 1 < m else 0
            ex = vx[i, k2] - vx[i, k]
            ey = vy[i, k2] - vy[i, k]
            ell = np.sqrt(ex * ex + ey * ey)
            if ell == 0.0:
                continue
            dx = X[j, 0] - X[i, 0]
            dy = X[j, 1] - X[i, 1]
            d = np.sqrt(dx * dx + dy * dy)
            w = ell / d
            diag[i] += w
            if j < ni:
                jr[n] = i
                jc[n] = j
                jv[n] = w
                n += 1
    return n


@njit(cache=True, parallel=True)
def _verify_pairs(X, V, ni, chk, cptr, vx, vy, vm, tol, out_j, out_n):
    """Check stored cells against the constraint lists chk (CSR).

    A node j violates cell i when some cell vertex p has
    p.(x_j - x_i) > u_j - u_i + tol.  Up to out_j.shape[1] violators per node.
    """
    for i in prange(ni):
        cnt = 0
        m = vm[i]
        if m == 0:
            out_n[i] = 0
            continue
        for idx in range(cptr[i], cptr[i + 1]):
            j = chk[idx]
            if j == i:
                continue
            dx = X[j, 0] - X[i, 0]
            dy = X[j, 1] - X[i, 1]
            s = V[j] - V[i]
            bad = False
            for k in range(m):
                if vx[i, k] * dx + vy[i, k] * dy - s > tol:
                    bad = True
                    break
            if bad:
                if cnt < out_j.shape[1]:
                    out_j[i, cnt] = j
                cnt += 1
        out_n[i] = cnt


@njit(cache=True, parallel=True)
def _verify_all(X, V, ni, vx, vy, vm, tol, out_j, out_n):
    """Exact certification of stored cells against every node."""
    M = X.shape[0]
    for i in prange(ni):
        cnt = 0
        m = vm[i]
        if m == 0:
            out_n[i] = 0
            continue
        xi = X[i, 0]
        yi = X[i, 1]
        ui = V[i]
        for j in range(M):
            if j == i:
                continue
            dx = X[j, 0] - xi
            dy = X[j, 1] - yi
            s = V[j] - ui
            bad = False
            for k in range(m):
                if vx[i, k] * dx + vy[i, k] * dy - s > tol:
                    bad = True
                    break
            if bad:
                if cnt < out_j.shape[1]:
                    out_j[i, cnt] = j
                cnt += 1
        out_n[i] = cnt


@njit(cache=True, parallel=True)
def _cells_poly_batch(X, V, cand, ptr, pxs, pys, pm, areas, vx, vy, vm, flags):
    """Cells of every node, clipped from a fixed start polygon (Voronoi use)."""
    M = X.shape[0]
    for i in prange(M):
        xs = np.empty(MAXV)
        ys = np.empty(MAXV)
        txs = np.empty(MAXV)
        tys = np.empty(MAXV)
        ss = np.empty(MAXV, dtype=np.int64)
        tss = np.empty(MAXV, dtype=np.int64)
        for k in range(pm):
            xs[k] = pxs[k]
            ys[k] = pys[k]
            ss[k] = -2 - k
        m = pm
        ok = True
        for idx in range(ptr[i], ptr[i + 1]):
            j = cand[idx]
            if j == i:
                continue
            nx = X[j, 0] - X[i, 0]
            ny = X[j, 1] - X[i, 1]
            c = V[j] - V[i]
            m = _clip(xs, ys, ss, m, nx, ny, c, j, txs, tys, tss)
            if m == -1:
                ok = False
                break
        if not ok or m > VCAP:
            flags[i] = -1
            areas[i] = 0.0
            vm[i] = 0
            continue
        flags[i] = 0
        areas[i] = _area(xs, ys, m)
        vm[i] = m
        for k in range(m):
            vx[i, k] = xs[k]
            vy[i, k] = ys[k]
