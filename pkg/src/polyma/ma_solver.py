"""Discrete solver for det D2u = 1/phi with Dirichlet trace data.

Nodes carry point masses c_i (their Voronoi cell areas inside P); the
discrete equation enforces phi(x_i) * area(subdifferential cell of x_i) = c_i
for every interior node.  The iteration combines Gauss-Seidel bisection
sweeps with Newton steps on the mass map (its Jacobian is the weighted graph
Laplacian of dual cell edges) and a coarse-to-fine continuation.

Cells are computed against candidate node sets and certified afterwards
against the full node set; any violated constraint augments the candidates
and the cells are rebuilt, so converged results are exact, not approximate.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve
from scipy.spatial import ConvexHull, QhullError, cKDTree

from ._cells import (MAXV, VCAP, _area, _areas_box_batch, _cell_box,
                     _cells_box_batch, _cells_poly_batch, _gs_sweep,
                     _jac_from_cells, _verify_all, _verify_pairs)
from .compat import check_h
from .edge_ode import BoundaryTrace
from .fields import ScalarField, phi_field
from .geometry import Polytope, edge_frame

__all__ = ["SolverError", "NodeSet", "DiscreteConvexFn", "MAProblem",
           "MassReport", "build_grid", "subgradient_cell", "subgradient_polygon",
           "op_solve", "ma_residual", "refine_boundary", "dump_nodes",
           "load_nodes", "grading_map"]


class SolverError(RuntimeError):
    """Grid construction or iteration failure."""


def grading_map(zeta, gamma: float):
    """Graded line placement on [0,1]: spacing ~ distance^(1-gamma) to either end.

    gamma = 1 is uniform; smaller gamma clusters lines toward both endpoints.
    """
    if not 0.0 < gamma <= 1.0:
        raise SolverError(f"grading exponent must be in (0, 1], got {gamma}")
    z = np.asarray(zeta, dtype=float)
    s = 1.0 / gamma
    lo = 0.5 * np.power(2.0 * np.minimum(z, 0.5), s)
    hi = 1.0 - 0.5 * np.power(2.0 * np.minimum(1.0 - z, 0.5), s)
    return np.where(z <= 0.5, lo, hi)


# ---------------------------------------------------------------------------
# node sets


@dataclass
class NodeSet:
    """Interior nodes (first) plus boundary nodes of a graded grid on P."""

    polytope: Polytope
    points: np.ndarray          # (M, 2)
    n_interior: int
    targets: np.ndarray         # (Ni,) Voronoi cell areas of interior nodes
    boundary_edge: np.ndarray   # (Nb,) edge index per boundary node
    boundary_t: np.ndarray      # (Nb,) parameter along the edge
    xlines: np.ndarray          # graded tensor line positions
    ylines: np.ndarray
    grid_index: np.ndarray      # (nx, ny) interior node id or -1
    interior_ij: np.ndarray     # (Ni, 2) tensor indices of interior nodes
    resolution: int
    gamma: float

    @property
    def n_boundary(self) -> int:
        return len(self.points) - self.n_interior

    @property
    def n_total(self) -> int:
        return len(self.points)

    def edge_params(self, i: int) -> np.ndarray:
        """Boundary parameters of edge i including both endpoints."""
        mask = self.boundary_edge == i
        t = np.sort(self.boundary_t[mask])
        L = edge_frame(self.polytope, i).length
        return np.concatenate([t, [L]])

    def boundary_points(self) -> np.ndarray:
        return self.points[self.n_interior:]


@dataclass
class DiscreteConvexFn:
    """Node values whose convex envelope is the discrete solution."""

    nodes: NodeSet
    values: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.nodes.n_total,):
            raise SolverError("value vector length does not match the node set")
        self._planes = None

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[:self.nodes.n_interior]

    @property
    def boundary_values(self) -> np.ndarray:
        return self.values[self.nodes.n_interior:]

    def _lower_planes(self) -> np.ndarray:
        if self._planes is not None:
            return self._planes
        pts3 = np.column_stack([self.nodes.points, self.values])
        try:
            hull = ConvexHull(pts3)
            eq = hull.equations
            low = eq[:, 2] < -1e-12
            if not np.any(low):
                raise QhullError("no lower facets")
            A = -eq[low, 0] / eq[low, 2]
            B = -eq[low, 1] / eq[low, 2]
            C = -eq[low, 3] / eq[low, 2]
            self._planes = np.column_stack([A, B, C])
        except QhullError:
            # degenerate cloud (values affine): least-squares plane is exact
            G = np.column_stack([self.nodes.points,
                                 np.ones(self.nodes.n_total)])
            coef, *_ = np.linalg.lstsq(G, self.values, rcond=None)
            self._planes = coef[None, :]
        return self._planes

    def evaluate(self, x, y):
        """Exact convex-envelope evaluation: max over lower hull facet planes."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        qx = (x + np.zeros(shape)).ravel()
        qy = (y + np.zeros(shape)).ravel()
        planes = self._lower_planes()
        out = np.full(qx.shape, -np.inf)
        qstep = 2048
        fstep = 8192
        for q0 in range(0, len(qx), qstep):
            q1 = min(q0 + qstep, len(qx))
            best = np.full(q1 - q0, -np.inf)
            for f0 in range(0, len(planes), fstep):
                f1 = min(f0 + fstep, len(planes))
                vals = (qx[q0:q1, None] * planes[f0:f1, 0]
                        + qy[q0:q1, None] * planes[f0:f1, 1]
                        + planes[f0:f1, 2])
                np.maximum(best, vals.max(axis=1), out=best)
            out[q0:q1] = best
        return out.reshape(shape) if shape else float(out[0])

    def envelope_defects(self) -> np.ndarray:
        """Per-node excess above the envelope; zero for nodes on the hull."""
        env = self.evaluate(self.nodes.points[:, 0], self.nodes.points[:, 1])
        return np.maximum(self.values - env, 0.0)


@dataclass
class MAProblem:
    """det D2u = 1/phi on P with trace data; phi = h * prod(l_i) in
    guillemin mode, phi = h itself in generic mode."""

    polytope: Polytope
    h: ScalarField
    alphas: np.ndarray | None = None
    mode: str = "guillemin"
    resolution: int = 32
    gamma: float = 0.5
    tol: float = 1e-6
    max_sweeps: int = 500
    scheme: str = "auto"
    compat_tol: float = 1e-8

    def __post_init__(self):
        mode = {"generic-dirichlet": "generic"}.get(self.mode, self.mode)
        if mode not in ("guillemin", "generic"):
            raise SolverError(f"unknown mode {self.mode!r}")
        self.mode = mode
        if self.scheme not in ("auto", "gs"):
            raise SolverError(f"unknown scheme {self.scheme!r}")
        N = self.polytope.N
        if self.alphas is None:
            self.alphas = np.zeros(N)
        self.alphas = np.asarray(self.alphas, dtype=float)
        if self.alphas.shape != (N,):
            raise SolverError(f"alpha: expected {N} values, got {self.alphas.size}")
        if self.mode == "guillemin":
            report = check_h(self.polytope, self.h, tol=self.compat_tol)
            if not report.passed:
                raise SolverError(
                    "h fails the vertex compatibility conditions "
                    f"(max deviation {report.max_deviation:.3e})")

    @property
    def phi(self) -> ScalarField:
        if self.mode == "guillemin":
            return phi_field(self.polytope, self.h)
        return self.h


@dataclass
class MassReport:
    """Per-node mass residuals of a discrete function."""

    max_rel: float
    mean_rel: float
    total_mass: float
    area: float
    total_gap: float
    per_node: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel))


# ---------------------------------------------------------------------------
# grid construction


def _csr_from_sets(sets) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(sets) + 1, dtype=np.int64)
    for i, s in enumerate(sets):
        ptr[i + 1] = ptr[i] + len(s)
    cat = (np.concatenate(sets) if len(sets) else np.empty(0)).astype(np.int64)
    return cat, ptr


def _voronoi_cells(P: Polytope, points: np.ndarray, max_rounds: int = 8):
    """Exact Voronoi cell areas of all nodes, clipped to P.

    Subdifferential cells of u = |x|^2/2 with start polygon P are the Voronoi
    cells; correctness is certified with nearest-node queries on the cell
    vertices and violated cells are rebuilt with augmented candidates.
    """
    M = len(points)
    X = np.ascontiguousarray(points, dtype=float)
    V = 0.5 * (X[:, 0] ** 2 + X[:, 1] ** 2)
    tree = cKDTree(X)
    k = min(48, M - 1)
    _, nbr = tree.query(X, k=k + 1)
    sets = [np.setdiff1d(row, [i]) for i, row in enumerate(nbr)]
    pxs = np.ascontiguousarray(P.vertices[:, 0])
    pys = np.ascontiguousarray(P.vertices[:, 1])
    pm = P.N
    tol = 1e-9 * P.diameter
    areas = np.empty(M)
    vx = np.empty((M, VCAP))
    vy = np.empty((M, VCAP))
    vm = np.zeros(M, dtype=np.int64)
    flags = np.zeros(M, dtype=np.int64)
    for _ in range(max_rounds):
        cand, ptr = _csr_from_sets(sets)
        _cells_poly_batch(X, V, cand, ptr, pxs, pys, pm, areas, vx, vy, vm, flags)
        if np.any(flags != 0):
            raise SolverError("cell clipping overflow in the Voronoi pass")
        counts = vm
        total = int(counts.sum())
        owner = np.repeat(np.arange(M), counts)
        vpts = np.empty((total, 2))
        pos = 0
        for i in range(M):
            m = vm[i]
            vpts[pos:pos + m, 0] = vx[i, :m]
            vpts[pos:pos + m, 1] = vy[i, :m]
            pos += m
        dd, jj = tree.query(vpts)
        down = np.linalg.norm(vpts - X[owner], axis=1)
        bad = dd < down - tol
        if not np.any(bad):
            return areas, vx, vy, vm
        for i, j in zip(owner[bad], jj[bad]):
            if j != i:
                sets[i] = np.union1d(sets[i], [j])
    raise SolverError("Voronoi cell certification did not stabilize")


def build_grid(problem: MAProblem) -> NodeSet:
    """Graded tensor interior nodes plus per-edge boundary nodes, with exact
    Voronoi cell areas as the point masses."""
    P = problem.polytope
    R = problem.resolution
    if R < 8:
        raise SolverError(f"resolution must be at least 8, got {R}")
    gamma = problem.gamma
    x0, x1, y0, y1 = P.bbox
    zeta = np.arange(1, R) / R
    xi = grading_map(zeta, gamma)
    xlines = x0 + (x1 - x0) * xi
    ylines = y0 + (y1 - y0) * xi
    XX, YY = np.meshgrid(xlines, ylines, indexing="ij")
    inside = P.min_face_value(XX, YY) > 1e-12 * P.diameter
    ni = int(inside.sum())
    if ni == 0:
        raise SolverError("resolution too small to place any interior node")
    grid_index = np.full((R - 1, R - 1), -1, dtype=np.int64)
    iij = np.argwhere(inside)
    grid_index[iij[:, 0], iij[:, 1]] = np.arange(ni)
    interior = np.column_stack([XX[inside], YY[inside]])

    lengths = [edge_frame(P, i).length for i in range(P.N)]
    Lmax = max(lengths)
    bpts = []
    bedge = []
    bt = []
    for i in range(P.N):
        fr = edge_frame(P, i)
        n_i = max(8, int(round(R * lengths[i] / Lmax)))
        t = lengths[i] * grading_map(np.arange(n_i) / n_i, gamma)
        px, py = fr.point(t)
        bpts.append(np.column_stack([px, py]))
        bedge.append(np.full(n_i, i, dtype=np.int64))
        bt.append(t)
    boundary = np.vstack(bpts)
    points = np.vstack([interior, boundary])

    areas, _, _, _ = _voronoi_cells(P, points)
    gap = abs(areas.sum() - P.area)
    if gap > 1e-10 * max(P.area, 1.0):
        raise SolverError(f"cell areas do not tile P (gap {gap:.3e})")
    targets = areas[:ni].copy()
    if np.any(targets <= 0):
        raise SolverError("degenerate interior cell with nonpositive area")
    return NodeSet(polytope=P, points=points, n_interior=ni, targets=targets,
                   boundary_edge=np.concatenate(bedge),
                   boundary_t=np.concatenate(bt), xlines=xlines, ylines=ylines,
                   grid_index=grid_index, interior_ij=iij, resolution=R,
                   gamma=gamma)


def refine_boundary(nodes: NodeSet) -> NodeSet:
    """Insert parameter midpoints on every edge's boundary nodes.

    Interior nodes and their point masses are unchanged: refinement sharpens
    only the piecewise representation of the boundary data.  Each insertion
    can only lower the convex envelope of the data, so solutions on the
    refined sets decrease node-wise at the shared interior nodes.
    """
    P = nodes.polytope
    ni = nodes.n_interior
    bpts = []
    bedge = []
    bt = []
    for i in range(P.N):
        fr = edge_frame(P, i)
        t = nodes.edge_params(i)
        mids = 0.5 * (t[:-1] + t[1:])
        tt = np.sort(np.concatenate([t[:-1], mids]))
        px, py = fr.point(tt)
        bpts.append(np.column_stack([px, py]))
        bedge.append(np.full(len(tt), i, dtype=np.int64))
        bt.append(tt)
    boundary = np.vstack(bpts)
    points = np.vstack([nodes.points[:ni], boundary])
    return NodeSet(polytope=P, points=points, n_interior=ni,
                   targets=nodes.targets.copy(),
                   boundary_edge=np.concatenate(bedge),
                   boundary_t=np.concatenate(bt), xlines=nodes.xlines,
                   ylines=nodes.ylines, grid_index=nodes.grid_index,
                   interior_ij=nodes.interior_ij, resolution=nodes.resolution,
                   gamma=nodes.gamma)


# ---------------------------------------------------------------------------
# subdifferential cells


def subgradient_polygon(points, values, i: int):
    """Subdifferential polygon {p : p.(x_j - x_i) <= u_j - u_i} and its area."""
    X = np.ascontiguousarray(points, dtype=float)
    V = np.ascontiguousarray(values, dtype=float)
    cand = np.arange(len(X), dtype=np.int64)
    xs = np.empty(MAXV)
    ys = np.empty(MAXV)
    txs = np.empty(MAXV)
    tys = np.empty(MAXV)
    ss = np.empty(MAXV, dtype=np.int64)
    tss = np.empty(MAXV, dtype=np.int64)
    m = _cell_box(i, V[i], X, V, cand, 0, len(cand), xs, ys, ss, txs, tys, tss)
    if m == -1:
        raise SolverError("cell clipping overflow")
    if m == -2:
        raise SolverError(
            "unbounded subdifferential cell: node is not surrounded "
            "(internal error for interior nodes)")
    if m < 3:
        return np.empty((0, 2)), 0.0
    poly = np.column_stack([xs[:m], ys[:m]])
    return poly, float(_area(xs, ys, m))


def subgradient_cell(fn: DiscreteConvexFn, i: int):
    """Cell of interior node i against the full node set of fn."""
    if not 0 <= i < fn.nodes.n_interior:
        raise SolverError(f"index {i} is not an interior node")
    return subgradient_polygon(fn.nodes.points, fn.values, i)


# ---------------------------------------------------------------------------
# candidate management


class _Candidates:
    """Per-interior-node candidate sets with persistent augmentation."""

    def __init__(self, nodes: NodeSet):
        X = nodes.points
        ni = nodes.n_interior
        M = len(X)
        tree = cKDTree(X)
        k = min(48, M - 1)
        _, nbr = tree.query(X[:ni], k=k + 1)
        # sparse global ring of boundary nodes: bounds every cell
        nb = M - ni
        stride = max(1, nb // 16)
        ring = ni + np.arange(0, nb, stride)
        gi = nodes.grid_index
        nx, ny = gi.shape
        sets = []
        for i in range(ni):
            ix, iy = nodes.interior_ij[i]
            lo_x, hi_x = max(0, ix - 2), min(nx, ix + 3)
            lo_y, hi_y = max(0, iy - 2), min(ny, iy + 3)
            block = gi[lo_x:hi_x, lo_y:hi_y].ravel()
            block = block[block >= 0]
            s = np.union1d(np.union1d(block, nbr[i]), ring)
            sets.append(s[s != i].astype(np.int64))
        self.sets = sets
        self.dirty = True
        self._csr = None

    def csr(self):
        if self.dirty:
            self._csr = _csr_from_sets(self.sets)
            self.dirty = False
        return self._csr

    def augment(self, i: int, js) -> None:
        s = np.union1d(self.sets[i], js)
        if len(s) != len(self.sets[i]):
            self.sets[i] = s.astype(np.int64)
            self.dirty = True


def _fast_check_csr(nodes: NodeSet) -> tuple[np.ndarray, np.ndarray]:
    """Constraint lists for the cheap verification: 96 nearest nodes plus all
    boundary nodes."""
    X = nodes.points
    ni = nodes.n_interior
    M = len(X)
    tree = cKDTree(X)
    k = min(96, M - 1)
    _, nbr = tree.query(X[:ni], k=k + 1)
    bnd = np.arange(ni, M, dtype=np.int64)
    sets = [np.union1d(nbr[i], bnd).astype(np.int64) for i in range(ni)]
    return _csr_from_sets(sets)


# ---------------------------------------------------------------------------
# solve


def _check_traces(P: Polytope, traces) -> None:
    if len(traces) != P.N:
        raise SolverError(f"expected {P.N} traces, got {len(traces)}")
    scale = max(1.0, max(abs(float(tr.eval(0.0))) for tr in traces))
    for i, tr in enumerate(traces):
        L = tr.length
        t = np.linspace(1e-6 * L, L * (1 - 1e-6), 201)
        if tr.c0 < -1e-12 or tr.cL < -1e-12 or np.min(tr.eval(t, order=2)) < -1e-9 * scale:
            raise SolverError(f"trace on edge {i} is not convex")
    for i, tr in enumerate(traces):
        nxt = traces[(i + 1) % P.N]
        if abs(tr.eval(tr.length) - nxt.eval(0.0)) > 1e-8 * scale:
            raise SolverError(f"trace mismatch at vertex {(i + 1) % P.N}")


def _boundary_values(nodes: NodeSet, traces) -> np.ndarray:
    vals = np.empty(nodes.n_boundary)
    for i in range(nodes.polytope.N):
        mask = nodes.boundary_edge == i
        vals[mask] = traces[i].eval(nodes.boundary_t[mask])
    return vals


def _envelope_of_boundary(nodes: NodeSet, bvals: np.ndarray) -> np.ndarray:
    """Convex envelope of the boundary data evaluated at the interior nodes."""
    bp = nodes.boundary_points()
    pts3 = np.column_stack([bp, bvals])
    qx = nodes.points[:nodes.n_interior, 0]
    qy = nodes.points[:nodes.n_interior, 1]
    try:
        hull = ConvexHull(pts3)
        eq = hull.equations
        low = eq[:, 2] < -1e-12
        if not np.any(low):
            raise QhullError("no lower facets")
        A = -eq[low, 0] / eq[low, 2]
        B = -eq[low, 1] / eq[low, 2]
        C = -eq[low, 3] / eq[low, 2]
        return np.max(qx[:, None] * A + qy[:, None] * B + C, axis=1)
    except QhullError:
        G = np.column_stack([bp, np.ones(len(bp))])
        coef, *_ = np.linalg.lstsq(G, bvals, rcond=None)
        return qx * coef[0] + qy * coef[1] + coef[2]


def _masses_with_verify(X, V, ni, cands: _Candidates, chk, cptr, tol_v,
                        areas, vx, vy, vs, vm, flags, full: bool = False):
    """Cell batch plus verification; augments candidates and rebuilds until
    no violated constraint remains.  Returns True if any augmentation ran."""
    augmented = False
    for _ in range(10):
        cand, ptr = cands.csr()
        _cells_box_batch(X, V, ni, cand, ptr, areas, vx, vy, vs, vm, flags)
        if np.any(flags == -1):
            raise SolverError("cell clipping overflow")
        if np.any(flags == -2):
            raise SolverError("unbounded interior cell (internal error)")
        out_j = np.zeros((ni, 8), dtype=np.int64)
        out_n = np.zeros(ni, dtype=np.int64)
        if full:
            _verify_all(X, V, ni, vx, vy, vm, tol_v, out_j, out_n)
        else:
            _verify_pairs(X, V, ni, chk, cptr, vx, vy, vm, tol_v, out_j, out_n)
        bad = np.nonzero(out_n)[0]
        if len(bad) == 0:
            return augmented
        augmented = True
        for i in bad:
            cnt = min(int(out_n[i]), 8)
            cands.augment(int(i), out_j[i, :cnt])
    raise SolverError("cell verification did not stabilize")


def _solve_on_nodes(problem: MAProblem, nodes: NodeSet, traces,
                    u0_interior=None, init_scale: float = 1.0) -> DiscreteConvexFn:
    P = problem.polytope
    ni = nodes.n_interior
    X = np.ascontiguousarray(nodes.points, dtype=float)
    diam = P.diameter
    tol = problem.tol

    phi = problem.phi
    phiv = phi(X[:ni, 0], X[:ni, 1])
    if np.any(phiv <= 0):
        raise SolverError("phi is not positive at all interior nodes")
    tgt = nodes.targets / phiv

    bvals = _boundary_values(nodes, traces)
    V = np.empty(nodes.n_total)
    V[ni:] = bvals

    cands = _Candidates(nodes)
    chk, cptr = _fast_check_csr(nodes)
    scale_u = max(1.0, np.max(np.abs(bvals)))
    tol_v = 1e-10 * scale_u

    areas = np.empty(ni)
    vx = np.empty((ni, VCAP))
    vy = np.empty((ni, VCAP))
    vs = np.zeros((ni, VCAP), dtype=np.int64)
    vm = np.zeros(ni, dtype=np.int64)
    flags = np.zeros(ni, dtype=np.int64)

    if u0_interior is not None:
        V[:ni] = u0_interior
    else:
        env = _envelope_of_boundary(nodes, bvals)
        bump = np.prod(P.face_values(X[:ni, 0], X[:ni, 1]),
                       axis=0) ** (1.0 / (P.N + 1))
        A = init_scale * (np.max(bvals) - np.min(bvals) + 1.0)
        for _ in range(30):
            V[:ni] = env - A * bump
            cand, ptr = cands.csr()
            _areas_box_batch(X, V, ni, cand, ptr, areas)
            if np.all(areas >= tgt * (1 - 1e-9)):
                break
            A *= 2.0

    history = []
    newton = problem.scheme == "auto"

    def _iterate():
        res = np.inf
        last_chg = np.inf
        converged = False
        for outer in range(problem.max_sweeps):
            # Newton steps on the mass map; Jacobian is the dual-edge Laplacian
            if newton:
                for _ in range(30):
                    _masses_with_verify(X, V, ni, cands, chk, cptr, tol_v,
                                        areas, vx, vy, vs, vm, flags)
                    res = float(np.max(np.abs(areas - tgt) / tgt))
                    history.append(res)
                    if res <= tol and last_chg <= tol * diam:
                        converged = True
                        break
                    if np.any(areas <= 0):
                        break  # zero-mass node: Jacobian row empty, sweep first
                    cap = cands.csr()[1][-1]
                    jr = np.empty(cap, dtype=np.int64)
                    jc = np.empty(cap, dtype=np.int64)
                    jv = np.empty(cap)
                    diag = np.zeros(ni)
                    nnz = _jac_from_cells(X, ni, vx, vy, vs, vm, jr, jc, jv, diag)
                    if np.any(diag <= 0):
                        break
                    Wo = coo_matrix((jv[:nnz], (jr[:nnz], jc[:nnz])), shape=(ni, ni))
                    Jm = (coo_matrix((diag, (np.arange(ni), np.arange(ni)))) - Wo).tocsr()
                    Jm = 0.5 * (Jm + Jm.T)
                    delta = spsolve(Jm, areas - tgt)
                    if not np.all(np.isfinite(delta)):
                        break
                    trial = np.empty_like(V)
                    trial[ni:] = V[ni:]
                    accepted = False
                    lam = 1.0
                    for _ in range(6):
                        trial[:ni] = V[:ni] + lam * delta
                        cand, ptr = cands.csr()
                        _areas_box_batch(X, trial, ni, cand, ptr, areas)
                        if np.all(areas >= 0):
                            res2 = float(np.max(np.abs(areas - tgt) / tgt))
                            if res2 < res:
                                V[:ni] = trial[:ni]
                                last_chg = lam * float(np.max(np.abs(delta)))
                                accepted = True
                                break
                        lam *= 0.5
                    if not accepted:
                        break
                if converged:
                    break
            sweep_tol = max(0.25 * tol, min(1e-2, 0.1 * res))
            cand, ptr = cands.csr()
            res_s, chg, flag = _gs_sweep(X, V, ni, cand, ptr, tgt, sweep_tol, diam)
            if flag == 1:
                raise SolverError("cell clipping overflow during sweep")
            if flag == 2:
                raise SolverError("unbounded interior cell (internal error)")
            last_chg = chg
            _masses_with_verify(X, V, ni, cands, chk, cptr, tol_v,
                                areas, vx, vy, vs, vm, flags)
            res = float(np.max(np.abs(areas - tgt) / tgt))
            history.append(res)
            if res <= tol and last_chg <= tol * diam:
                converged = True
                break
        if not converged:
            raise SolverError(
                f"no convergence within {problem.max_sweeps} sweeps; residual "
                f"history tail {['%.3e' % r for r in history[-6:]]}")

    # Converge on the pruned candidate sets, then certify against the full
    # node set.  A failed certification augments the candidate sets with the
    # offending nodes, so the next pass converges on corrected cells; pruning
    # stays a speed-up, never a source of wrong answers.
    certified = False
    res = np.inf
    for attempt in range(6):
        _iterate()
        clean = False
        for _ in range(3):
            augmented = _masses_with_verify(X, V, ni, cands, chk, cptr, tol_v,
                                            areas, vx, vy, vs, vm, flags,
                                            full=True)
            res = float(np.max(np.abs(areas - tgt) / tgt))
            if not augmented and res <= tol:
                clean = True
                break
            if res > tol:
                cand, ptr = cands.csr()
                _gs_sweep(X, V, ni, cand, ptr, tgt, 0.25 * tol, diam)
        if clean:
            certified = True
            break
    if not certified:
        raise SolverError("full certification failed to converge")

    fn = DiscreteConvexFn(nodes=nodes, values=V,
                          meta={"residual": res, "history": history,
                                "scheme": problem.scheme, "certified": True})
    return fn


def op_solve(problem: MAProblem, traces, nodes: NodeSet | None = None,
             init_scale: float = 1.0) -> DiscreteConvexFn:
    """Solve the discrete equation phi(x_i) * cell_area_i = c_i.

    Coarse-to-fine continuation halves the resolution down to 16 and
    prolongs each coarse solution through its convex envelope.
    """
    _check_traces(problem.polytope, traces)
    if nodes is not None:
        return _solve_on_nodes(problem, nodes, traces, init_scale=init_scale)
    chain = [problem.resolution]
    if problem.scheme == "auto":
        while chain[-1] >= 32 and chain[-1] % 2 == 0:
            chain.append(chain[-1] // 2)
    chain.reverse()
    fn = None
    for r in chain:
        prob_r = dataclasses.replace(problem, resolution=r)
        ns = build_grid(prob_r)
        if fn is None:
            fn = _solve_on_nodes(prob_r, ns, traces, init_scale=init_scale)
        else:
            u0 = fn.evaluate(ns.points[:ns.n_interior, 0],
                             ns.points[:ns.n_interior, 1])
            fn = _solve_on_nodes(prob_r, ns, traces, u0_interior=u0)
    return fn


def ma_residual(fn: DiscreteConvexFn, problem: MAProblem) -> MassReport:
    """Mass residuals |phi*omega - c|/c of fn, with exact (certified) cells."""
    nodes = fn.nodes
    ni = nodes.n_interior
    X = np.ascontiguousarray(nodes.points, dtype=float)
    V = np.ascontiguousarray(fn.values, dtype=float)
    phi = problem.phi
    phiv = phi(X[:ni, 0], X[:ni, 1])
    if np.any(phiv <= 0):
        raise SolverError("phi is not positive at all interior nodes")
    cands = _Candidates(nodes)
    chk, cptr = _fast_check_csr(nodes)
    areas = np.empty(ni)
    vx = np.empty((ni, VCAP))
    vy = np.empty((ni, VCAP))
    vs = np.zeros((ni, VCAP), dtype=np.int64)
    vm = np.zeros(ni, dtype=np.int64)
    flags = np.zeros(ni, dtype=np.int64)
    scale_u = max(1.0, float(np.max(np.abs(V))))
    _masses_with_verify(X, V, ni, cands, chk, cptr, 1e-10 * scale_u,
                        areas, vx, vy, vs, vm, flags, full=True)
    mass = phiv * areas
    per = np.abs(mass - nodes.targets) / nodes.targets
    total = float(mass.sum())
    area = problem.polytope.area
    return MassReport(max_rel=float(per.max()), mean_rel=float(per.mean()),
                      total_mass=total, area=area,
                      total_gap=abs(total - area) / area, per_node=per)


# ---------------------------------------------------------------------------
# text dump


def dump_nodes(fn: DiscreteConvexFn, path: str) -> None:
    """Structured text dump of the node set and values (binary-free)."""
    ns = fn.nodes
    P = ns.polytope
    ni = ns.n_interior
    f = lambda v: "%.17g" % v
    lines = ["polyma-nodes 1",
             f"resolution {ns.resolution}",
             f"gamma {f(ns.gamma)}",
             f"faces {P.N}"]
    for hp in P.faces:
        lines.append(" ".join(f(v) for v in (*hp.normal, hp.offset)))
    lines.append("xlines " + " ".join(f(v) for v in ns.xlines))
    lines.append("ylines " + " ".join(f(v) for v in ns.ylines))
    lines.append(f"interior {ni}")
    for i in range(ni):
        ix, iy = ns.interior_ij[i]
        lines.append(" ".join([str(ix), str(iy), f(ns.points[i, 0]),
                               f(ns.points[i, 1]), f(ns.targets[i]),
                               f(fn.values[i])]))
    lines.append(f"boundary {ns.n_boundary}")
    for k in range(ns.n_boundary):
        i = ni + k
        lines.append(" ".join([str(ns.boundary_edge[k]), f(ns.boundary_t[k]),
                               f(ns.points[i, 0]), f(ns.points[i, 1]),
                               f(fn.values[i])]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_nodes(path: str) -> DiscreteConvexFn:
    from .geometry import build_polytope
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "polyma-nodes 1":
        raise SolverError(f"{path} is not a node dump")
    pos = 1

    def take():
        nonlocal pos
        line = lines[pos]
        pos += 1
        return line

    R = int(take().split()[1])
    gamma = float(take().split()[1])
    nf = int(take().split()[1])
    rows = [tuple(float(v) for v in take().split()) for _ in range(nf)]
    P = build_polytope(rows)
    xlines = np.array([float(v) for v in take().split()[1:]])
    ylines = np.array([float(v) for v in take().split()[1:]])
    ni = int(take().split()[1])
    iij = np.empty((ni, 2), dtype=np.int64)
    pts_i = np.empty((ni, 2))
    targets = np.empty(ni)
    vals_i = np.empty(ni)
    for i in range(ni):
        parts = take().split()
        iij[i] = int(parts[0]), int(parts[1])
        pts_i[i] = float(parts[2]), float(parts[3])
        targets[i] = float(parts[4])
        vals_i[i] = float(parts[5])
    nb = int(take().split()[1])
    bedge = np.empty(nb, dtype=np.int64)
    btt = np.empty(nb)
    pts_b = np.empty((nb, 2))
    vals_b = np.empty(nb)
    for k in range(nb):
        parts = take().split()
        bedge[k] = int(parts[0])
        btt[k] = float(parts[1])
        pts_b[k] = float(parts[2]), float(parts[3])
        vals_b[k] = float(parts[4])
    grid_index = np.full((len(xlines), len(ylines)), -1, dtype=np.int64)
    grid_index[iij[:, 0], iij[:, 1]] = np.arange(ni)
    ns = NodeSet(polytope=P, points=np.vstack([pts_i, pts_b]), n_interior=ni,
                 targets=targets, boundary_edge=bedge, boundary_t=btt,
                 xlines=xlines, ylines=ylines, grid_index=grid_index,
                 interior_ij=iij, resolution=R, gamma=gamma)
    return DiscreteConvexFn(nodes=ns, values=np.concatenate([vals_i, vals_b]))
