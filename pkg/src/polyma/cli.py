"""Run driver: config parsing, staged pipeline, CSV artifacts.

A run is described by one flat YAML file.  Top-level keys:

    faces       list of [a, b, c] rows, one per face a*x + b*y - c >= 0
    h           weight expression in x, y (and l1..lN); default "1"
    alpha       vertex values, length N; default all zero
    mode        "guillemin" or "generic-dirichlet"
    resolution  interior grid resolution, >= 8
    gamma       boundary grading exponent in (0, 1]
    trace       Dirichlet data expression (generic-dirichlet mode only)
    exact       optional reference solution expression, reported against
    model       {eps, n} settings for the degenerate model solver
    expansion   {order, window} for the boundary-expansion fit
    transform   {window} for the partial Legendre transform
    out         output directory
    seed        RNG seed for the randomized diagnostics

In guillemin mode the equation weight is h times the product of all face
functions and the boundary data solves the edge ODEs with the given vertex
values; in generic-dirichlet mode the weight is h itself and the boundary
data is the trace expression restricted to each edge.

The pipeline runs check, edges, solve, transform, expand, diagnose in that
order and writes compat_report.csv, edge_traces.csv, solution.csv (plus
nodes.txt), residuals.csv, plt.csv, expansion.csv, diagnostics.csv and
run_report.txt into the output directory.  Stages can be run one at a time;
a later stage reloads the previous stage's artifact when one is present and
recomputes it in memory otherwise.  All CSV floats carry 17 significant
digits, and a fixed config and seed reproduce every artifact byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import yaml

from .geometry import GeometryError, Polytope, build_polytope, edge_frame
from .fields import FieldError, ScalarField
from .compat import check_h
from .edge_ode import TraceError, assemble_boundary, trace_from_function
from .ma_solver import (MAProblem, SolverError, dump_nodes, load_nodes,
                        ma_residual, op_solve)
from .legendre import DegenerateProblem, PLTGrid, TransformError, model_solve, plt_forward
from .expansion import (ExpansionError, edge_weight_field, fit_expansion,
                        verify_log_coefficients)
from .diagnostics import (DiagnosticsError, barrier_concavity, envelope_check,
                          holder_exponent)

__all__ = ["ConfigError", "PipelineError", "RunConfig", "parse_config",
           "run_pipeline", "main", "STAGES"]

STAGES = ("check", "edges", "solve", "transform", "expand", "diagnose")

COEF_TOL = 0.05         # acceptance bound on the fitted log coefficients


class ConfigError(ValueError):
    """Malformed or semantically invalid run configuration."""


class PipelineError(RuntimeError):
    """Hard stage failure; the message carries the stage name."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """One validated run description with all defaults filled in."""

    faces: tuple
    h: str = "1"
    alpha: Optional[tuple] = None
    mode: str = "guillemin"
    resolution: int = 128
    gamma: float = 0.4
    trace: Optional[str] = None
    exact: Optional[str] = None
    model_eps: float = 1e-3
    model_n: int = 128
    fit_order: int = 3
    fit_window: Optional[Tuple[float, float]] = None
    transform_window: Optional[Tuple[float, float, float, float]] = None
    out: str = "out"
    seed: int = 0

    def __post_init__(self):
        try:
            P = build_polytope(self.faces)
        except (GeometryError, ValueError, TypeError) as exc:
            raise ConfigError(f"faces: {exc}") from None
        self.faces = tuple(tuple(float(c) for c in row) for row in self.faces)
        N = P.N
        if self.alpha is None:
            self.alpha = (0.0,) * N
        self.alpha = tuple(float(a) for a in self.alpha)
        if len(self.alpha) != N:
            raise ConfigError(f"alpha: expected {N}, got {len(self.alpha)}")
        if self.mode not in ("guillemin", "generic-dirichlet"):
            raise ConfigError(
                f"mode: expected 'guillemin' or 'generic-dirichlet', "
                f"got {self.mode!r}")
        if self.resolution < 8:
            raise ConfigError(
                f"resolution: must be at least 8, got {self.resolution}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma: must lie in (0, 1], got {self.gamma}")
        if self.mode == "generic-dirichlet" and self.trace is None:
            raise ConfigError("trace: required in generic-dirichlet mode")
        if not self.model_eps > 0.0:
            raise ConfigError(f"model.eps: must be positive, got {self.model_eps}")
        if self.model_n < 8:
            raise ConfigError(f"model.n: must be at least 8, got {self.model_n}")
        if not 1 <= self.fit_order <= 5:
            raise ConfigError(
                f"expansion.order: must be between 1 and 5, got {self.fit_order}")
        if self.fit_window is not None:
            lo, hi = self.fit_window
            if not 0.0 < lo < hi:
                raise ConfigError(
                    f"expansion.window: need 0 < low < high, got {self.fit_window}")
            self.fit_window = (float(lo), float(hi))
        if self.transform_window is not None:
            x0, x1, y0, y1 = self.transform_window
            if not (x1 > x0 and y1 > y0):
                raise ConfigError(
                    f"transform.window: need x0 < x1 and y0 < y1, "
                    f"got {self.transform_window}")
            self.transform_window = tuple(float(v) for v in self.transform_window)
        if self.seed < 0:
            raise ConfigError(f"seed: must be nonnegative, got {self.seed}")
        for name, expr in (("h", self.h), ("trace", self.trace),
                           ("exact", self.exact)):
            if expr is None:
                continue
            try:
                ScalarField.parse(expr, P)
            except FieldError as exc:
                raise ConfigError(f"{name}: {exc}") from None

    def polytope(self) -> Polytope:
        return build_polytope(self.faces)

    def echo(self) -> str:
        """Canonical config text, defaults filled; parses back to self."""
        def num(v):
            return repr(int(v)) if float(v).is_integer() else repr(float(v))

        def opt_expr(v):
            return "null" if v is None else json.dumps(v)

        lines = ["faces:"]
        for row in self.faces:
            lines.append(f"- [{', '.join(num(c) for c in row)}]")
        lines.append(f"h: {json.dumps(self.h)}")
        lines.append(f"alpha: [{', '.join(num(a) for a in self.alpha)}]")
        lines.append(f"mode: {self.mode}")
        lines.append(f"resolution: {self.resolution}")
        lines.append(f"gamma: {num(self.gamma)}")
        lines.append(f"trace: {opt_expr(self.trace)}")
        lines.append(f"exact: {opt_expr(self.exact)}")
        lines.append(f"model: {{eps: {num(self.model_eps)}, n: {self.model_n}}}")
        win = ("null" if self.fit_window is None
               else f"[{num(self.fit_window[0])}, {num(self.fit_window[1])}]")
        lines.append(f"expansion: {{order: {self.fit_order}, window: {win}}}")
        twin = ("null" if self.transform_window is None
                else "[" + ", ".join(num(v) for v in self.transform_window) + "]")
        lines.append(f"transform: {{window: {twin}}}")
        lines.append(f"out: {json.dumps(self.out)}")
        lines.append(f"seed: {self.seed}")
        return "\n".join(lines) + "\n"


_TOP_KEYS = ("faces", "h", "alpha", "mode", "resolution", "gamma", "trace",
             "exact", "model", "expansion", "transform", "out", "seed")


def _want_int(val, path: str) -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}: expected an integer, got {val!r}")
    return int(val)


def _want_num(val, path: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {val!r}")
    return float(val)


def _want_str(val, path: str) -> str:
    if not isinstance(val, str):
        raise ConfigError(f"{path}: expected a string, got {val!r}")
    return val


def _want_block(raw: dict, key: str, allowed: tuple) -> dict:
    block = raw.get(key, {})
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise ConfigError(f"{key}: expected a mapping, got {block!r}")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(
            f"{key}: unknown key(s) {', '.join(repr(k) for k in unknown)}")
    return block


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run config; unknown keys are rejected."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = 0 if mark is None else mark.line + 1
        what = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"config syntax error at line {line}: {what}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a key-value mapping")
    unknown = sorted(set(raw) - set(_TOP_KEYS))
    if unknown:
        raise ConfigError(
            f"unknown config key(s) {', '.join(repr(k) for k in unknown)}")

    if "faces" not in raw:
        raise ConfigError("faces: required")
    faces = raw["faces"]
    if not isinstance(faces, (list, tuple)) or len(faces) < 3:
        raise ConfigError("faces: expected a list of at least 3 [a, b, c] rows")
    out_faces = []
    for k, row in enumerate(faces):
        if not isinstance(row, (list, tuple)) or len(row) != 3:
            raise ConfigError(f"faces[{k}]: expected [a, b, c], got {row!r}")
        out_faces.append(tuple(_want_num(c, f"faces[{k}]") for c in row))

    kw = {"faces": tuple(out_faces)}
    if "h" in raw:
        kw["h"] = _want_str(raw["h"], "h")
    if "alpha" in raw and raw["alpha"] is not None:
        alpha = raw["alpha"]
        if not isinstance(alpha, (list, tuple)):
            raise ConfigError(f"alpha: expected a list, got {alpha!r}")
        kw["alpha"] = tuple(_want_num(a, "alpha") for a in alpha)
    if "mode" in raw:
        kw["mode"] = _want_str(raw["mode"], "mode")
    if "resolution" in raw:
        kw["resolution"] = _want_int(raw["resolution"], "resolution")
    if "gamma" in raw:
        kw["gamma"] = _want_num(raw["gamma"], "gamma")
    for key in ("trace", "exact"):
        if raw.get(key) is not None:
            kw[key] = _want_str(raw[key], key)
    model = _want_block(raw, "model", ("eps", "n"))
    if "eps" in model:
        kw["model_eps"] = _want_num(model["eps"], "model.eps")
    if "n" in model:
        kw["model_n"] = _want_int(model["n"], "model.n")
    expansion = _want_block(raw, "expansion", ("order", "window"))
    if "order" in expansion:
        kw["fit_order"] = _want_int(expansion["order"], "expansion.order")
    if expansion.get("window") is not None:
        win = expansion["window"]
        if not isinstance(win, (list, tuple)) or len(win) != 2:
            raise ConfigError(f"expansion.window: expected [low, high], got {win!r}")
        kw["fit_window"] = tuple(_want_num(v, "expansion.window") for v in win)
    transform = _want_block(raw, "transform", ("window",))
    if transform.get("window") is not None:
        win = transform["window"]
        if not isinstance(win, (list, tuple)) or len(win) != 4:
            raise ConfigError(
                f"transform.window: expected [x0, x1, y0, y1], got {win!r}")
        kw["transform_window"] = tuple(_want_num(v, "transform.window")
                                       for v in win)
    if "out" in raw:
        kw["out"] = _want_str(raw["out"], "out")
    if "seed" in raw:
        kw["seed"] = _want_int(raw["seed"], "seed")
    return RunConfig(**kw)


# ---------------------------------------------------------------------------
# artifact formatting


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def _model_edge_data(p, y):
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    yl = np.where(y > 0.0, y * np.log(np.where(y > 0.0, y, 1.0)), 0.0)
    return 0.5 * p * p - yl


class _Run:
    """State shared across stages of one pipeline invocation."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.P = cfg.polytope()
        self.h = ScalarField.parse(cfg.h, self.P)
        self.lines: list[str] = []
        self.traces = None
        self.problem = None
        self.fn = None
        self.grid = None

    # -- plumbing

    def _path(self, name: str) -> str:
        return os.path.join(self.cfg.out, name)

    def _write_csv(self, name: str, header, rows) -> None:
        with open(self._path(name), "w", encoding="ascii", newline="\n") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")

    def note(self, line: str) -> None:
        self.lines.append(line)

    def write_report(self) -> None:
        with open(self._path("run_report.txt"), "w", encoding="ascii",
                  newline="\n") as f:
            f.write("run report\n==========\n\nconfig\n------\n")
            f.write(self.cfg.echo())
            f.write("\nstages\n------\n")
            for line in self.lines:
                f.write(line + "\n")

    def _field(self, expr: str, name: str) -> ScalarField:
        try:
            return ScalarField.parse(expr, self.P)
        except FieldError as exc:
            raise PipelineError(f"{name}: {exc}") from None

    def _bottom_edge(self) -> Optional[int]:
        # the expansion identity is read off along a horizontal bottom edge
        V = self.P.vertices
        N = self.P.N
        ymin = float(V[:, 1].min())
        tol = 1e-9 * max(1.0, self.P.diameter)
        for i in range(N):
            if (V[i, 1] - ymin <= tol and V[(i + 1) % N, 1] - ymin <= tol):
                return i
        return None

    def _default_transform_window(self):
        x0, x1, y0, y1 = self.P.bbox
        w, ht = x1 - x0, y1 - y0
        return (x0 + 0.25 * w, x0 + 0.75 * w, y0, y0 + 0.2 * ht)

    # -- lazy stage inputs

    def _ensure_traces(self):
        if self.traces is None:
            cfg = self.cfg
            try:
                if cfg.mode == "guillemin":
                    self.traces = assemble_boundary(self.P, self.h,
                                                    np.asarray(cfg.alpha))
                else:
                    f = self._field(cfg.trace, "trace")
                    self.traces = [trace_from_function(self.P, i, f)
                                   for i in range(self.P.N)]
            except (TraceError, FieldError, ValueError) as exc:
                raise PipelineError(f"edges: {exc}") from None
        return self.traces

    def _ensure_fn(self):
        if self.fn is None:
            path = self._path("nodes.txt")
            if os.path.exists(path):
                self.fn = load_nodes(path)
            else:
                self._solve()
        return self.fn

    def _ensure_grid(self):
        if self.grid is None:
            path = self._path("plt.csv")
            if os.path.exists(path):
                data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
                p = np.unique(data[:, 0])
                y = np.unique(data[:, 1])
                vals = data[:, 2].reshape(len(y), len(p))
                self.grid = PLTGrid(p, y, vals, provenance="transform")
            else:
                self._transform()
        return self.grid

    # -- stages

    def stage_check(self) -> None:
        header = ("vertex", "x", "y", "h", "required", "rel_deviation", "passed")
        if self.cfg.mode == "generic-dirichlet":
            # no vertex constraints in this mode, but the weight must still
            # be positive on the closed polygon
            x0, x1, y0, y1 = self.P.bbox
            X, Y = np.meshgrid(np.linspace(x0, x1, 64), np.linspace(y0, y1, 64))
            X, Y = X.ravel(), Y.ravel()
            inside = np.all(self.P.face_values(X, Y) >= 0.0, axis=0)
            vals = self.h(X[inside], Y[inside])
            self._write_csv("compat_report.csv", header, [])
            if vals.size and vals.min() <= 0.0:
                k = int(np.argmin(vals))
                self.note("check: FAIL (h not positive)")
                raise PipelineError(
                    f"check: h is not positive on the closed polygon "
                    f"(h={vals.min():.6g} at x={X[inside][k]:.6g}, "
                    f"y={Y[inside][k]:.6g})")
            self.note("check: SKIP (generic-dirichlet mode, h positivity screened)")
            return
        try:
            rep = check_h(self.P, self.h)
        except FieldError as exc:
            raise PipelineError(f"check: {exc}") from None
        rows = [(v.index, v.vertex[0], v.vertex[1], v.value, v.required,
                 v.rel_deviation, int(v.passed)) for v in rep.vertices]
        self._write_csv("compat_report.csv", header, rows)
        if not rep.passed:
            detail = "; ".join(
                f"vertex {v.index}: h={v.value:.6g} required={v.required:.6g} "
                f"deviation={v.rel_deviation:.3e}" for v in rep.vertices)
            self.note(f"check: FAIL (max vertex deviation {rep.max_deviation:.3e})")
            raise PipelineError(f"check: h fails vertex compatibility: {detail}")
        self.note(f"check: PASS (max vertex deviation {rep.max_deviation:.3e}, "
                  f"tol {rep.tol:g})")

    def stage_edges(self) -> None:
        traces = self._ensure_traces()
        ts = np.linspace(0.0, 1.0, 65)
        rows = []
        for tr in traces:
            fr = edge_frame(self.P, tr.edge_index)
            tt = ts * tr.length
            x, y = fr.point(tt)
            vals = tr.eval(tt)
            for k in range(len(tt)):
                rows.append((tr.edge_index, tt[k], x[k], y[k], vals[k]))
        self._write_csv("edge_traces.csv", ("edge", "t", "x", "y", "value"), rows)
        res = max(tr.residual for tr in traces)
        self.note(f"edges: PASS ({len(traces)} traces, max ODE residual {res:.3e})")

    def _solve(self) -> None:
        cfg = self.cfg
        traces = self._ensure_traces()
        try:
            self.problem = MAProblem(self.P, self.h, alphas=np.asarray(cfg.alpha),
                                     mode=cfg.mode, resolution=cfg.resolution,
                                     gamma=cfg.gamma)
            self.fn = op_solve(self.problem, traces)
        except (SolverError, FieldError) as exc:
            self.note("solve: FAIL")
            raise PipelineError(f"solve: {exc}") from None

    def stage_solve(self) -> None:
        self._solve()
        cfg, fn = self.cfg, self.fn
        ns = fn.nodes
        boundary = np.zeros(ns.n_total, dtype=int)
        boundary[ns.n_interior:] = 1
        rows = np.column_stack([ns.points[:, 0], ns.points[:, 1], fn.values])
        self._write_csv("solution.csv", ("x", "y", "value", "boundary"),
                        [(r[0], r[1], r[2], int(b))
                         for r, b in zip(rows, boundary)])
        dump_nodes(fn, self._path("nodes.txt"))
        rep = ma_residual(fn, self.problem)
        self._write_csv("residuals.csv", ("node", "x", "y", "rel_residual"),
                        [(i, ns.points[i, 0], ns.points[i, 1], rep.per_node[i])
                         for i in range(ns.n_interior)])
        self.note(f"solve: PASS (resolution {cfg.resolution}, "
                  f"{ns.n_interior} interior nodes)")
        pn = "PASS" if rep.max_rel <= 1e-6 else "FAIL"
        mg = "PASS" if rep.total_gap <= 1e-4 else "FAIL"
        self.note(f"solve: max rel residual {rep.max_rel:.3e} "
                  f"(<= 1e-06: {pn}), mass gap {rep.total_gap:.3e} "
                  f"(<= 0.0001: {mg})")
        if cfg.exact is not None:
            ex = self._field(cfg.exact, "exact")
            err = float(np.max(np.abs(
                fn.values - ex(ns.points[:, 0], ns.points[:, 1]))))
            self.note(f"solve: sup error vs exact {err:.3e}")

    def _transform(self) -> None:
        fn = self._ensure_fn()
        win = self.cfg.transform_window or self._default_transform_window()
        try:
            self.grid = plt_forward(fn, window=win)
        except (TransformError, ValueError) as exc:
            self.note("transform: FAIL")
            raise PipelineError(f"transform: {exc}") from None

    def stage_transform(self) -> None:
        self._transform()
        grid = self.grid
        self._write_csv("plt.csv", ("p", "y", "ustar"), grid.to_rows())
        self.note(f"transform: PASS (grid {grid.shape[0]} x {grid.shape[1]}, "
                  f"convexity defect {grid.convexity_defect:.3e})")

    def stage_expand(self) -> None:
        cfg = self.cfg
        grid = self._ensure_grid()
        try:
            fit = fit_expansion(grid, order=cfg.fit_order, window=cfg.fit_window)
        except ExpansionError as exc:
            self.note("expand: FAIL")
            raise PipelineError(f"expand: {exc}") from None
        header = ["p"]
        for i in range(1, fit.order + 1):
            header += [f"uhat{i}", f"u{i}"]
        header.append("residual")
        self._write_csv("expansion.csv", header, fit.to_rows())
        self.note(f"expand: PASS (order {fit.order}, window "
                  f"[{fit.window[0]:.6g}, {fit.window[1]:.6g}], max fit "
                  f"residual {fit.residual.max():.3e})")
        edge = self._bottom_edge()
        if fit.order < 3 or edge is None:
            self.note("expand: log-coefficient check skipped "
                      "(needs order >= 3 and a horizontal bottom edge)")
            return
        if cfg.mode == "guillemin":
            weight = edge_weight_field(self.P, self.h, edge)
        else:
            weight = self.h
        try:
            rep = verify_log_coefficients(fit, weight)
        except ExpansionError as exc:
            self.note(f"expand: log-coefficient check skipped ({exc})")
            return

        def verdict(v):
            return "PASS" if v <= COEF_TOL else "FAIL"

        if cfg.mode == "guillemin":
            self.note(f"expand: |uhat1 + 1| sup {rep.uhat1_dev:.3e} "
                      f"(<= {COEF_TOL:g}: {verdict(rep.uhat1_dev)})")
        self.note(f"expand: |uhat2| sup {rep.uhat2_sup:.3e} "
                  f"(<= {COEF_TOL:g}: {verdict(rep.uhat2_sup)})")
        self.note(f"expand: |uhat3| sup {rep.uhat3_sup:.3e} "
                  f"(<= {COEF_TOL:g}: {verdict(rep.uhat3_sup)})")
        self.note(f"expand: identity uhat1 = -u0''/w rel deviation "
                  f"{rep.identity_rel:.3e} "
                  f"(<= {COEF_TOL:g}: {verdict(rep.identity_rel)})")

    def stage_diagnose(self) -> None:
        cfg = self.cfg
        N = self.P.N
        ab = 0.9 * 2.0 / (N + 1)
        try:
            bar = barrier_concavity(self.P, ab, trials=2000, seed=cfg.seed)
            fn = self._ensure_fn()
            hol = holder_exponent(fn)
            mgrid = model_solve(DegenerateProblem(g=_model_edge_data,
                                                  eps=cfg.model_eps,
                                                  n=cfg.model_n))
            env = envelope_check(
                mgrid, lambda p: 0.5 * np.asarray(p, dtype=float) ** 2)
        except (DiagnosticsError, SolverError, ValueError) as exc:
            self.note("diagnose: FAIL")
            raise PipelineError(f"diagnose: {exc}") from None
        rows = [
            ("barrier_alpha", ab),
            ("barrier_trials", bar.trials),
            ("barrier_max_second", bar.max_second),
            ("holder_alpha", hol.alpha),
            ("holder_seminorm", hol.seminorm),
            ("model_eps", cfg.model_eps),
            ("model_n", cfg.model_n),
            ("envelope_contained", int(env.contained)),
            ("envelope_curvature", env.curvature),
            ("envelope_rim_slope", env.rim_slope),
            ("envelope_log_slope", env.log_slope),
            ("envelope_attain_rate", env.attain_rate),
        ]
        self._write_csv("diagnostics.csv", ("metric", "value"), rows)
        self.note(f"diagnose: barrier {'PASS' if bar.max_second < 0 else 'FAIL'} "
                  f"(alpha {ab:.4f}, max second derivative {bar.max_second:.3e}, "
                  f"{bar.trials} segments)")
        self.note(f"diagnose: holder seminorm {hol.seminorm:.6g} "
                  f"at alpha {hol.alpha:.4f}")
        self.note(f"diagnose: envelope {'PASS' if env.contained else 'FAIL'} "
                  f"(curvature {env.curvature:.6g}, log slope "
                  f"{env.log_slope:.6g}, attain rate {env.attain_rate:.3f})")


def run_pipeline(cfg: RunConfig, stage: str = "all") -> int:
    """Run one stage or the whole pipeline; 0 on success, 1 on hard failure.

    Artifacts for the executed stages are written into cfg.out, followed by
    run_report.txt with the echoed config and one line per stage property.
    """
    if stage != "all" and stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    os.makedirs(cfg.out, exist_ok=True)
    run = _Run(cfg)
    status = 0
    try:
        for name in STAGES if stage == "all" else (stage,):
            getattr(run, "stage_" + name)()
    except PipelineError as exc:
        print(str(exc), file=sys.stderr)
        run.note(str(exc))
        status = 1
    run.write_report()
    return status


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="polyma",
        description="staged pipeline for the degenerate Monge-Ampere runs")
    ap.add_argument("stage_pos", nargs="?", metavar="stage",
                    choices=STAGES + ("all",),
                    help="stage to run (default: all)")
    ap.add_argument("--config", required=True, help="path to the run config")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--stage", dest="stage_flag", choices=STAGES + ("all",),
                    help="stage to run (same as the positional form)")
    ap.add_argument("--seed", type=int, help="override the RNG seed")
    ap.add_argument("--resolution", type=int,
                    help="override the grid resolution")
    ns = ap.parse_args(argv)

    try:
        with open(ns.config, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        print(f"config error: cannot read {ns.config}: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
        over = {}
        if ns.out is not None:
            over["out"] = ns.out
        if ns.seed is not None:
            over["seed"] = ns.seed
        if ns.resolution is not None:
            over["resolution"] = ns.resolution
        if over:
            cfg = dataclasses.replace(cfg, **over)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if ns.stage_pos and ns.stage_flag and ns.stage_pos != ns.stage_flag:
        print("config error: conflicting stage arguments", file=sys.stderr)
        return 2
    stage = ns.stage_flag or ns.stage_pos or "all"
    try:
        return run_pipeline(cfg, stage)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
