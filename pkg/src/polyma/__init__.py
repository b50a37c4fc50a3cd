"""Monge-Ampere solvers on convex polygons with Guillemin-type boundary data.

Pipeline: polygon geometry -> vertex compatibility of the weight h ->
edge boundary traces -> discrete Monge-Ampere solve -> partial Legendre
transform and degenerate model solver -> boundary expansion fits ->
diagnostics (barriers, Holder quotients, envelope bounds).
"""
from .geometry import (GeometryError, HalfPlane, EdgeFrame, Polytope,
                       build_polytope, eval_faces, edge_frame)
from .fields import FieldError, ScalarField, product_of_faces, phi_field
from .compat import (required_h_at_vertex, required_h_all, check_h,
                     guillemin_h, CompatReport)
from .edge_ode import (BoundaryTrace, TraceError, solve_edge, solve_trace,
                       eval_trace, trace_from_function, assemble_boundary,
                       edge_rhs, edge_coefficient)
from .ma_solver import (SolverError, NodeSet, DiscreteConvexFn, MAProblem,
                        MassReport, build_grid, subgradient_cell,
                        subgradient_polygon, op_solve, ma_residual,
                        refine_boundary, dump_nodes, load_nodes, grading_map)
from .legendre import (TransformError, PLTGrid, DegenerateProblem,
                       plt_forward, model_solve, pl_residual,
                       regularized_height)
from .expansion import (ExpansionError, ExpansionFit, CoefficientReport,
                        SmoothPartReport, fit_expansion,
                        verify_log_coefficients, smooth_part,
                        edge_weight_field)
from .diagnostics import (DiagnosticsError, SegmentSample, BarrierReport,
                          HolderReport, EnvelopeReport, factor_profile,
                          segment_restriction, barrier_concavity,
                          holder_exponent, envelope_check)
from .cli import (ConfigError, PipelineError, RunConfig, parse_config,
                  run_pipeline)

__all__ = [
    "GeometryError", "HalfPlane", "EdgeFrame", "Polytope",
    "build_polytope", "eval_faces", "edge_frame",
    "FieldError", "ScalarField", "product_of_faces", "phi_field",
    "required_h_at_vertex", "required_h_all", "check_h", "guillemin_h",
    "CompatReport",
    "BoundaryTrace", "TraceError", "solve_edge", "solve_trace", "eval_trace",
    "trace_from_function", "assemble_boundary", "edge_rhs", "edge_coefficient",
    "SolverError", "NodeSet", "DiscreteConvexFn", "MAProblem", "MassReport",
    "build_grid", "subgradient_cell", "subgradient_polygon", "op_solve",
    "ma_residual", "refine_boundary", "dump_nodes", "load_nodes",
    "grading_map",
    "TransformError", "PLTGrid", "DegenerateProblem", "plt_forward",
    "model_solve", "pl_residual", "regularized_height",
    "ExpansionError", "ExpansionFit", "CoefficientReport", "SmoothPartReport",
    "fit_expansion", "verify_log_coefficients", "smooth_part",
    "edge_weight_field",
    "DiagnosticsError", "SegmentSample", "BarrierReport", "HolderReport",
    "EnvelopeReport", "factor_profile", "segment_restriction",
    "barrier_concavity", "holder_exponent", "envelope_check",
    "ConfigError", "PipelineError", "RunConfig", "parse_config",
    "run_pipeline",
]

__version__ = "0.1.0"
