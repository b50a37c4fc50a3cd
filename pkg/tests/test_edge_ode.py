import numpy as np
import pytest

from polyma import (ScalarField, TraceError, assemble_boundary, edge_rhs,
                    guillemin_h, solve_edge, solve_trace, eval_trace,
                    trace_from_function)


def closed_form_square_edge(t):
    with np.errstate(invalid="ignore"):
        a = np.where(t > 0, t * np.log(np.where(t > 0, t, 1)), 0.0)
        b = np.where(t < 1, (1 - t) * np.log(np.where(t < 1, 1 - t, 1)), 0.0)
    return a + b


def test_square_edge_closed_form(square):
    tr = solve_edge(square, ScalarField.constant(1.0), 1, 0.0, 0.0)
    assert abs(tr.c0 - 1.0) < 1e-12
    assert abs(tr.cL - 1.0) < 1e-12
    t = np.linspace(1e-6, 1 - 1e-6, 20001)
    err = np.max(np.abs(tr.eval(t) - closed_form_square_edge(t)))
    assert err <= 1e-9
    assert tr.residual <= 1e-8


def test_square_edge_point_values(square):
    tr = solve_edge(square, ScalarField.constant(1.0), 1, 0.0, 0.0)
    assert abs(tr.eval(0.5) - (-np.log(2.0))) < 1e-12
    assert abs(tr.eval(0.5, order=2) - 4.0) < 1e-9
    assert abs(tr.eval(0.0) - 0.0) < 1e-12
    assert abs(tr.eval(1.0) - 0.0) < 1e-12


def test_endpoint_derivative_rejected(square):
    tr = solve_edge(square, ScalarField.constant(1.0), 1, 0.0, 0.0)
    for order in (1, 2):
        with pytest.raises(TraceError):
            tr.eval(0.0, order=order)
        with pytest.raises(TraceError):
            tr.eval(1.0, order=order)


def test_synthetic_regular_rhs():
    # R = 1: H(t) = t(1-t), no singular parts, u = (t^2 - t)/2
    tr = solve_trace(lambda t: np.asarray(t) * (1 - np.asarray(t)), 1.0, 0.0, 0.0)
    assert abs(tr.c0) < 1e-14 and abs(tr.cL) < 1e-14
    t = np.linspace(0, 1, 101)
    assert np.max(np.abs(tr.eval(t) - (t**2 - t) / 2)) < 1e-12


def test_rect_guillemin_trace(rect):
    """Bottom edge of [0,2]x[0,1]: trace must be x log x + (2-x) log(2-x)."""
    h = guillemin_h(rect)
    a = 2 * np.log(2.0)
    tr = solve_edge(rect, h, 1, a, a)
    t = np.linspace(1e-6, 2 - 1e-6, 10001)
    exact = t * np.log(t) + (2 - t) * np.log(2 - t)
    assert np.max(np.abs(tr.eval(t) - exact)) <= 1e-8


def test_triangle_guillemin_traces(triangle):
    """All three edges of the triangle against sum l log l restricted."""
    h = guillemin_h(triangle)
    P = triangle

    def u(x, y):
        vals = P.face_values(x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(vals > 0, vals * np.log(np.where(vals > 0, vals, 1)), 0.0)
        return terms.sum(axis=0)

    alphas = [u(*P.vertices[i]) for i in range(3)]
    for i in range(3):
        tr = solve_edge(P, h, i, alphas[i], alphas[(i + 1) % 3])
        from polyma import edge_frame
        fr = edge_frame(P, i)
        t = np.linspace(1e-6, fr.length - 1e-6, 2001)
        x, y = fr.point(t)
        assert np.max(np.abs(tr.eval(t) - u(x, y))) < 1e-8


def test_uniqueness_up_to_affine(square):
    h = ScalarField.constant(1.0)
    t0 = solve_edge(square, h, 1, 0.0, 0.0)
    t1 = solve_edge(square, h, 1, 2.0, -1.0)  # endpoint shift 2 at 0, -1 at L
    t = np.linspace(0, 1, 257)
    diff = t1.eval(t) - t0.eval(t)
    affine = 2.0 + (-1.0 - 2.0) * t
    assert np.max(np.abs(diff - affine)) < 1e-12


def test_trace_convexity(square, rect, pentagon):
    for P, name in ((square, "square"), (rect, "rect"), (pentagon, "pentagon")):
        h = guillemin_h(P)
        for i in range(P.N):
            tr = solve_edge(P, h, i, 0.0, 0.0)
            t = np.linspace(1e-4, tr.length - 1e-4, 501)
            assert np.all(tr.eval(t, order=2) > 0), f"{name} edge {i}"


def test_vertex_continuity(square):
    h = guillemin_h(square)
    alphas = [0.1, -0.2, 0.3, 0.0]
    traces = assemble_boundary(square, h, alphas)
    for i in range(4):
        assert abs(traces[i].eval(0.0) - alphas[i]) < 1e-12
        assert abs(traces[i].eval(traces[i].length) - alphas[(i + 1) % 4]) < 1e-12
        prev = traces[(i - 1) % 4]
        assert abs(prev.eval(prev.length) - traces[i].eval(0.0)) < 1e-12


def test_nonpositive_h_rejected(square):
    with pytest.raises(TraceError):
        solve_edge(square, ScalarField.parse("x - 0.5"), 1, 0.0, 0.0)


def test_edge_rhs_factorization(square, pentagon):
    """H(t) really equals t (L-t) R(t) where R = 1/(h prod_{q!=i} l_q)."""
    for P in (square, pentagon):
        h = guillemin_h(P)
        for i in range(P.N):
            H, R, fr = edge_rhs(P, h, i)
            t = np.linspace(0.05, fr.length - 0.05, 57)
            x, y = fr.point(t)
            prod = np.ones_like(t)
            for q in range(P.N):
                if q != i:
                    prod *= P.faces[q].value(x, y)
            direct = 1.0 / (h(x, y) * prod)
            assert np.allclose(R(t), direct, rtol=1e-12)
            assert np.allclose(H(t), t * (fr.length - t) * direct, rtol=1e-12)


def test_trace_from_function_quadratic(square):
    f = lambda x, y: 0.5 * (x**2 + y**2)
    tr = trace_from_function(square, 1, f, degree=8)
    t = np.linspace(0, 1, 101)
    assert np.max(np.abs(tr.eval(t) - 0.5 * t**2)) < 1e-13
    assert abs(tr.c0) == 0.0 and abs(tr.cL) == 0.0
    tt = np.linspace(0.01, 0.99, 99)
    assert np.allclose(tr.eval(tt, order=2), 1.0, atol=1e-10)


def test_eval_trace_function(square):
    tr = solve_edge(square, ScalarField.constant(1.0), 1, 0.0, 0.0)
    assert eval_trace(tr, 0.5) == tr.eval(0.5)
