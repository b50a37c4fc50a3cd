import numpy as np
import pytest

from polyma import GeometryError, build_polytope, edge_frame, eval_faces

from conftest import SQUARE_FACES, TRIANGLE_FACES
from oracles import random_convex_polygon


def cyclic_equal(a, b, tol=1e-12):
    """Vertex arrays equal up to a cyclic shift."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    n = len(a)
    for s in range(n):
        if np.allclose(np.roll(a, s, axis=0), b, atol=tol):
            return True
    return False


def test_square_vertices(square):
    expect = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], float)
    assert cyclic_equal(square.vertices, expect)
    assert square.N == 4
    assert abs(square.area - 1.0) < 1e-14


def test_triangle_vertices(triangle):
    expect = np.array([(0, 0), (1, 0), (0, 1)], float)
    assert cyclic_equal(triangle.vertices, expect)
    assert abs(triangle.area - 0.5) < 1e-14


def test_vertex_on_defining_faces(square, triangle, pentagon):
    for P in (square, triangle, pentagon):
        for i in range(P.N):
            v = P.vertices[i]
            vals = P.face_values(v[0], v[1])
            assert abs(vals[(i - 1) % P.N]) < 1e-12
            assert abs(vals[i]) < 1e-12


def test_eval_faces_center_and_boundary(square):
    vals, inside = eval_faces(square, 0.5, 0.5)
    assert np.allclose(vals, [0.5, 0.5, 0.5, 0.5])
    assert inside
    vals, inside = eval_faces(square, 0.0, 0.5)
    assert np.allclose(vals, [0.0, 0.5, 1.0, 0.5])
    assert not inside  # on the boundary, not strictly inside


def test_edge_frame_square(square):
    # bottom edge y = 0 is face 1 in the given ordering
    fr = edge_frame(square, 1)
    assert np.allclose(fr.origin, [0.0, 0.0])
    assert np.allclose(fr.tangent, [1.0, 0.0])
    assert abs(fr.length - 1.0) < 1e-14
    assert np.allclose(fr.normal, [0.0, 1.0])


def test_edge_frame_hypotenuse(triangle):
    fr = edge_frame(triangle, 2)
    assert abs(fr.length - np.sqrt(2.0)) < 1e-12
    assert np.allclose(fr.tangent, [-1 / np.sqrt(2), 1 / np.sqrt(2)])
    # frame endpoints are consecutive vertices
    x1, y1 = fr.point(fr.length)
    assert np.allclose([x1, y1], triangle.vertices[(2 + 1) % 3])


def test_edge_midpoint_inside_margin(square, pentagon):
    for P in (square, pentagon):
        for i in range(P.N):
            fr = edge_frame(P, i)
            mx, my = fr.point(fr.length / 2)
            px = mx + 1e-8 * fr.normal[0]
            py = my + 1e-8 * fr.normal[1]
            assert P.min_face_value(px, py) > 0


def test_angle_sum(square, triangle, pentagon):
    for P in (square, triangle, pentagon):
        total = P.interior_angles().sum()
        assert abs(total - (P.N - 2) * np.pi) < 1e-10


def test_angle_sum_random():
    rng = np.random.default_rng(31)
    for n in (3, 4, 5, 6, 7):
        for _ in range(5):
            P = build_polytope(random_convex_polygon(rng, n))
            assert abs(P.interior_angles().sum() - (n - 2) * np.pi) < 1e-10


def test_cyclic_rotation_invariance():
    base = build_polytope(SQUARE_FACES)
    for s in range(1, 4):
        rolled = SQUARE_FACES[s:] + SQUARE_FACES[:s]
        P = build_polytope(rolled)
        assert cyclic_equal(P.vertices, base.vertices)
        assert abs(P.area - base.area) < 1e-14


def test_normalization_with_warning():
    faces = [(2.0, 0.0, 0.0), (0.0, 2.0, 0.0), (-2.0, 0.0, -2.0), (0.0, -2.0, -2.0)]
    with pytest.warns(UserWarning, match="normalizing"):
        P = build_polytope(faces)
    # same unit square: offsets rescale with the normals
    assert abs(P.area - 1.0) < 1e-14
    with pytest.raises(GeometryError):
        build_polytope(faces, strict=True)


def test_clockwise_reversed_with_warning():
    cw = list(reversed(SQUARE_FACES))
    with pytest.warns(UserWarning, match="clockwise"):
        P = build_polytope(cw)
    assert abs(P.area - 1.0) < 1e-14


def test_unbounded_rejected():
    with pytest.raises(GeometryError):
        build_polytope([(1.0, 0.0, 0.0), (-1.0, 0.0, -1.0)])
    # three faces, normals within a half circle -> unbounded
    with pytest.raises(GeometryError):
        build_polytope([(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 0.0, -1.0)])


def test_empty_interior_rejected():
    # square with a face pushed past the opposite one
    faces = [(1.0, 0.0, 2.0), (0.0, 1.0, 0.0), (-1.0, 0.0, -1.0), (0.0, -1.0, -1.0)]
    with pytest.raises(GeometryError):
        build_polytope(faces)


def test_nearly_parallel_rejected():
    eps = 1e-14
    faces = [(1.0, 0.0, 0.0), (np.cos(eps), np.sin(eps), -1.0),
             (-1.0, 0.0, -2.0), (0.0, -1.0, -1.0)]
    with pytest.raises(GeometryError):
        build_polytope(faces)


def test_triangle_matches_fixture(triangle):
    P = build_polytope(TRIANGLE_FACES)
    assert cyclic_equal(P.vertices, triangle.vertices)
