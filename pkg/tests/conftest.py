import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from polyma import build_polytope

SQUARE_FACES = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (-1.0, 0.0, -1.0), (0.0, -1.0, -1.0)]
RECT_FACES = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (-1.0, 0.0, -2.0), (0.0, -1.0, -1.0)]
S2 = 1.0 / np.sqrt(2.0)
TRIANGLE_FACES = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (-S2, -S2, -S2)]


@pytest.fixture(scope="session")
def square():
    return build_polytope(SQUARE_FACES)


@pytest.fixture(scope="session")
def rect():
    """[0, 2] x [0, 1]."""
    return build_polytope(RECT_FACES)


@pytest.fixture(scope="session")
def triangle():
    """Right triangle with vertices (0,0), (1,0), (0,1)."""
    return build_polytope(TRIANGLE_FACES)


def pentagon_faces(seed=7):
    from oracles import random_convex_polygon
    rng = np.random.default_rng(seed)
    return random_convex_polygon(rng, 5)


@pytest.fixture(scope="session")
def pentagon():
    return build_polytope(pentagon_faces())


class SolveCache:
    """Session-level cache of the expensive discrete solves."""

    def __init__(self):
        self._store = {}

    def get(self, key, builder):
        if key not in self._store:
            self._store[key] = builder()
        return self._store[key]


@pytest.fixture(scope="session")
def solve_cache():
    return SolveCache()


@pytest.fixture(scope="session")
def square_solve(square, solve_cache):
    """Cached square Guillemin solves keyed by (resolution, gamma)."""
    from polyma import MAProblem, ScalarField, op_solve, solve_edge

    h = ScalarField.constant(1.0)
    traces = [solve_edge(square, h, i, 0.0, 0.0) for i in range(4)]

    def get(res, gamma=0.4):
        def build():
            prob = MAProblem(square, h, alphas=[0, 0, 0, 0], mode="guillemin",
                             resolution=res, gamma=gamma)
            return op_solve(prob, traces), prob
        return solve_cache.get(("square-guillemin", res, gamma), build)

    return get
