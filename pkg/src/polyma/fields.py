"""Scalar fields on a polygon: closed-form expressions over x, y and the faces.

Fields are plain callables (x, y) -> value wrapped with a little metadata.
The parser accepts arithmetic over x, y, numeric constants, the face
functions l1 .. lN of a bound polygon, and a few safe functions (log, exp,
sqrt, sin, cos, abs).
"""
from __future__ import annotations

import ast
from typing import Callable, Optional

import numpy as np

from .geometry import Polytope

__all__ = ["FieldError", "ScalarField", "product_of_faces", "phi_field"]

_FUNCS = {"log": np.log, "exp": np.exp, "sqrt": np.sqrt,
          "sin": np.sin, "cos": np.cos, "abs": np.abs}
_CONSTS = {"pi": np.pi, "e": np.e}


class FieldError(ValueError):
    """Bad field expression or invalid field values."""


class ScalarField:
    """Smooth scalar function of (x, y), vectorized over numpy arrays."""

    def __init__(self, fn: Callable, expr: Optional[str] = None,
                 grad_fn: Optional[Callable] = None):
        self._fn = fn
        self.expr = expr
        self._grad_fn = grad_fn

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = self._fn(x, y)
        return np.asarray(out, dtype=float) + np.zeros(np.broadcast(x, y).shape)

    def gradient(self, x, y, step: float = 1e-6):
        """Gradient, by central differences unless an exact one was supplied."""
        if self._grad_fn is not None:
            gx, gy = self._grad_fn(x, y)
            return np.asarray(gx, float), np.asarray(gy, float)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = (self(x + step, y) - self(x - step, y)) / (2.0 * step)
        gy = (self(x, y + step) - self(x, y - step)) / (2.0 * step)
        return gx, gy

    def __repr__(self):
        return f"ScalarField({self.expr!r})" if self.expr else "ScalarField(<callable>)"

    @classmethod
    def constant(cls, c: float) -> "ScalarField":
        c = float(c)
        return cls(lambda x, y: np.full(np.broadcast(x, y).shape, c), expr=repr(c))

    @classmethod
    def from_callable(cls, fn: Callable, expr: Optional[str] = None) -> "ScalarField":
        return cls(fn, expr=expr)

    @classmethod
    def parse(cls, text: str, polytope: Optional[Polytope] = None) -> "ScalarField":
        """Parse a closed-form expression into a field.

        Allowed: numbers, x, y, pi, e, + - * / ** and parentheses, the
        functions log/exp/sqrt/sin/cos/abs, and l1 .. lN when a polytope
        is given (1-based face index).
        """
        names = dict(_CONSTS)
        if polytope is not None:
            for k, f in enumerate(polytope.faces):
                names[f"l{k + 1}"] = f
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise FieldError(f"cannot parse expression {text!r}: {exc.msg}") from None
        _validate_expr(tree, set(names), text)

        env = {"__builtins__": {}}
        env.update(_FUNCS)
        env.update(_CONSTS)
        faces = tuple(polytope.faces) if polytope is not None else ()
        code = compile(tree, "<field>", "eval")

        def fn(x, y, _code=code, _env=env, _faces=faces):
            loc = {"x": x, "y": y}
            for k, f in enumerate(_faces):
                loc[f"l{k + 1}"] = f.value(x, y)
            return eval(_code, _env, loc)

        return cls(fn, expr=text)


_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.USub, ast.UAdd)


def _validate_expr(tree: ast.AST, names: set, text: str) -> None:
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Load)):
            continue
        if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            continue
        if isinstance(node, _ALLOWED_BINOPS + _ALLOWED_UNARY):
            continue
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
            continue
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            continue
        if isinstance(node, ast.Name):
            if node.id in ("x", "y") or node.id in names or node.id in _FUNCS:
                continue
            raise FieldError(f"unknown name {node.id!r} in expression {text!r}")
        if isinstance(node, ast.Call):
            if (isinstance(node.func, ast.Name) and node.func.id in _FUNCS
                    and not node.keywords):
                continue
            raise FieldError(f"function call not allowed in expression {text!r}")
        raise FieldError(f"disallowed syntax {type(node).__name__} in expression {text!r}")


def product_of_faces(P: Polytope) -> ScalarField:
    """The field prod_i l_i(x), positive inside P and zero on the boundary."""
    def fn(x, y):
        return np.prod(P.face_values(x, y), axis=0)
    return ScalarField(fn, expr="prod(l_i)")


def phi_field(P: Polytope, h: ScalarField) -> ScalarField:
    """phi = h * prod_i l_i, the right-hand-side weight det D2 u = 1/phi."""
    def fn(x, y):
        return h(x, y) * np.prod(P.face_values(x, y), axis=0)
    return ScalarField(fn, expr=f"h*prod(l_i) with h={h.expr}")
