"""A small, safe expression evaluator for initial and boundary fields.

Expressions are ordinary arithmetic in the variables ``x``, ``z`` (vertical
coordinate, up), ``depth`` (distance below the top boundary) and ``t``, with
the constants ``pi`` and ``e``, user constants, and a fixed set of numpy
functions.  Parsing uses :mod:`ast`; anything outside the whitelist is
rejected before evaluation.
"""
from __future__ import annotations

import ast

import numpy as np

FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "arctan": np.arctan, "atan": np.arctan,
    "sinh": np.sinh, "cosh": np.cosh, "min": np.minimum, "max": np.maximum,
    "where": np.where, "heaviside": lambda v: np.heaviside(v, 0.5),
}
CONSTANTS = {"pi": np.pi, "e": np.e}
VARIABLES = ("x", "z", "t", "depth")

_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
            ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.BoolOp, ast.And, ast.Or,
            ast.IfExp)


class Expression:
    """Compiled expression; call with ``x, z, t`` (and optionally ``top`` for ``depth``)."""

    def __init__(self, text: str, constants: dict | None = None):
        self.text = str(text).strip()
        self.constants = dict(constants or {})
        tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        names = set(FUNCTIONS) | set(CONSTANTS) | set(VARIABLES) | set(self.constants)
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise ValueError(f"unsupported syntax {type(node).__name__} in {self.text!r}")
            if isinstance(node, ast.Name) and node.id not in names:
                raise ValueError(f"unknown name {node.id!r} in {self.text!r}")
            if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                                   and node.func.id in FUNCTIONS):
                raise ValueError(f"only whitelisted functions may be called in {self.text!r}")
        self._code = compile(tree, "<expression>", "eval")

    def __call__(self, x, z, t=0.0, top=1.0):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        ns = {"__builtins__": {}}
        ns.update(FUNCTIONS)
        ns.update(CONSTANTS)
        ns.update(self.constants)
        ns.update(x=x, z=z, t=t, depth=top - z)
        val = eval(self._code, ns)  # noqa: S307 - the tree was whitelisted above
        return np.broadcast_to(np.asarray(val, dtype=float), np.broadcast(x, z).shape)

    def __repr__(self):
        return f"Expression({self.text!r})"


def is_number(text) -> bool:
    try:
        float(text)
        return True
    except (TypeError, ValueError):
        return False
