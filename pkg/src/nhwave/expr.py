"""Restricted arithmetic expressions over a single variable.

Potentials and time coefficients are given in configs as strings such as
``"x**2"`` or ``"2 + pow(abs(sin(t)), 0.5)"``.  They are parsed with
:mod:`ast` and evaluated against numpy, never with :func:`eval`.
"""

from __future__ import annotations

import ast
import operator
from typing import Callable

import numpy as np

FUNCTIONS: dict[str, Callable] = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "pow": np.power,
    "sqrt": np.sqrt,
    "log": np.log,
    "tanh": np.tanh,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: np.power,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


class ExpressionError(ValueError):
    pass


def _check(node: ast.AST, var: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, var)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left, var)
        _check(node.right, var)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.operand, var)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            name = getattr(node.func, "id", "?")
            raise ExpressionError(
                f"unknown function {name!r}; allowed: {sorted(FUNCTIONS)}")
        if node.keywords:
            raise ExpressionError("keyword arguments not allowed")
        for arg in node.args:
            _check(arg, var)
    elif isinstance(node, ast.Name):
        if node.id != var and node.id not in CONSTANTS:
            raise ExpressionError(f"unknown name {node.id!r} (variable is {var!r})")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"constant {node.value!r} not allowed")
    else:
        raise ExpressionError(f"syntax {type(node).__name__} not allowed")


def _evaluate(node: ast.AST, env: dict):
    if isinstance(node, ast.Expression):
        return _evaluate(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_evaluate(node.operand, env))
    if isinstance(node, ast.Call):
        return FUNCTIONS[node.func.id](*[_evaluate(a, env) for a in node.args])
    if isinstance(node, ast.Name):
        return env[node.id]
    return node.value


class Expression:
    """A compiled expression ``f(var)`` evaluated elementwise on arrays."""

    def __init__(self, text: str, var: str = "x"):
        self.text = str(text).strip()
        self.var = var
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.text!r}: {exc.msg}") from None
        _check(tree, var)
        self._tree = tree

    def __call__(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        env = dict(CONSTANTS)
        env[self.var] = values
        with np.errstate(all="ignore"):
            out = _evaluate(self._tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), values.shape).copy()

    def __repr__(self) -> str:
        return f"Expression({self.text!r}, var={self.var!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Expression) and (self.text, self.var) == (other.text, other.var)

    def __hash__(self) -> int:
        return hash((self.text, self.var))
