"""Turn expression text from a spec (forcing terms, initial profiles) into numpy callables."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
import sympy
from sympy.parsing.sympy_parser import (
    convert_xor,
    implicit_multiplication_application,
    parse_expr,
    standard_transformations,
)

_TRANSFORMS = standard_transformations + (convert_xor, implicit_multiplication_application)
_ALIASES = {"π": "pi", "²": "**2", "·": "*", "−": "-"}


class ExpressionError(ValueError):
    pass


def _clean(text: str) -> str:
    for a, b in _ALIASES.items():
        text = text.replace(a, b)
    return text.strip()


@lru_cache(maxsize=256)
def parse_symbolic(text: str, variables: tuple[str, ...] = ("x", "y")) -> sympy.Expr:
    local = {v: sympy.Symbol(v, real=True) for v in variables}
    local["pi"] = sympy.pi
    local["e"] = sympy.E
    try:
        return parse_expr(_clean(text), local_dict=local, transformations=_TRANSFORMS)
    except Exception as exc:  # sympy raises a zoo of exception types
        raise ExpressionError(f"cannot parse expression {text!r}: {exc}") from None


def compile_expression(
    text: str, variables: tuple[str, ...] = ("x", "y"), constants: Mapping[str, float] | None = None
) -> Callable[..., np.ndarray]:
    """Vectorised callable f(*variables) for ``text``; named constants are substituted first."""
    expr = parse_symbolic(text, tuple(variables))
    if constants:
        expr = expr.subs({sympy.Symbol(k, real=True): v for k, v in constants.items()})
        expr = expr.subs({sympy.Symbol(k): v for k, v in constants.items()})
    syms = [sympy.Symbol(v, real=True) for v in variables]
    free = {s.name for s in expr.free_symbols} - set(variables)
    if free:
        raise ExpressionError(f"expression {text!r} has unbound names {sorted(free)}")
    fn = sympy.lambdify(syms, expr, modules="numpy")

    def evaluate(*args):
        shape = np.broadcast(*args).shape if args else ()
        return np.broadcast_to(np.asarray(fn(*args), dtype=np.float64), shape).copy()

    return evaluate


def manufacture_poisson(exact: str) -> tuple[Callable, Callable]:
    """Exact solution u(x, y) and the forcing f = -(u_xx + u_yy) that produces it."""
    x, y = sympy.Symbol("x", real=True), sympy.Symbol("y", real=True)
    u = parse_symbolic(exact, ("x", "y"))
    f = sympy.simplify(-(sympy.diff(u, x, 2) + sympy.diff(u, y, 2)))
    u_fn = sympy.lambdify([x, y], u, modules="numpy")
    f_fn = sympy.lambdify([x, y], f, modules="numpy")

    def wrap(fn):
        return lambda X, Y: np.broadcast_to(np.asarray(fn(X, Y), dtype=np.float64), np.broadcast(X, Y).shape).copy()

    return wrap(u_fn), wrap(f_fn)
