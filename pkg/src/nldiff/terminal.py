"""Terminal payoffs: named builtins and expressions in ``x``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import expr as _expr
from .errors import ConfigError


@dataclass(frozen=True)
class Terminal:
    name: str
    fn: Callable

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=np.float64))


def square():
    return Terminal("square", lambda x: x * x)


def neg_square():
    return Terminal("neg_square", lambda x: -x * x)


def absolute():
    return Terminal("abs", np.abs)


def tanh():
    return Terminal("tanh", np.tanh)


def constant(c: float):
    c = float(c)
    return Terminal(f"constant({c!r})", lambda x: np.full(np.shape(x), c))


def indicator_leq(c: float = 0.0):
    """``1{x <= c}``: bounded and upper semicontinuous, one jump."""
    c = float(c)
    return Terminal(f"indicator_leq({c!r})", lambda x: (x <= c).astype(np.float64))


def indicator_between(lo: float, hi: float):
    """``1{lo <= x <= hi}``: bounded and upper semicontinuous, two jumps."""
    lo, hi = float(lo), float(hi)
    return Terminal(
        f"indicator_between({lo!r}, {hi!r})",
        lambda x: ((x >= lo) & (x <= hi)).astype(np.float64),
    )


def exp_capped(c: float = 3.0):
    """``exp(x)`` continued by its tangent line beyond ``c``: convex, linear growth."""
    c = float(c)
    ec = float(np.exp(c))

    def fn(x):
        return np.where(x <= c, np.exp(np.minimum(x, c)), ec * (1.0 + x - c))

    return Terminal(f"exp_capped({c!r})", fn)


def from_expr(text: str) -> Terminal:
    tree = _expr.parse(text)
    if "f" in _expr.variables(tree):
        raise ConfigError("terminal expression may only use the variable x")
    return Terminal(f"expr({_expr.to_text(tree)})", lambda x: _expr.evaluate_array(tree, 0.0, x))


BUILTINS = {
    "square": (square, 0),
    "neg_square": (neg_square, 0),
    "abs": (absolute, 0),
    "tanh": (tanh, 0),
    "constant": (constant, 1),
    "indicator_leq": (indicator_leq, 1),
    "indicator_between": (indicator_between, 2),
    "exp_capped": (exp_capped, 1),
}


def builtin(name: str, *args) -> Terminal:
    try:
        make, arity = BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown terminal builtin {name!r}") from None
    if name == "exp_capped" and not args:
        return make()
    if len(args) != arity:
        raise ConfigError(f"terminal {name!r} takes {arity} argument(s), got {len(args)}")
    return make(*args)


def is_convex(values: np.ndarray, rtol: float = 1e-12) -> bool:
    """Discrete convexity of samples on a uniform grid."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 3:
        return True
    d2 = v[2:] - 2 * v[1:-1] + v[:-2]
    return bool(np.all(d2 >= -rtol * (1 + np.abs(v).max())))


def is_nondecreasing(values: np.ndarray) -> bool:
    return bool(np.all(np.diff(values) >= 0))
