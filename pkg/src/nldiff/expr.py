"""Coefficient expressions in the two variables ``f`` (control) and ``x`` (state).

Grammar, loosest binding first::

    + -        left associative
    * /        left associative
    unary -
    ^          right associative
    atoms      number | f | x | func(args) | ( expr )

Functions: sin, cos, exp, sqrt, abs (one argument), min, max (one or two).

Parsing is a small Pratt parser.  Evaluation is vectorised over numpy arrays
so the same tree serves scalar lookups and whole-grid sweeps.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvalError, ExprSyntaxError, UnknownIdentifier

VARIABLES = ("f", "x")
UNARY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
BINARY_FUNCS = {"min": np.minimum, "max": np.maximum}
FUNCTIONS = {**UNARY_FUNCS, **BINARY_FUNCS}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]


# -- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)

_ATOM_START = frozenset({"number", "identifier", "(", "-"})
_AFTER_ATOM = frozenset({"+", "-", "*", "/", "^", ")", ",", "end"})


@dataclass(frozen=True)
class _Tok:
    kind: str  # "number", "ident", "op", "end"
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    byte = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {text[pos]!r} at offset {byte}",
                byte,
                _ATOM_START | _AFTER_ATOM,
            )
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), byte))
        byte += len(m.group().encode("utf-8"))
        pos = m.end()
    toks.append(_Tok("end", "", byte))
    return toks


# -- parser ------------------------------------------------------------------

# binding powers
_LBP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_RBP = 30


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, expected):
        t = self.tok
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprSyntaxError(
            f"unexpected {what} at offset {t.offset}; expected one of "
            + ", ".join(sorted(expected)),
            t.offset,
            expected,
        )

    def expect(self, text: str):
        if self.tok.text != text or self.tok.kind == "end":
            self.fail({text})
        return self.advance()

    def lbp(self, t: _Tok) -> int:
        if t.kind == "op":
            return _LBP.get(t.text, 0)
        return 0

    def expression(self, rbp: int = 0) -> Expr:
        left = self.nud(self.advance())
        while rbp < self.lbp(self.tok):
            t = self.advance()
            # ^ is right associative
            right = self.expression(_LBP[t.text] - (1 if t.text == "^" else 0))
            left = BinOp(t.text, left, right)
        return left

    def nud(self, t: _Tok) -> Expr:
        if t.kind == "number":
            value = float(t.text)
            if not math.isfinite(value):
                raise ExprSyntaxError(
                    f"numeric literal {t.text} overflows at offset {t.offset}",
                    t.offset,
                    {"number"},
                )
            return Num(value)
        if t.kind == "ident":
            if self.tok.text == "(" and self.tok.kind == "op":
                return self.call(t)
            if t.text in VARIABLES:
                return Var(t.text)
            if t.text in FUNCTIONS:
                self.fail({"("})
            raise UnknownIdentifier(t.text, t.offset)
        if t.kind == "op" and t.text == "-":
            return Neg(self.expression(_UNARY_RBP))
        if t.kind == "op" and t.text == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        self.i -= 1
        self.fail(_ATOM_START)

    def call(self, name_tok: _Tok) -> Expr:
        name = name_tok.text
        if name not in FUNCTIONS:
            raise UnknownIdentifier(name, name_tok.offset)
        self.expect("(")
        max_args = 2 if name in BINARY_FUNCS else 1
        args = [self.expression()]
        while self.tok.kind == "op" and self.tok.text == ",":
            if len(args) == max_args:
                raise ExprSyntaxError(
                    f"{name} takes at most {max_args} argument(s) at offset {self.tok.offset}",
                    self.tok.offset,
                    {")"},
                )
            self.advance()
            args.append(self.expression())
        self.expect(")")
        return Call(name, tuple(args))


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises ExprSyntaxError (with byte offset) or UnknownIdentifier.
    """
    p = _Parser(text)
    if p.tok.kind == "end":
        p.fail(_ATOM_START)
    tree = p.expression()
    if p.tok.kind != "end":
        p.fail(_AFTER_ATOM)
    return tree


# -- printing ----------------------------------------------------------------

def to_text(e: Expr) -> str:
    """Fully parenthesised source text; ``parse(to_text(e)) == e``."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_text(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_text(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def variables(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Neg):
        return variables(e.operand)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    return frozenset().union(*(variables(a) for a in e.args))


# -- evaluation --------------------------------------------------------------

def _power(base, expo):
    bad = (np.asarray(base) < 0) & (np.asarray(expo) != np.floor(expo))
    if np.any(bad):
        raise EvalError("negative base raised to a non-integer power")
    return np.power(base, expo)


def _ev(e: Expr, f, x):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        return f if e.name == "f" else x
    if isinstance(e, Neg):
        return -_ev(e.operand, f, x)
    if isinstance(e, BinOp):
        a = _ev(e.left, f, x)
        b = _ev(e.right, f, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
        return _power(a, b)
    args = [_ev(a, f, x) for a in e.args]
    if len(args) == 1 and e.name in BINARY_FUNCS:
        return args[0]
    return FUNCTIONS[e.name](*args)


def evaluate_array(e: Expr, f, x) -> np.ndarray:
    """Evaluate elementwise with numpy broadcasting over ``f`` and ``x``.

    Raises EvalError if any entry is NaN or infinite.
    """
    f = np.asarray(f, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(all="ignore"):
        out = np.broadcast_to(_ev(e, f, x), np.broadcast_shapes(f.shape, x.shape))
    if not np.all(np.isfinite(out)):
        idx = np.unravel_index(np.argmin(np.isfinite(out)), out.shape)
        fb, xb = np.broadcast_arrays(f, x)
        raise EvalError(
            f"non-finite value {float(out[idx])} of {to_text(e)} "
            f"at f={float(fb[idx])!r}, x={float(xb[idx])!r}"
        )
    return np.array(out, dtype=np.float64)


def evaluate(e: Expr, f: float, x: float) -> float:
    return float(evaluate_array(e, f, x))


eval = evaluate  # noqa: A001
