import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nldiff import expr
from nldiff.errors import EvalError, ExprSyntaxError, UnknownIdentifier
from nldiff.expr import BinOp, Call, Neg, Num, Var


def test_parse_examples():
    assert expr.parse("f*x") == BinOp("*", Var("f"), Var("x"))
    assert expr.parse("1 + f^2") == BinOp("+", Num(1.0), BinOp("^", Var("f"), Num(2.0)))


def test_unbalanced_paren_offset():
    with pytest.raises(ExprSyntaxError) as ei:
        expr.parse("2*(")
    assert ei.value.offset == 3
    assert ei.value.kind == "SyntaxError"


@pytest.mark.parametrize(
    "text, f, x, want",
    [
        ("f^2", 1.5, 0.0, 2.25),
        ("max(1, f*x)", 0.5, 1.0, 1.0),
        ("2^3^2", 0, 0, 512.0),
        ("-2^2", 0, 0, -4.0),
        ("(-2)^2", 0, 0, 4.0),
        ("8/2/2", 0, 0, 2.0),
        ("1 - 2 - 3", 0, 0, -4.0),
        ("min(f)", 3.0, 0, 3.0),
        ("abs(x) + sqrt(f)", 4.0, -1.5, 3.5),
        ("exp(0) + cos(0) + sin(0)", 0, 0, 2.0),
        ("1e-3 * x", 0, 2000.0, 2.0),
    ],
)
def test_eval_values(text, f, x, want):
    assert expr.eval(expr.parse(text), f, x) == pytest.approx(want, rel=1e-15)


def test_domain_errors():
    with pytest.raises(EvalError):
        expr.eval(expr.parse("sqrt(x)"), 0.0, -1.0)
    with pytest.raises(EvalError):
        expr.eval(expr.parse("x^0.5"), 0.0, -4.0)
    with pytest.raises(EvalError):
        expr.eval(expr.parse("1/x"), 0.0, 0.0)
    # integer exponents of negative bases are fine
    assert expr.eval(expr.parse("x^3"), 0.0, -2.0) == -8.0


@pytest.mark.parametrize(
    "text, offset",
    [("", 0), ("1 +", 3), ("(1", 2), ("1 2", 2), ("f x", 2), ("sin(", 4), ("max(1,2,3)", 7),
     ("sin()", 4), ("3 $ 4", 2)],
)
def test_syntax_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as ei:
        expr.parse(text)
    assert ei.value.offset == offset


def test_unknown_identifiers():
    with pytest.raises(UnknownIdentifier) as ei:
        expr.parse("f + y")
    assert ei.value.name == "y" and ei.value.offset == 4
    with pytest.raises(UnknownIdentifier):
        expr.parse("tan(x)")


def test_offsets_are_bytes():
    # "é" is two bytes in UTF-8
    with pytest.raises(ExprSyntaxError) as ei:
        expr.parse("1 + é")
    assert ei.value.offset == 4


def test_array_evaluation_broadcasts():
    e = expr.parse("f * x + 1")
    fs = np.array([1.0, 2.0])[:, None]
    xs = np.array([0.0, 1.0, 2.0])[None, :]
    np.testing.assert_array_equal(expr.evaluate_array(e, fs, xs), fs * xs + 1)


def test_variables():
    assert expr.variables(expr.parse("sin(x) + 2")) == {"x"}
    assert expr.variables(expr.parse("3")) == frozenset()


# -- round trip -------------------------------------------------------------

_leaf = st.one_of(
    st.sampled_from([Var("f"), Var("x")]),
    st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(Num),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: BinOp(*t)),
        st.tuples(st.sampled_from(sorted(expr.UNARY_FUNCS)), children).map(
            lambda t: Call(t[0], (t[1],))),
        st.tuples(st.sampled_from(["min", "max"]), children, children).map(
            lambda t: Call(t[0], (t[1], t[2]))),
    )


trees = st.recursive(_leaf, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_round_trip(tree):
    assert expr.parse(expr.to_text(tree)) == tree


def _reference(e, f, x):
    """Plain-math evaluation used as an oracle for simple trees."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return f if e.name == "f" else x
    if isinstance(e, Neg):
        return -_reference(e.operand, f, x)
    a, b = _reference(e.left, f, x), _reference(e.right, f, x)
    return {"+": a + b, "-": a - b, "*": a * b}[e.op]


_arith = st.recursive(
    st.one_of(st.sampled_from([Var("f"), Var("x")]), st.integers(0, 9).map(float).map(Num)),
    lambda c: st.one_of(c.map(Neg), st.tuples(st.sampled_from("+-*"), c, c).map(
        lambda t: BinOp(*t))),
    max_leaves=8,
)


@settings(max_examples=200, deadline=None)
@given(_arith, st.floats(-3, 3), st.floats(-3, 3))
def test_eval_matches_reference(tree, f, x):
    want = _reference(tree, f, x)
    got = expr.eval(tree, f, x)
    assert math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-9)
