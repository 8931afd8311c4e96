import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nldiff import control
from nldiff.control import ControlSpec
from nldiff.errors import ConfigError, HypothesisViolated, NegativeVariance


def brute_max(fn, fs):
    return max(fn(f) for f in fs)


def test_a_star_examples():
    s = ControlSpec.from_interval(1, 2, "0", "f^2")
    assert control.a_star(s, 7.0) == 4.0
    s = ControlSpec.from_interval(1, 2, "0", "1")
    assert control.a_star(s, -3.3) == 1.0
    s = ControlSpec.from_interval(1, 2, "0", "f*(1 + 0.1*sin(x)^2)")
    assert control.a_star(s, 0.0) == pytest.approx(
        brute_max(lambda f: f * (1 + 0.1 * math.sin(0) ** 2), s.f_values)) == 2.0


def test_b_star_examples():
    s = ControlSpec.from_interval(-1, 1, "f*x", "1")
    assert control.b_star(s, -3.0) == 3.0
    s = ControlSpec.from_interval(-1, 1, "f", "1")
    assert control.b_star(s, 12.0) == 1.0
    s = ControlSpec.from_interval(0, 2, "f*sin(x)", "1")
    want = brute_max(lambda f: f * math.sin(math.pi / 2), s.f_values)
    assert control.b_star(s, math.pi / 2) == pytest.approx(want) == pytest.approx(2.0)


def test_theta_set_examples():
    s = ControlSpec.from_values([0, 1], "f", "1 + f^2")
    assert control.theta_set(s, 5.0) == [(0.0, 1.0), (1.0, 2.0)]
    s = ControlSpec.from_values([2], "f*x", "f")
    assert control.theta_set(s, 1.0) == [(2.0, 2.0)]
    s = ControlSpec.from_values([1, 2, 3], "0", "f")
    assert control.theta_set(s, 0.0) == [(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)]


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(-2, 2), st.floats(0.1, 3))
def test_stars_dominate_every_control(x, lo, width):
    s = ControlSpec.from_interval(lo, lo + width, "f*cos(x) - f^2", "1 + f^2*abs(sin(x))", 9)
    a, b = control.a_star(s, x), control.b_star(s, x)
    for f in s.f_values:
        assert a >= 1 + f * f * abs(math.sin(x)) - 1e-12
        assert b >= f * math.cos(x) - f * f - 1e-12
    assert len(control.theta_set(s, x)) == len(s.f_values)


def test_array_x_matches_scalar():
    s = ControlSpec.from_interval(-1, 1, "f*x", "1 + f*x^2", 5)
    xs = np.linspace(-2, 2, 7)
    np.testing.assert_array_equal(control.b_star(s, xs), [control.b_star(s, x) for x in xs])


def test_construction_errors():
    with pytest.raises(ConfigError):
        ControlSpec.from_values([], "0", "1")
    with pytest.raises(ConfigError):
        ControlSpec.from_values([2, 1], "0", "1")
    with pytest.raises(ConfigError):
        ControlSpec.from_interval(2, 1, "0", "1")
    with pytest.raises(ConfigError):
        ControlSpec.from_values([1], "0", "1", declared=["convexityy"])
    with pytest.raises(NegativeVariance):
        ControlSpec.from_values([-1, 1], "0", "f").coefficients([0.0])


def test_digest_is_stable_and_sensitive():
    a = ControlSpec.from_interval(1, 4, "0", "f")
    b = ControlSpec.from_interval(1, 4, "0", "f")
    c = ControlSpec.from_interval(1, 4, "0", "2*f")
    assert a.digest() == b.digest() != c.digest()


def _by_name(records):
    return {r.name: r for r in records}


def test_conditions_gheat():
    s = ControlSpec.from_interval(1, 4, "0", "f")
    r = _by_name(control.check_conditions(s, (-10, 10), 101))
    assert r["ellipticity"].passed and r["ellipticity"].estimated_constant == 1.0
    # (b^2 + |a|) / (1 + x^2) is maximal at x = 0 with f = 4
    assert r["linear_growth"].passed and r["linear_growth"].estimated_constant == 4.0
    assert r["convexity"].passed
    assert r["zero_drift"].passed
    assert not r["certain_volatility"].passed
    assert r["lipschitz"].passed and r["local_holder"].passed
    assert r["continuity"].passed and r["continuity_in_control"].passed


def test_convexity_witness_two_points():
    s = ControlSpec.from_values([1, 4], "0", "f")
    r = _by_name(control.check_conditions(s, (-1, 1), 5, eps_cvx=1e-9))["convexity"]
    assert not r.passed
    assert r.witness["midpoint"] == [0.0, 2.5]
    assert r.witness["distance"] == pytest.approx(1.5)


def test_linear_growth_violation():
    s = ControlSpec.from_values([1], "x^2", "1")
    r = _by_name(control.check_conditions(s, (-10, 10), 101))["linear_growth"]
    assert not r.passed
    assert r.witness is not None


def test_lipschitz_violation_and_holder_pass():
    # sqrt|x| is 1/2-Holder but not Lipschitz at 0
    s = ControlSpec.from_values([1], "sqrt(abs(x))", "abs(x)")
    r = _by_name(control.check_conditions(s, (-1, 1), 201))
    assert not r["lipschitz"].passed
    assert r["local_holder"].passed


def test_discontinuity_flagged():
    s = ControlSpec.from_values([1], "0", "1 + max(0, x/abs(x))")
    r = _by_name(control.check_conditions(s, (-1, 1.1), 200))
    assert not r["continuity"].passed


def test_conditions_are_deterministic():
    s = ControlSpec.from_interval(-1, 1, "f*sin(x)", "1 + f^2")
    a = [r.to_dict() for r in control.check_conditions(s, (-3, 3), 51)]
    b = [r.to_dict() for r in control.check_conditions(s, (-3, 3), 51)]
    assert a == b


def test_require():
    s = ControlSpec.from_interval(1, 4, "0", "f", declared=["zero_drift", "ellipticity"])
    control.require(s, "zero_drift", [0.0, 1.0])
    with pytest.raises(HypothesisViolated):
        control.require(s, "certain_volatility", [0.0])
    lying = ControlSpec.from_interval(1, 4, "f", "f", declared=["zero_drift"])
    with pytest.raises(HypothesisViolated):
        control.require(lying, "zero_drift", [0.0])
