"""Numerics for one-dimensional diffusions with a compact set of uncertain coefficients.

The main entry points are :func:`nldiff.hjb.solve_nonlinear` for the sublinear
semigroup, :func:`nldiff.sde.simulate` for controlled Euler paths and
:func:`nldiff.verify.run` for the numerical checks.
"""
from .control import ControlSpec, a_star, b_star, check_conditions
from .errors import NldiffError
from .hjb import GridSpec, extract_policy, semigroup_apply, solve_linear, solve_nonlinear

__all__ = [
    "ControlSpec",
    "GridSpec",
    "NldiffError",
    "a_star",
    "b_star",
    "check_conditions",
    "extract_policy",
    "semigroup_apply",
    "solve_linear",
    "solve_nonlinear",
]
__version__ = "0.1.0"
