import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

from nldiff.control import ControlSpec
from nldiff.hjb import GridSpec

GHEAT_FLAGS = ("convexity", "linear_growth", "lipschitz", "local_holder", "ellipticity",
               "continuity_in_control", "zero_drift")


def gheat_spec(**kw):
    return ControlSpec.from_interval(1.0, 4.0, "0", "f", declared=GHEAT_FLAGS, **kw)


def drift_spec():
    """a = 1, b = f with f in [-1, 1]."""
    return ControlSpec.from_interval(
        -1.0, 1.0, "f", "1",
        declared=("convexity", "linear_growth", "lipschitz", "ellipticity",
                  "continuity_in_control", "certain_volatility"),
    )


def gaussian_expectation(psi, mean, var, n=80):
    """E[psi(mean + sqrt(var) Z)] by Gauss-Hermite quadrature (probabilists' weights)."""
    z, w = hermegauss(n)
    return float(np.sum(w * psi(mean + math.sqrt(var) * z)) / math.sqrt(2 * math.pi))


@pytest.fixture
def gheat():
    return gheat_spec()


@pytest.fixture
def ref_grid():
    return GridSpec(-10.0, 10.0, 401, 1.0)


@pytest.fixture
def coarse_grid():
    return GridSpec(-10.0, 10.0, 201, 1.0)


# (number, title, passed, detail) tuples filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num}. {title}: {detail}")
