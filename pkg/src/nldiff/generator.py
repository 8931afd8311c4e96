"""The nonlinear generator ``G(x, p, q) = max_f  b(f,x) p + a(f,x) q / 2``."""
from __future__ import annotations

import numpy as np

from .control import ControlSpec


def candidates(spec: ControlSpec, x: float, p: float, q: float) -> np.ndarray:
    """Value of ``b(f,x) p + a(f,x) q / 2`` for every control, in control order."""
    B, A = spec.coefficients([x])
    return B[:, 0] * p + 0.5 * A[:, 0] * q


def evaluate_G(spec: ControlSpec, x: float, p: float, q: float) -> float:
    return float(candidates(spec, x, p, q).max())


def argmax_control(spec: ControlSpec, x: float, p: float, q: float) -> float:
    """Maximising control; ties go to the smallest control value."""
    return spec.f_values[int(np.argmax(candidates(spec, x, p, q)))]
