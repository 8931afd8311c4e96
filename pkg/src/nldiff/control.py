"""Control set, coefficient maps and sampled checks of the structural conditions.

The compact control set is represented by a finite ascending grid
``f_values``; every supremum over controls is an exact max over that grid.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expr as _expr
from .errors import ConfigError, HypothesisViolated, NegativeVariance

FLAGS = frozenset(
    {
        "convexity",
        "linear_growth",
        "lipschitz",
        "local_holder",
        "ellipticity",
        "continuity_in_control",
        "certain_volatility",
        "zero_drift",
    }
)

DEFAULT_NF = 33


def _as_expr(e):
    return _expr.parse(e) if isinstance(e, str) else e


@dataclass(frozen=True)
class ControlSpec:
    f_values: tuple
    b_expr: _expr.Expr
    a_expr: _expr.Expr
    declared: frozenset = frozenset()
    f_interval: Optional[tuple] = None

    def __post_init__(self):
        vals = tuple(float(v) for v in self.f_values)
        if not vals:
            raise ConfigError("control set is empty")
        if not all(np.isfinite(vals)):
            raise ConfigError("control values must be finite")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("control values must be strictly ascending")
        unknown = set(self.declared) - FLAGS
        if unknown:
            raise ConfigError(f"unknown condition flag(s): {sorted(unknown)}")
        object.__setattr__(self, "f_values", vals)
        object.__setattr__(self, "b_expr", _as_expr(self.b_expr))
        object.__setattr__(self, "a_expr", _as_expr(self.a_expr))
        object.__setattr__(self, "declared", frozenset(self.declared))

    @classmethod
    def from_interval(cls, lo, hi, b, a, n_f=DEFAULT_NF, declared=()):
        if not hi > lo:
            if hi == lo:
                return cls((lo,), b, a, frozenset(declared), (float(lo), float(hi)))
            raise ConfigError(f"empty control interval [{lo}, {hi}]")
        if n_f < 2:
            raise ConfigError("an interval needs at least 2 control nodes")
        vals = tuple(np.linspace(lo, hi, n_f))
        return cls(vals, b, a, frozenset(declared), (float(lo), float(hi)))

    @classmethod
    def from_values(cls, values, b, a, declared=()):
        return cls(tuple(values), b, a, frozenset(declared))

    @property
    def f_array(self) -> np.ndarray:
        return np.asarray(self.f_values)

    def describe(self) -> dict:
        return {
            "f_values": list(self.f_values),
            "f_interval": list(self.f_interval) if self.f_interval else None,
            "b_expr": _expr.to_text(self.b_expr),
            "a_expr": _expr.to_text(self.a_expr),
            "declared": sorted(self.declared),
        }

    def digest(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def coefficients(self, xs):
        """Return ``(B, A)`` of shape ``(len(f_values), len(xs))``."""
        f = self.f_array[:, None]
        x = np.asarray(xs, dtype=np.float64)[None, :]
        B = _expr.evaluate_array(self.b_expr, f, x)
        A = _expr.evaluate_array(self.a_expr, f, x)
        if np.any(A < 0):
            k, j = np.unravel_index(np.argmin(A), A.shape)
            raise NegativeVariance(
                f"a(f, x) = {A[k, j]} < 0 at f={self.f_values[k]}, x={float(x[0, j])}"
            )
        return B, A


def _sup(spec: ControlSpec, e, x):
    x = np.asarray(x, dtype=np.float64)
    vals = _expr.evaluate_array(e, spec.f_array.reshape((-1,) + (1,) * x.ndim), x)
    out = vals.max(axis=0)
    return float(out) if out.ndim == 0 else out


def a_star(spec: ControlSpec, x):
    """Largest diffusion coefficient over the control grid (scalar or array x)."""
    return _sup(spec, spec.a_expr, x)


def b_star(spec: ControlSpec, x):
    """Largest drift over the control grid (scalar or array x)."""
    return _sup(spec, spec.b_expr, x)


def theta_set(spec: ControlSpec, x: float) -> list:
    """Admissible ``(drift, diffusion)`` pairs at state ``x``, in control order."""
    B, A = spec.coefficients([x])
    return [(float(b), float(a)) for b, a in zip(B[:, 0], A[:, 0])]


def require(spec: ControlSpec, flag: str, xs) -> None:
    """Raise HypothesisViolated unless ``flag`` is declared and holds on ``xs``."""
    if flag not in spec.declared:
        raise HypothesisViolated(f"condition {flag!r} is not declared")
    B, A = spec.coefficients(xs)
    if flag == "zero_drift" and np.any(B != 0):
        raise HypothesisViolated("zero_drift declared but b is nonzero on the grid")
    if flag == "certain_volatility" and np.any(A != A[0]):
        raise HypothesisViolated("certain_volatility declared but a depends on f")
    if flag == "ellipticity" and np.any(A <= 0):
        raise HypothesisViolated("ellipticity declared but a vanishes on the grid")


# -- condition checks --------------------------------------------------------

@dataclass
class ConditionRecord:
    name: str
    passed: bool
    estimated_constant: float
    witness: Optional[dict] = None
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "estimated_constant": self.estimated_constant,
            "witness": self.witness,
            "notes": self.notes,
        }


# A sampled quantity whose fitted constant grows by more than this factor from
# the inner to the outer half of the domain (or from coarse to fine pairs) is
# reported as violating the condition.
GROWTH_FACTOR = 1.5
REFINE_FACTOR = 2.0
JUMP_RATIO = 0.9


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def _record(name, ok, const, witness, notes=""):
    return ConditionRecord(name, bool(ok), float(const), None if ok else _plain(witness), notes)


def _ellipticity(spec, fs, xs, A):
    k, j = np.unravel_index(np.argmin(A), A.shape)
    amin = A[k, j]
    return _record("ellipticity", amin > 0, amin, {"f": fs[k], "x": xs[j]})


def _linear_growth(spec, fs, xs, B, A):
    ratio = (B**2 + np.abs(A)) / (1 + xs**2)[None, :]
    const = ratio.max()
    scale = np.abs(xs).max()
    inner = np.abs(xs) <= scale / 2
    if inner.all() or not inner.any():
        return _record("linear_growth", True, const, None, "single scale sampled")
    c_in = ratio[:, inner].max()
    outer = ratio[:, ~inner]
    k, j = np.unravel_index(np.argmax(outer), outer.shape)
    c_out = outer[k, j]
    ok = c_out <= GROWTH_FACTOR * c_in + 1e-12
    return _record(
        "linear_growth", ok, const,
        {"f": fs[k], "x": xs[~inner][j], "inner_constant": c_in, "outer_constant": c_out},
    )


def _pair_quotients(vals_b, vals_sa, xs, idx_a, idx_b, power, use_b):
    dx = np.abs(xs[idx_b] - xs[idx_a]) ** power
    num = np.abs(vals_sa[:, idx_b] - vals_sa[:, idx_a])
    if use_b:
        num = num + np.abs(vals_b[:, idx_b] - vals_b[:, idx_a])
    return num / dx[None, :]


def _spatial_modulus(name, fs, xs, B, A, power, use_b, coarse_stride, two_scale):
    sa = np.sqrt(A)
    n = len(xs)
    ci = np.arange(0, n, coarse_stride)
    ia, ib = np.triu_indices(len(ci), k=1)
    q_coarse = _pair_quotients(B, sa, xs, ci[ia], ci[ib], power, use_b)
    c_coarse = q_coarse.max() if q_coarse.size else 0.0
    q_fine = _pair_quotients(B, sa, xs, np.arange(n - 1), np.arange(1, n), power, use_b)
    k, j = np.unravel_index(np.argmax(q_fine), q_fine.shape)
    c_fine = q_fine[k, j]
    const = max(c_coarse, c_fine)
    witness = {"f": fs[k], "x": xs[j], "y": xs[j + 1], "quotient": c_fine}
    if coarse_stride > 1 and c_fine > REFINE_FACTOR * c_coarse + 1e-12:
        return _record(name, False, const, witness, "quotients grow under refinement")
    if two_scale:
        scale = np.abs(xs).max()
        inner = np.abs(xs) <= scale / 2
        if inner.any() and not inner.all():
            both_inner = inner[:-1] & inner[1:]
            c_in = q_fine[:, both_inner].max() if both_inner.any() else 0.0
            if c_fine > GROWTH_FACTOR * c_in + 1e-12:
                masked = np.where(both_inner[None, :], -np.inf, q_fine)
                k, j = np.unravel_index(np.argmax(masked), masked.shape)
                if masked[k, j] > GROWTH_FACTOR * c_in + 1e-12:
                    witness = {"f": fs[k], "x": xs[j], "y": xs[j + 1], "quotient": masked[k, j]}
                    return _record(name, False, const, witness, "constant grows with |x|")
    return _record(name, True, const, None)


def _jump_ratio(values, axis):
    """Max adjacent increment on the full sampling vs on every other sample."""
    fine = np.abs(np.diff(values, axis=axis)).max(initial=0.0)
    coarse_vals = np.take(values, np.arange(0, values.shape[axis], 2), axis=axis)
    coarse = np.abs(np.diff(coarse_vals, axis=axis)).max(initial=0.0)
    return fine, coarse


def _continuity(spec, fs, xs, B, A):
    worst = 0.0
    witness = None
    for label, vals in (("b", B), ("a", A)):
        for axis, var in ((1, "x"), (0, "f")):
            if vals.shape[axis] < 3 or (var == "f" and spec.f_interval is None):
                continue
            fine, coarse = _jump_ratio(vals, axis)
            scale = 1e-9 * (1 + np.abs(vals).max())
            if fine > scale and fine > JUMP_RATIO * coarse:
                witness = {"coefficient": label, "direction": var, "increment": fine}
            worst = max(worst, fine)
    return _record("continuity", witness is None, worst, witness)


def _continuity_in_control(spec, xs):
    if spec.f_interval is None or len(spec.f_values) < 2:
        return _record("continuity_in_control", True, 0.0, None, "finite control set")
    lo, hi = spec.f_interval
    fs = np.linspace(lo, hi, 2 * (len(spec.f_values) - 1) + 1)
    A = _expr.evaluate_array(spec.a_expr, fs[:, None], xs[None, :])
    fine, coarse = _jump_ratio(A, 0)
    scale = 1e-9 * (1 + np.abs(A).max())
    ok = fine <= scale or fine <= JUMP_RATIO * coarse
    k, j = np.unravel_index(np.argmax(np.abs(np.diff(A, axis=0))), (len(fs) - 1, len(xs)))
    return _record(
        "continuity_in_control", ok, fine,
        {"f": fs[k], "f_next": fs[k + 1], "x": xs[j], "increment": fine},
    )


def _point_segment_distance(p, a, b):
    """Distances from points ``p`` (m, 2) to segments ``a``-``b`` (s, 2): (m, s)."""
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    rel = p[:, None, :] - a[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(dd > 0, np.einsum("msk,sk->ms", rel, d) / dd, 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * d[None, :, :]
    return np.linalg.norm(p[:, None, :] - proj, axis=2)


def _convexity(spec, fs, xs, B, A, eps_rel):
    worst = 0.0
    witness = None
    n = B.shape[0]
    if n == 1:
        return _record("convexity", True, 0.0, None, "singleton control set")
    ia, ib = np.triu_indices(n, k=1)
    for j, x in enumerate(xs):
        pts = np.column_stack([B[:, j], A[:, j]])
        diam = np.linalg.norm(pts[ia] - pts[ib], axis=1).max()
        eps = eps_rel * diam
        mids = 0.5 * (pts[ia] + pts[ib])
        if spec.f_interval is not None:
            dist = _point_segment_distance(mids, pts[:-1], pts[1:]).min(axis=1)
        else:
            dist = np.linalg.norm(mids[:, None, :] - pts[None, :, :], axis=2).min(axis=1)
        m = int(np.argmax(dist))
        if dist[m] > worst:
            worst = dist[m]
        if dist[m] > eps and witness is None:
            witness = {"x": x, "midpoint": [mids[m, 0], mids[m, 1]], "distance": dist[m]}
    return _record("convexity", witness is None, worst, witness)


def _zero_drift(fs, xs, B):
    k, j = np.unravel_index(np.argmax(np.abs(B)), B.shape)
    return _record("zero_drift", B[k, j] == 0, abs(B[k, j]), {"f": fs[k], "x": xs[j]})


def _certain_volatility(fs, xs, A):
    spread = A.max(axis=0) - A.min(axis=0)
    j = int(np.argmax(spread))
    return _record("certain_volatility", spread[j] == 0, spread[j], {"x": xs[j]})


def check_conditions(spec: ControlSpec, x_domain, n_samples: int, eps_cvx: float = 1e-6):
    """Sampled certificates for the structural conditions on ``x_domain``.

    ``eps_cvx`` is relative to the diameter of the sampled admissible set.
    The returned list is deterministic given its arguments.
    """
    if n_samples < 2:
        raise ConfigError("n_samples must be at least 2")
    lo, hi = map(float, x_domain)
    if not hi > lo:
        raise ConfigError(f"empty check domain [{lo}, {hi}]")
    xs = np.linspace(lo, hi, n_samples)
    fs = spec.f_array
    B, A = spec.coefficients(xs)
    stride = max(1, (n_samples - 1) // 16)
    return [
        _convexity(spec, fs, xs, B, A, eps_cvx),
        _linear_growth(spec, fs, xs, B, A),
        _continuity(spec, fs, xs, B, A),
        _spatial_modulus("lipschitz", fs, xs, B, A, 1.0, True, stride, True),
        _spatial_modulus("local_holder", fs, xs, B, A, 0.5, False, stride, False),
        _ellipticity(spec, fs, xs, A),
        _continuity_in_control(spec, xs),
        _zero_drift(fs, xs, B),
        _certain_volatility(fs, xs, A),
    ]
