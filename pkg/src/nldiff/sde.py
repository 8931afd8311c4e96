"""Euler-Maruyama simulation of the controlled diffusion under a policy.

    Y_{k+1} = Y_k + b(f_k, Y_k) dt + sqrt(a(f_k, Y_k) dt) xi_k

The normals ``xi_k`` come from per-path counter-based streams (see
:mod:`nldiff.rng`), so two simulations with the same seed share their noise
path by path.  That is what makes the convex-order comparisons use common
random numbers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import expr as _expr
from . import rng
from .control import ControlSpec
from .errors import ConfigError, HypothesisViolated, NegativeVariance, PreconditionError
from .hjb import PolicyField


@dataclass(frozen=True)
class Constant:
    f: float


@dataclass(frozen=True)
class Feedback:
    field: PolicyField


@dataclass(frozen=True)
class ExtremalAStar:
    """At each state use a control maximising the diffusion coefficient."""


@dataclass(frozen=True)
class ExtremalBStar:
    """At each state use a control maximising the drift."""


Policy = Union[Constant, Feedback, ExtremalAStar, ExtremalBStar]


def constant(spec: ControlSpec, f: float) -> Constant:
    """Constant policy snapped onto the control grid; rejects off-grid values."""
    fs = spec.f_array
    k = int(np.argmin(np.abs(fs - f)))
    if not math.isclose(fs[k], f, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigError(f"control {f} is not in the control set")
    return Constant(float(fs[k]))


def policy_name(policy: Policy) -> str:
    if isinstance(policy, Constant):
        return f"constant({policy.f!r})"
    if isinstance(policy, Feedback):
        return "feedback"
    if isinstance(policy, ExtremalAStar):
        return "extremal_a_star"
    return "extremal_b_star"


@dataclass
class PathEnsemble:
    x0: float
    T: float
    n_steps: int
    n_paths: int
    seed: int
    terminal: np.ndarray
    paths: Optional[np.ndarray] = None  # (n_paths, n_steps + 1) when kept

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "terminal"])
            for i, v in enumerate(self.terminal):
                w.writerow([i, repr(float(v))])


def _coef(e, f, y):
    """Evaluate ``e`` on (controls, states) without touching unused variables."""
    used = _expr.variables(e)
    fa = f if "f" in used else np.float64(0.0)
    ya = y if "x" in used else np.float64(0.0)
    out = _expr.evaluate_array(e, fa, ya)
    return np.broadcast_to(out, np.broadcast_shapes(np.shape(f), np.shape(y)))


def _extremal(spec: ControlSpec, key_expr, y):
    fs = spec.f_array[:, None]
    vals = _coef(key_expr, fs, y[None, :])
    return spec.f_array[np.argmax(vals, axis=0)]


def _controls(spec: ControlSpec, policy: Policy, t: float, y: np.ndarray) -> np.ndarray:
    if isinstance(policy, Constant):
        return np.full_like(y, policy.f)
    if isinstance(policy, Feedback):
        return policy.field.lookup(t, y)
    if isinstance(policy, ExtremalAStar):
        return _extremal(spec, spec.a_expr, y)
    if isinstance(policy, ExtremalBStar):
        return _extremal(spec, spec.b_expr, y)
    raise TypeError(f"unknown policy {policy!r}")


def _simulate_chunk(spec, policy, x0, T, n_steps, seed, lo, hi, keep_paths):
    keys = rng.path_keys(seed, np.arange(lo, hi))
    dt = T / n_steps
    sdt = math.sqrt(dt)
    y = np.full(hi - lo, float(x0))
    paths = np.empty((hi - lo, n_steps + 1)) if keep_paths else None
    if keep_paths:
        paths[:, 0] = y
    for k in range(n_steps):
        f = _controls(spec, policy, k * dt, y)
        b = _coef(spec.b_expr, f, y)
        a = _coef(spec.a_expr, f, y)
        if np.any(a < 0):
            j = int(np.argmin(a))
            raise NegativeVariance(
                f"a = {float(a[j])} < 0 at state x={float(y[j])}, f={float(f[j])}, "
                f"step {k}, path {lo + j}"
            )
        y = y + b * dt + np.sqrt(a) * sdt * rng.normals(keys, k)
        if keep_paths:
            paths[:, k + 1] = y
    return y, paths


def simulate(
    spec: ControlSpec,
    policy: Policy,
    x0: float,
    T: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    keep_paths: bool = False,
    workers: int = 1,
    chunk: int = 50_000,
) -> PathEnsemble:
    """Simulate ``n_paths`` Euler paths from ``x0`` over ``[0, T]``.

    The result depends only on the arguments other than ``workers`` and
    ``chunk``; path ``i`` always uses stream ``i`` of ``seed``.
    """
    if n_steps < 1:
        raise PreconditionError(f"n_steps must be at least 1, got {n_steps}")
    if n_paths < 1:
        raise PreconditionError(f"n_paths must be at least 1, got {n_paths}")
    if not T > 0:
        raise PreconditionError(f"horizon T must be positive, got {T}")
    bounds = [(lo, min(lo + chunk, n_paths)) for lo in range(0, n_paths, chunk)]

    def run(b):
        return _simulate_chunk(spec, policy, x0, T, n_steps, seed, b[0], b[1], keep_paths)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    terminal = np.concatenate([p[0] for p in parts])
    paths = np.concatenate([p[1] for p in parts]) if keep_paths else None
    return PathEnsemble(float(x0), float(T), n_steps, n_paths, seed, terminal, paths)


def estimate(ens: PathEnsemble, psi) -> tuple:
    """Sample mean of ``psi(Y_T)`` and its standard error (ddof=1)."""
    vals = np.asarray(psi(ens.terminal), dtype=np.float64)
    if vals.size == 0:
        raise PreconditionError("empty ensemble")
    if not np.all(np.isfinite(vals)):
        raise _expr.EvalError("payoff is not finite on the ensemble")
    mean = float(vals.mean())
    if vals.size == 1:
        return mean, math.inf
    return mean, float(vals.std(ddof=1) / math.sqrt(vals.size))


def convex_order_check(
    spec: ControlSpec,
    policy: Policy,
    psi,
    x0: float,
    T: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> dict:
    """Compare ``E[psi(Y_T)]`` under ``policy`` with the maximal-diffusion law.

    Both sides share the seed, hence the noise.  Passes when
    ``lhs <= rhs + 3 (stderr_lhs + stderr_rhs)``.  ``psi`` must be convex;
    that is the caller's responsibility.
    """
    if "zero_drift" not in spec.declared:
        raise HypothesisViolated("convex order comparison needs a declared zero drift")
    args = (x0, T, n_steps, n_paths, seed)
    lhs, lhs_se = estimate(simulate(spec, policy, *args, workers=workers), psi)
    rhs, rhs_se = estimate(simulate(spec, ExtremalAStar(), *args, workers=workers), psi)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "lhs_stderr": lhs_se,
        "rhs_stderr": rhs_se,
        "pass": bool(lhs <= rhs + 3 * (lhs_se + rhs_se)),
    }
