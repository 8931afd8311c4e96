"""Explicit monotone finite-difference solver for the terminal-value problem

    dv/dt + max_f [ b(f,x) dv/dx + a(f,x) d2v/dx2 / 2 ] = 0,   v(T, .) = psi

on a truncated interval, plus its linear (single coefficient pair) analogue.

Per control the first derivative is upwinded (forward difference where the
drift is nonnegative, backward otherwise) and the second derivative is
centred; the update takes the max over controls of the one-step operators.
Under the step bound of :func:`cfl_dt` every one-step operator has
nonnegative weights, so the scheme is monotone.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .control import ControlSpec
from .errors import ConfigError, GridMismatch, HypothesisViolated, NonFinite, UnstableStep

SCHEME_ID = "explicit-upwind-bellman-v1"
BOUNDARY_MODES = ("linear_extrapolation", "dirichlet_frozen")


@dataclass(frozen=True)
class AutoCFL:
    safety: float = 0.9

    def __post_init__(self):
        if not 0 < self.safety <= 1:
            raise ConfigError(f"CFL safety must lie in (0, 1], got {self.safety}")


@dataclass(frozen=True)
class FixedStep:
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"fixed dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    nx: int
    T: float
    dt_policy: Union[AutoCFL, FixedStep] = field(default_factory=AutoCFL)
    boundary_mode: str = "linear_extrapolation"

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ConfigError(f"x_min must be below x_max ({self.x_min} >= {self.x_max})")
        if self.nx < 3:
            raise ConfigError(f"nx must be at least 3, got {self.nx}")
        if not self.T > 0:
            raise ConfigError(f"horizon T must be positive, got {self.T}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ConfigError(f"unknown boundary mode {self.boundary_mode!r}")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    def with_horizon(self, T: float) -> "GridSpec":
        return GridSpec(self.x_min, self.x_max, self.nx, T, self.dt_policy, self.boundary_mode)

    def with_nx(self, nx: int) -> "GridSpec":
        return GridSpec(self.x_min, self.x_max, nx, self.T, self.dt_policy, self.boundary_mode)

    def describe(self) -> dict:
        if isinstance(self.dt_policy, AutoCFL):
            policy = {"auto_cfl": self.dt_policy.safety}
        else:
            policy = {"fixed": self.dt_policy.dt}
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "nx": self.nx,
            "T": self.T,
            "dt_policy": policy,
            "boundary_mode": self.boundary_mode,
        }


@dataclass
class ValueField:
    times: np.ndarray
    xs: np.ndarray
    values: np.ndarray  # (len(times), len(xs)); row i is v(times[i], .)
    metadata: dict

    def at(self, t: float, x: float) -> float:
        i = int(np.argmin(np.abs(self.times - t)))
        return float(np.interp(x, self.xs, self.values[i]))

    def to_json(self, path) -> None:
        _write_json(path, {
            "times": self.times.tolist(),
            "xs": self.xs.tolist(),
            "values": self.values.tolist(),
            "metadata": self.metadata,
        })

    def to_csv(self, path) -> None:
        _write_csv(path, self.xs, self.values[::-1])

    @classmethod
    def from_json(cls, path) -> "ValueField":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(np.array(d["times"]), np.array(d["xs"]), np.array(d["values"]), d["metadata"])


@dataclass
class PolicyField:
    times: np.ndarray
    xs: np.ndarray
    f_star: np.ndarray  # (len(times), len(xs)); control used on [times[i], times[i+1])
    metadata: dict

    def lookup(self, t, x):
        """Nearest-node control at time ``t`` for the state(s) ``x``."""
        i = int(np.argmin(np.abs(self.times - t)))
        j = _nearest_index(self.xs, x)
        return self.f_star[i, j]

    def to_json(self, path) -> None:
        _write_json(path, {
            "times": self.times.tolist(),
            "xs": self.xs.tolist(),
            "f_star": self.f_star.tolist(),
            "metadata": self.metadata,
        })

    def to_csv(self, path) -> None:
        _write_csv(path, self.xs, self.f_star[::-1])


def _nearest_index(xs: np.ndarray, x) -> np.ndarray:
    # xs is uniform or at least sorted; searchsorted + neighbour compare
    x = np.asarray(x, dtype=np.float64)
    j = np.clip(np.searchsorted(xs, x), 1, len(xs) - 1)
    left = xs[j - 1]
    right = xs[j]
    return np.where(np.abs(x - left) <= np.abs(right - x), j - 1, j)


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def _write_csv(path, xs, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([repr(float(x)) for x in xs])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


# -- step size ---------------------------------------------------------------

def cfl_bound(a_max: float, b_max: float, dx: float, safety: float = 1.0) -> float:
    """Largest monotone step ``safety * dx^2 / (a_max + dx * b_max)``.

    Returns ``inf`` when there is no dynamics at all.
    """
    denom = a_max + dx * b_max
    if denom <= 0:
        return math.inf
    return safety * dx * dx / denom


def _coefficient_bounds(B, A):
    return float(A.max()), float(np.abs(B).max())


def _step_count(T: float, dt: float) -> int:
    if math.isinf(dt):
        return 1
    m = T / dt
    # tolerate dt that divides T up to rounding
    return max(1, int(math.ceil(m - 1e-9 * m)))


def cfl_dt(spec: ControlSpec, grid: GridSpec) -> float:
    """Time step for ``grid``: the CFL bound, or the fixed step once validated."""
    B, A = spec.coefficients(grid.xs)
    return _dt_from_coefficients(B, A, grid)


def _dt_from_coefficients(B, A, grid: GridSpec) -> float:
    a_max, b_max = _coefficient_bounds(B, A)
    policy = grid.dt_policy
    if isinstance(policy, AutoCFL):
        return cfl_bound(a_max, b_max, grid.dx, policy.safety)
    bound = cfl_bound(a_max, b_max, grid.dx, 1.0)
    if policy.dt > bound * (1 + 1e-12):
        raise UnstableStep(
            f"fixed dt={policy.dt} exceeds the monotonicity bound {bound:.6g} "
            f"(dx={grid.dx}, a_max={a_max}, b_max={b_max})"
        )
    return policy.dt


# -- sweep -------------------------------------------------------------------

def _differences(v: np.ndarray, dx: float):
    """Forward, backward and second differences with linearly extrapolated ghosts."""
    ve = np.empty(len(v) + 2)
    ve[1:-1] = v
    ve[0] = 2 * v[0] - v[1]
    ve[-1] = 2 * v[-1] - v[-2]
    fwd = (ve[2:] - ve[1:-1]) / dx
    bwd = (ve[1:-1] - ve[:-2]) / dx
    second = (ve[2:] - 2 * ve[1:-1] + ve[:-2]) / (dx * dx)
    return fwd, bwd, second


def _increments(Bp, Bm, A, v, dx):
    fwd, bwd, second = _differences(v, dx)
    return Bp * fwd + Bm * bwd + 0.5 * A * second


def _sweep(B, A, grid: GridSpec, terminal: np.ndarray, scheme_note: str):
    dt_max = _dt_from_coefficients(B, A, grid)
    M = _step_count(grid.T, dt_max)
    dt = grid.T / M
    xs = grid.xs
    dx = grid.dx
    Bp = np.maximum(B, 0.0)
    Bm = np.minimum(B, 0.0)
    values = np.empty((M + 1, grid.nx))
    values[M] = terminal
    frozen = grid.boundary_mode == "dirichlet_frozen"
    for i in range(M - 1, -1, -1):
        v = values[i + 1]
        row = v + dt * _increments(Bp, Bm, A, v, dx).max(axis=0)
        if frozen:
            row[0] = terminal[0]
            row[-1] = terminal[-1]
        values[i] = row
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(values), axis=1))[-1])
        raise NonFinite(f"non-finite value in row {bad} (t={bad * dt:.6g})")
    times = np.linspace(0.0, grid.T, M + 1)
    meta = {
        "scheme": f"{SCHEME_ID}/{scheme_note}",
        "dt": dt,
        "boundary_mode": grid.boundary_mode,
        "grid": grid.describe(),
    }
    return ValueField(times, xs, values, meta)


def _sample_terminal(terminal, xs) -> np.ndarray:
    if callable(terminal):
        out = np.asarray(terminal(xs), dtype=np.float64)
    else:
        out = np.asarray(terminal, dtype=np.float64)
    out = np.broadcast_to(out, xs.shape).astype(np.float64)
    if not np.all(np.isfinite(out)):
        raise NonFinite("terminal data is not finite on the grid")
    return out


def solve_nonlinear(spec: ControlSpec, grid: GridSpec, terminal) -> ValueField:
    """Backward sweep of the nonlinear equation from ``terminal`` at time T.

    ``terminal`` is either sampled on ``grid.xs`` or a vectorised callable.
    """
    xs = grid.xs
    B, A = spec.coefficients(xs)
    if "ellipticity" in spec.declared and np.any(A <= 0):
        raise HypothesisViolated("ellipticity declared but a vanishes on the grid")
    vf = _sweep(B, A, grid, _sample_terminal(terminal, xs), "nonlinear")
    vf.metadata["spec_digest"] = spec.digest()
    return vf


def solve_linear(
    drift: Callable, diffusion: Callable, grid: GridSpec, terminal
) -> ValueField:
    """Same scheme for one coefficient pair; ``drift``/``diffusion`` map xs -> arrays."""
    xs = grid.xs
    B = np.broadcast_to(np.asarray(drift(xs), dtype=np.float64), xs.shape)[None, :]
    A = np.broadcast_to(np.asarray(diffusion(xs), dtype=np.float64), xs.shape)[None, :]
    if not (np.all(np.isfinite(B)) and np.all(np.isfinite(A))):
        raise NonFinite("linear coefficients are not finite on the grid")
    if np.any(A < 0):
        raise ConfigError("diffusion coefficient must be nonnegative")
    return _sweep(B, A, grid, _sample_terminal(terminal, xs), "linear")


def semigroup_apply(spec: ControlSpec, grid: GridSpec, terminal, t: float):
    """Numerical ``T_t psi`` on ``grid.xs``.

    Returns ``(values, snap)`` where ``snap`` is the distance between ``t`` and
    the lattice time actually used.
    """
    if t < 0 or t > grid.T * (1 + 1e-12):
        raise ConfigError(f"t={t} outside [0, {grid.T}]")
    vf = solve_nonlinear(spec, grid, terminal)
    target = grid.T - t
    i = int(np.argmin(np.abs(vf.times - target)))
    return vf.values[i].copy(), float(abs(vf.times[i] - target))


def extract_policy(spec: ControlSpec, grid: GridSpec, vf: ValueField) -> PolicyField:
    """Per-node maximising control, using the derivatives of the sweep.

    Row ``i`` holds the control applied on ``[t_i, t_{i+1})``, i.e. the argmax
    computed from row ``i + 1``; the last row is computed from the terminal data.
    """
    xs = grid.xs
    if vf.values.shape[1] != len(xs) or not np.array_equal(vf.xs, xs):
        raise GridMismatch("value field and grid have different space nodes")
    if abs(vf.times[-1] - grid.T) > 1e-12 * max(1.0, grid.T) or vf.times[0] != 0:
        raise GridMismatch("value field and grid have different horizons")
    if vf.metadata.get("boundary_mode", grid.boundary_mode) != grid.boundary_mode:
        raise GridMismatch("value field was solved with another boundary mode")
    B, A = spec.coefficients(xs)
    Bp = np.maximum(B, 0.0)
    Bm = np.minimum(B, 0.0)
    M = len(vf.times) - 1
    idx = np.empty((M + 1, len(xs)), dtype=np.intp)
    for i in range(M + 1):
        src = vf.values[min(i + 1, M)]
        idx[i] = np.argmax(_increments(Bp, Bm, A, src, grid.dx), axis=0)
    f_star = spec.f_array[idx]
    meta = dict(vf.metadata, policy="argmax-lowest-index")
    return PolicyField(vf.times.copy(), xs.copy(), f_star, meta)
