"""Numerical checks of the semigroup's structural properties.

Each ``check_*`` function returns a :class:`CheckRecord`.  ``passed`` is
``None`` when the payoff falls outside the property's hypotheses: such
records carry a note and never count as failures.  Missing *declared*
conditions raise :class:`HypothesisViolated` instead.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import control, hjb, sde
from . import terminal as _term
from .control import ControlSpec
from .errors import ConfigError, HypothesisViolated, PreconditionError
from .hjb import GridSpec

CHECK_IDS = (
    "semigroup",
    "linearization_convex",
    "linearization_increasing",
    "smoothing",
    "selection_attains",
    "moment_scaling",
    "convex_order",
)


@dataclass(frozen=True)
class Tolerances:
    tol_pde: float = 5e-3
    tol_mc_bias: float = 2e-2
    mc_sigmas: float = 3.0
    smoothing_ratio: float = 2.0
    smoothing_bound_factor: float = 1.1
    contrast_ratio: float = 1.8
    slope_range: tuple = (0.85, 1.15)


@dataclass
class CheckRecord:
    check_id: str
    inputs_digest: str
    metrics: dict
    tolerance: dict
    passed: Optional[bool]
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "inputs_digest": self.inputs_digest,
            "metrics": self.metrics,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "notes": self.notes,
        }


@dataclass
class VerificationReport:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(r.passed is not False for r in self.records)

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True) + "\n"


def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _inputs(check_id, spec, grid, **params):
    return _digest({
        "check": check_id,
        "spec": spec.digest(),
        "grid": grid.describe() if isinstance(grid, GridSpec) else grid,
        "params": params,
    })


def interior(n: int) -> slice:
    """Middle half of ``n`` nodes."""
    return slice(n // 4, n - n // 4)


def _psi_name(psi) -> str:
    return getattr(psi, "name", getattr(psi, "__name__", repr(psi)))


def _sup_interior(u, v) -> float:
    s = interior(len(u))
    return float(np.max(np.abs(np.asarray(u)[s] - np.asarray(v)[s])))


def _float_metrics(d: dict) -> dict:
    return {k: float(v) for k, v in d.items()}


# -- PDE-side checks ---------------------------------------------------------

def check_semigroup(spec, grid, psi, s, t, tol=Tolerances()) -> CheckRecord:
    """Compare ``T_{s+t} psi`` with ``T_s (T_t psi)`` on the interior nodes."""
    if s < 0 or t < 0:
        raise PreconditionError("s and t must be nonnegative")
    if s + t > grid.T * (1 + 1e-12):
        raise PreconditionError(f"s + t = {s + t} exceeds the grid horizon {grid.T}")
    xs = grid.xs
    sampled = hjb._sample_terminal(psi, xs)

    def apply(h, data):
        if h == 0:
            return data
        return hjb.solve_nonlinear(spec, grid.with_horizon(h), data).values[0]

    single = apply(s + t, sampled)
    chained = apply(s, apply(t, sampled))
    metric = _sup_interior(single, chained)
    return CheckRecord(
        "semigroup",
        _inputs("semigroup", spec, grid, psi=_psi_name(psi), s=s, t=t),
        _float_metrics({"sup_interior": metric}),
        {"tol_pde": tol.tol_pde},
        metric <= tol.tol_pde,
    )


def check_linearization_convex(spec, grid, psi, tol=Tolerances()) -> CheckRecord:
    """Nonlinear solve vs the linear equation with the maximal diffusion."""
    xs = grid.xs
    control.require(spec, "zero_drift", xs)
    sampled = hjb._sample_terminal(psi, xs)
    nonlinear = hjb.solve_nonlinear(spec, grid, sampled)
    linear = hjb.solve_linear(
        lambda x: np.zeros_like(x), lambda x: control.a_star(spec, x), grid, sampled
    )
    metric = _sup_interior(nonlinear.values[0], linear.values[0])
    centre = int(np.argmin(np.abs(xs - 0.5 * (grid.x_min + grid.x_max))))
    metrics = _float_metrics({
        "sup_interior": metric,
        "nonlinear_centre": nonlinear.values[0, centre],
        "linear_centre": linear.values[0, centre],
    })
    digest = _inputs("linearization_convex", spec, grid, psi=_psi_name(psi))
    tolerance = {"tol_pde": tol.tol_pde}
    if not _term.is_convex(sampled):
        return CheckRecord(
            "linearization_convex", digest, metrics, tolerance, None,
            "hypothesis not met (payoff not convex on the grid); equality not asserted",
        )
    return CheckRecord("linearization_convex", digest, metrics, tolerance, metric <= tol.tol_pde)


def check_linearization_increasing(spec, grid, psi, tol=Tolerances()) -> CheckRecord:
    """Nonlinear solve vs the linear equation with maximal drift, certain volatility."""
    xs = grid.xs
    control.require(spec, "certain_volatility", xs)
    sampled = hjb._sample_terminal(psi, xs)
    nonlinear = hjb.solve_nonlinear(spec, grid, sampled)
    linear = hjb.solve_linear(
        lambda x: control.b_star(spec, x), lambda x: control.a_star(spec, x), grid, sampled
    )
    metric = _sup_interior(nonlinear.values[0], linear.values[0])
    centre = int(np.argmin(np.abs(xs - 0.5 * (grid.x_min + grid.x_max))))
    metrics = _float_metrics({
        "sup_interior": metric,
        "nonlinear_centre": nonlinear.values[0, centre],
        "linear_centre": linear.values[0, centre],
        "centre_gap": abs(nonlinear.values[0, centre] - linear.values[0, centre]),
    })
    digest = _inputs("linearization_increasing", spec, grid, psi=_psi_name(psi))
    tolerance = {"tol_pde": tol.tol_pde}
    if not _term.is_nondecreasing(sampled):
        return CheckRecord(
            "linearization_increasing", digest, metrics, tolerance, None,
            "hypothesis not met (payoff not nondecreasing on the grid); equality not asserted",
        )
    return CheckRecord(
        "linearization_increasing", digest, metrics, tolerance, metric <= tol.tol_pde
    )


def _max_slope(values, dx) -> float:
    s = interior(len(values))
    return float(np.abs(np.diff(np.asarray(values)[s])).max() / dx)


def check_smoothing(spec, grid_coarse, grid_fine, t, psi=None, tol=Tolerances()) -> CheckRecord:
    """Slope of ``T_t psi`` for a discontinuous ``psi`` on two nested meshes.

    For ``t > 0`` the slope should stay bounded under refinement; at ``t = 0``
    it grows like ``1 / dx``, which is reported as the contrast.
    """
    control.require(spec, "ellipticity", grid_fine.xs)
    if (grid_coarse.x_min, grid_coarse.x_max) != (grid_fine.x_min, grid_fine.x_max):
        raise PreconditionError("coarse and fine grids must share their bounds")
    refine = (grid_fine.nx - 1) / (grid_coarse.nx - 1)
    if not 1.5 <= refine <= 2.5:
        raise PreconditionError(f"fine grid should have about twice the cells (ratio {refine:.3g})")
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    psi = psi if psi is not None else _term.indicator_leq(0.0)

    def slopes(h):
        out = []
        for g in (grid_coarse, grid_fine):
            data = hjb._sample_terminal(psi, g.xs)
            vals = data if h == 0 else hjb.solve_nonlinear(spec, g.with_horizon(h), data).values[0]
            out.append(_max_slope(vals, g.dx))
        return out

    c0, f0 = slopes(0.0)
    contrast = f0 / c0 if c0 > 0 else math.inf
    digest = _inputs("smoothing", spec, grid_fine.describe(), coarse=grid_coarse.nx, t=t,
                     psi=_psi_name(psi))
    tolerance = {
        "slope_ratio_max": tol.smoothing_ratio,
        "contrast_ratio_min": tol.contrast_ratio,
        "bound_factor": tol.smoothing_bound_factor,
    }
    if t == 0:
        return CheckRecord(
            "smoothing", digest,
            _float_metrics({"slope_coarse": c0, "slope_fine": f0, "slope_ratio": contrast}),
            tolerance, None, "t = 0: contrast case, no smoothing expected",
        )
    sc, sf = slopes(t)
    _, A = spec.coefficients(grid_fine.xs)
    a_min = float(A.min())
    bound = tol.smoothing_bound_factor / math.sqrt(2 * math.pi * a_min * t)
    ratio = sf / sc if sc > 0 else (1.0 if sf == 0 else math.inf)
    ok = ratio <= tol.smoothing_ratio and max(sc, sf) <= bound and contrast >= tol.contrast_ratio
    return CheckRecord(
        "smoothing", digest,
        _float_metrics({
            "slope_coarse": sc,
            "slope_fine": sf,
            "slope_ratio": ratio,
            "slope_bound": bound,
            "contrast_slope_coarse": c0,
            "contrast_slope_fine": f0,
            "contrast_ratio": contrast,
        }),
        tolerance, ok,
    )


# -- Monte Carlo checks ------------------------------------------------------

@dataclass(frozen=True)
class MCParams:
    x0: float = 0.0
    n_steps: int = 200
    n_paths: int = 100_000
    seed: int = 0
    workers: int = 1


def check_selection_attains(spec, grid, psi, mc=MCParams(), tol=Tolerances()) -> CheckRecord:
    """Simulate the extracted feedback policy and compare with ``v(0, x0)``."""
    if not grid.x_min < mc.x0 < grid.x_max:
        raise PreconditionError(f"x0={mc.x0} is not inside the grid")
    vf = hjb.solve_nonlinear(spec, grid, psi)
    pf = hjb.extract_policy(spec, grid, vf)
    ens = sde.simulate(spec, sde.Feedback(pf), mc.x0, grid.T, mc.n_steps, mc.n_paths,
                       mc.seed, workers=mc.workers)
    mean, se = sde.estimate(ens, psi)
    v0 = float(np.interp(mc.x0, vf.xs, vf.values[0]))
    metric = abs(mean - v0)
    band = tol.mc_sigmas * se + tol.tol_pde + tol.tol_mc_bias
    return CheckRecord(
        "selection_attains",
        _inputs("selection_attains", spec, grid, psi=_psi_name(psi), mc=mc.__dict__),
        _float_metrics({"pde_value": v0, "mc_mean": mean, "mc_stderr": se,
                        "abs_diff": metric, "band": band}),
        {"tol_pde": tol.tol_pde, "tol_mc_bias": tol.tol_mc_bias, "sigmas": tol.mc_sigmas},
        metric <= band,
    )


def default_gaps(T: float) -> list:
    return [T / 2**k for k in range(6, 0, -1)]


def check_moment_scaling(spec, policy, T, mc=MCParams(n_steps=64, n_paths=20_000), gaps=None,
                         tol=Tolerances()) -> CheckRecord:
    """Log-log slope of mean squared increments against the time gap."""
    control.require(spec, "ellipticity", [mc.x0])
    gaps = default_gaps(T) if gaps is None else list(gaps)
    if len(gaps) < 4:
        raise PreconditionError(f"need at least 4 gaps, got {len(gaps)}")
    dt = T / mc.n_steps
    lags = [int(round(g / dt)) for g in gaps]
    if any(lag < 1 or abs(lag * dt - g) > 1e-9 * T for lag, g in zip(lags, gaps)):
        raise PreconditionError("every gap must be a positive multiple of T / n_steps")
    ens = sde.simulate(spec, policy, mc.x0, T, mc.n_steps, mc.n_paths, mc.seed,
                       keep_paths=True, workers=mc.workers)
    X = ens.paths
    second = [float(np.mean((X[:, lag:] - X[:, :-lag]) ** 2)) for lag in lags]
    slope = float(np.polyfit(np.log(gaps), np.log(second), 1)[0])
    sup_sq = float(np.mean(np.max(np.abs(X), axis=1) ** 2))
    lo, hi = tol.slope_range
    metrics = {"slope": slope, "sup_second_moment": sup_sq}
    metrics.update({f"mean_sq_increment[{g:.6g}]": m for g, m in zip(gaps, second)})
    return CheckRecord(
        "moment_scaling",
        _inputs("moment_scaling", spec, {"T": T}, policy=sde.policy_name(policy),
                mc=mc.__dict__, gaps=gaps),
        _float_metrics(metrics),
        {"slope_min": lo, "slope_max": hi},
        lo <= slope <= hi and math.isfinite(sup_sq),
    )


def check_convex_order(spec, policies, payoffs, T, mc=MCParams(n_steps=50), tol=Tolerances()
                       ) -> CheckRecord:
    """Every (policy, convex payoff) pair is dominated by the maximal-diffusion law."""
    results = []
    for policy in policies:
        for psi in payoffs:
            r = sde.convex_order_check(spec, policy, psi, mc.x0, T, mc.n_steps, mc.n_paths,
                                       mc.seed, workers=mc.workers)
            results.append((sde.policy_name(policy), _psi_name(psi), r))
    margins = [
        r["rhs"] + tol.mc_sigmas * (r["lhs_stderr"] + r["rhs_stderr"]) - r["lhs"]
        for _, _, r in results
    ]
    failed = [f"{p}/{q}" for (p, q, r) in results if not r["pass"]]
    return CheckRecord(
        "convex_order",
        _inputs("convex_order", spec, {"T": T},
                policies=[p for p, _, _ in results], payoffs=[q for _, q, _ in results],
                mc=mc.__dict__),
        _float_metrics({"pairs": len(results), "min_margin": min(margins) if margins else 0.0}),
        {"sigmas": tol.mc_sigmas},
        not failed,
        "failed: " + ", ".join(failed) if failed else "",
    )


def spanning_constants(spec: ControlSpec, n: int = 5) -> list:
    """``n`` constant policies spread across the control grid."""
    idx = np.unique(np.round(np.linspace(0, len(spec.f_values) - 1, n)).astype(int))
    return [sde.Constant(spec.f_values[i]) for i in idx]


# -- orchestration -----------------------------------------------------------

@dataclass
class VerifyPlan:
    checks: tuple = CHECK_IDS
    tolerances: Tolerances = Tolerances()
    mc: MCParams = MCParams()
    semigroup_s: Optional[float] = None
    semigroup_t: Optional[float] = None
    smoothing_t: float = 0.25
    smoothing_payoff: Optional[object] = None


def _run_one(cid, spec, grid, psi, plan):
    tol = plan.tolerances
    if cid == "semigroup":
        s = plan.semigroup_s if plan.semigroup_s is not None else grid.T / 2
        t = plan.semigroup_t if plan.semigroup_t is not None else grid.T / 2
        return check_semigroup(spec, grid, psi, s, t, tol)
    if cid == "linearization_convex":
        return check_linearization_convex(spec, grid, psi, tol)
    if cid == "linearization_increasing":
        return check_linearization_increasing(spec, grid, psi, tol)
    if cid == "smoothing":
        coarse = grid.with_nx((grid.nx - 1) // 2 + 1)
        return check_smoothing(spec, coarse, grid, plan.smoothing_t, plan.smoothing_payoff, tol)
    if cid == "selection_attains":
        return check_selection_attains(spec, grid, psi, plan.mc, tol)
    if cid == "moment_scaling":
        mc = MCParams(plan.mc.x0, 64, min(plan.mc.n_paths, 20_000), plan.mc.seed, plan.mc.workers)
        return check_moment_scaling(spec, sde.ExtremalAStar(), grid.T, mc, tol=tol)
    # convex_order
    if "zero_drift" not in spec.declared:
        raise HypothesisViolated("convex order comparison needs a declared zero drift")
    psi_values = hjb._sample_terminal(psi, grid.xs)
    if not _term.is_convex(psi_values):
        return CheckRecord(
            "convex_order", _inputs("convex_order", spec, grid, psi=_psi_name(psi)), {}, {},
            None, "hypothesis not met (payoff not convex on the grid)",
        )
    return check_convex_order(spec, spanning_constants(spec), [psi], grid.T, plan.mc, tol)


def run(spec: ControlSpec, grid: GridSpec, psi, plan: VerifyPlan, timestamp=None
        ) -> VerificationReport:
    """Run the checks listed in ``plan`` in their canonical order."""
    unknown = set(plan.checks) - set(CHECK_IDS)
    if unknown:
        raise ConfigError(f"unknown check id(s): {sorted(unknown)}")
    records = []
    for cid in CHECK_IDS:
        if cid not in plan.checks:
            continue
        try:
            records.append(_run_one(cid, spec, grid, psi, plan))
        except HypothesisViolated as exc:
            records.append(CheckRecord(
                cid, _inputs(cid, spec, grid, psi=_psi_name(psi)), {}, {}, None,
                f"hypothesis not declared or not met: {exc}",
            ))
    if timestamp is None:
        timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    meta = {
        "spec_digest": spec.digest(),
        "spec": spec.describe(),
        "grid": grid.describe(),
        "payoff": _psi_name(psi),
        "seeds": [plan.mc.seed],
        "all_passed": all(r.passed is not False for r in records),
        "timestamp": timestamp,
    }
    return VerificationReport(records, meta)
