"""JSON run configuration.  Unknown keys anywhere are rejected."""
from __future__ import annotations

import json
import re
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import hjb, sde, verify
from . import terminal as _term
from .control import ControlSpec
from .errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ControlBlock(_Strict):
    f_values: Optional[List[float]] = None
    f_interval: Optional[Tuple[float, float]] = None
    n_f: int = Field(33, ge=1)
    b_expr: str
    a_expr: str
    conditions: List[str] = []
    check_samples: int = Field(101, ge=2)
    eps_cvx: float = Field(1e-6, ge=0)

    @model_validator(mode="after")
    def _one_control_set(self):
        if (self.f_values is None) == (self.f_interval is None):
            raise ValueError("give exactly one of f_values or f_interval")
        return self

    def build(self) -> ControlSpec:
        if self.f_interval is not None:
            lo, hi = self.f_interval
            return ControlSpec.from_interval(lo, hi, self.b_expr, self.a_expr, self.n_f,
                                             self.conditions)
        return ControlSpec.from_values(self.f_values, self.b_expr, self.a_expr, self.conditions)


class AutoCFLBlock(_Strict):
    auto_cfl: float = Field(0.9, gt=0, le=1)


class FixedBlock(_Strict):
    fixed: float = Field(gt=0)


class GridBlock(_Strict):
    x_min: float = -10.0
    x_max: float = 10.0
    nx: int = Field(401, ge=3)
    T: float = Field(1.0, gt=0)
    dt_policy: Union[AutoCFLBlock, FixedBlock] = AutoCFLBlock()
    boundary_mode: Literal["linear_extrapolation", "dirichlet_frozen"] = "linear_extrapolation"

    def build(self, nx: Optional[int] = None) -> hjb.GridSpec:
        if isinstance(self.dt_policy, FixedBlock):
            policy = hjb.FixedStep(self.dt_policy.fixed)
        else:
            policy = hjb.AutoCFL(self.dt_policy.auto_cfl)
        return hjb.GridSpec(self.x_min, self.x_max, nx or self.nx, self.T, policy,
                            self.boundary_mode)


_CALL_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_builtin(text: str) -> _term.Terminal:
    """``"square"`` or ``"indicator_leq(0.5)"`` style builtin payoffs."""
    m = _CALL_RE.match(text)
    if not m:
        raise ConfigError(f"malformed terminal builtin {text!r}")
    name, arglist = m.groups()
    args = []
    if arglist and arglist.strip():
        try:
            args = [float(a) for a in arglist.split(",")]
        except ValueError:
            raise ConfigError(f"terminal builtin arguments must be numbers: {text!r}") from None
    return _term.builtin(name, *args)


class TerminalBlock(_Strict):
    builtin: Optional[str] = None
    expr: Optional[str] = None

    @model_validator(mode="after")
    def _one_kind(self):
        if (self.builtin is None) == (self.expr is None):
            raise ValueError("give exactly one of builtin or expr")
        return self

    def build(self) -> _term.Terminal:
        if self.builtin is not None:
            return parse_builtin(self.builtin)
        return _term.from_expr(self.expr)


class ConstantPolicyBlock(_Strict):
    constant: float


class MCBlock(_Strict):
    x0: float = 0.0
    T: Optional[float] = Field(None, gt=0)
    n_steps: int = Field(200, ge=1)
    n_paths: int = Field(100_000, ge=1)
    seed: int = 0
    policy: Union[
        Literal["extremal_a_star", "extremal_b_star", "feedback"], ConstantPolicyBlock
    ] = "extremal_a_star"


class TolerancesBlock(_Strict):
    tol_pde: float = Field(5e-3, gt=0)
    tol_mc_bias: float = Field(2e-2, ge=0)


class VerifyBlock(_Strict):
    checks: List[str] = list(verify.CHECK_IDS)
    tolerances: TolerancesBlock = TolerancesBlock()
    semigroup_s: Optional[float] = Field(None, ge=0)
    semigroup_t: Optional[float] = Field(None, ge=0)
    smoothing_t: float = Field(0.25, ge=0)
    smoothing_payoff: Optional[str] = None

    @model_validator(mode="after")
    def _known_checks(self):
        unknown = set(self.checks) - set(verify.CHECK_IDS)
        if unknown:
            raise ValueError(f"unknown check id(s): {sorted(unknown)}")
        return self


class OutputBlock(_Strict):
    value_path: Optional[str] = None
    policy_path: Optional[str] = None
    report_path: Optional[str] = None
    ensemble_path: Optional[str] = None
    formats: List[Literal["csv", "json"]] = ["csv"]


class Config(_Strict):
    control: ControlBlock
    grid: GridBlock = GridBlock()
    terminal: TerminalBlock = TerminalBlock(builtin="square")
    mc: MCBlock = MCBlock()
    verify: VerifyBlock = VerifyBlock()
    output: OutputBlock = OutputBlock()


def load(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return from_dict(raw)


def from_dict(raw) -> Config:
    try:
        return Config.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"invalid config at {where or '<root>'}: {first['msg']}") from exc


def build_policy(cfg: Config, spec: ControlSpec, field=None) -> sde.Policy:
    p = cfg.mc.policy
    if isinstance(p, ConstantPolicyBlock):
        return sde.constant(spec, p.constant)
    if p == "extremal_a_star":
        return sde.ExtremalAStar()
    if p == "extremal_b_star":
        return sde.ExtremalBStar()
    if field is None:
        raise ConfigError("feedback policy needs a solved policy field")
    return sde.Feedback(field)


def build_plan(cfg: Config, workers: int = 1, seed: Optional[int] = None) -> verify.VerifyPlan:
    v = cfg.verify
    mc = verify.MCParams(
        cfg.mc.x0, cfg.mc.n_steps, cfg.mc.n_paths, cfg.mc.seed if seed is None else seed, workers
    )
    tol = verify.Tolerances(tol_pde=v.tolerances.tol_pde, tol_mc_bias=v.tolerances.tol_mc_bias)
    payoff = parse_builtin(v.smoothing_payoff) if v.smoothing_payoff else None
    return verify.VerifyPlan(tuple(v.checks), tol, mc, v.semigroup_s, v.semigroup_t,
                             v.smoothing_t, payoff)
