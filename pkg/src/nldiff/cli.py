"""Command line entry point: ``nldiff {check-spec,solve,simulate,verify}``.

Exit codes: 0 success, 1 a verification check failed, 2 configuration or
parse error, 3 numerical error.  Errors are reported on stderr as one JSON
line with at least ``error`` and ``message`` keys.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as _config
from . import control, errors, hjb, sde, verify

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_NUMERIC = (errors.UnstableStep, errors.NonFinite, errors.EvalError)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _derived(path: Path, tag: str) -> Path:
    return path.with_name(f"{path.stem}.{tag}{path.suffix}")


def _write_field(field, path: Path) -> None:
    if path.suffix == ".json":
        field.to_json(path)
    else:
        field.to_csv(path)


def cmd_check_spec(cfg, args) -> int:
    spec = cfg.control.build()
    records = control.check_conditions(
        spec, (cfg.grid.x_min, cfg.grid.x_max), cfg.control.check_samples, cfg.control.eps_cvx
    )
    out = []
    for r in records:
        d = r.to_dict()
        d["declared"] = r.name in spec.declared
        out.append(d)
    text = _dump({"spec_digest": spec.digest(), "conditions": out})
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(cfg, args) -> int:
    spec = cfg.control.build()
    grid = cfg.grid.build(args.resolution)
    psi = cfg.terminal.build()
    vf = hjb.solve_nonlinear(spec, grid, psi)
    pf = hjb.extract_policy(spec, grid, vf)
    x0 = cfg.mc.x0
    summary = {
        "value_at_x0": float(np.interp(x0, vf.xs, vf.values[0])),
        "x0": x0,
        "dt": vf.metadata["dt"],
        "n_times": len(vf.times),
        "nx": grid.nx,
        "outputs": [],
    }
    value_path = args.out or cfg.output.value_path
    targets = []
    if value_path:
        value_path = Path(value_path)
        targets.append((vf, value_path))
        policy_path = Path(cfg.output.policy_path) if cfg.output.policy_path else _derived(
            value_path, "policy")
        targets.append((pf, policy_path))
        if "json" in cfg.output.formats and value_path.suffix != ".json" and not args.out:
            targets.append((vf, value_path.with_suffix(".json")))
    if args.linear:
        lin = hjb.solve_linear(lambda x: control.b_star(spec, x),
                               lambda x: control.a_star(spec, x), grid, psi)
        summary["linear_value_at_x0"] = float(np.interp(x0, lin.xs, lin.values[0]))
        summary["sup_distance_nonlinear_linear"] = float(np.abs(lin.values[0] - vf.values[0]).max())
        if value_path:
            targets.append((lin, _derived(value_path, "linear")))
    for field, path in targets:
        _write_field(field, path)
        summary["outputs"].append(str(path))
    sys.stdout.write(_dump(summary))
    return EXIT_OK


def cmd_simulate(cfg, args) -> int:
    spec = cfg.control.build()
    T = cfg.mc.T or cfg.grid.T
    field = None
    if cfg.mc.policy == "feedback":
        grid = cfg.grid.build(args.resolution).with_horizon(T)
        vf = hjb.solve_nonlinear(spec, grid, cfg.terminal.build())
        field = hjb.extract_policy(spec, grid, vf)
    policy = _config.build_policy(cfg, spec, field)
    seed = cfg.mc.seed if args.seed is None else args.seed
    ens = sde.simulate(spec, policy, cfg.mc.x0, T, cfg.mc.n_steps, cfg.mc.n_paths, seed,
                       workers=args.threads)
    mean, se = sde.estimate(ens, cfg.terminal.build())
    ens_path = args.out or cfg.output.ensemble_path
    if ens_path:
        ens.to_csv(ens_path)
    sys.stdout.write(_dump({
        "mean": mean,
        "stderr": se,
        "policy": sde.policy_name(policy),
        "x0": cfg.mc.x0,
        "T": T,
        "n_steps": cfg.mc.n_steps,
        "n_paths": cfg.mc.n_paths,
        "seed": seed,
    }))
    return EXIT_OK


def cmd_verify(cfg, args) -> int:
    spec = cfg.control.build()
    grid = cfg.grid.build(args.resolution)
    psi = cfg.terminal.build()
    plan = _config.build_plan(cfg, workers=args.threads, seed=args.seed)
    report = verify.run(spec, grid, psi, plan)
    text = report.to_json()
    path = args.out or cfg.output.report_path
    if path:
        Path(path).write_text(text, encoding="utf-8")
        for r in report.records:
            status = {True: "PASS", False: "FAIL", None: "NOTE"}[r.passed]
            sys.stdout.write(f"{status} {r.check_id} {r.notes}".rstrip() + "\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK if report.all_passed else EXIT_FAILED


COMMANDS = {
    "check-spec": cmd_check_spec,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors become the same one-line JSON as every other error."""

    def error(self, message):
        _report_error(errors.ConfigError(f"{self.prog}: {message}"))
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="nldiff",
        description="Sublinear semigroups of one-dimensional diffusions with uncertain coefficients.",
    )
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=None, help="primary output path (.csv or .json)")
        p.add_argument("--seed", type=int, default=None, help="override mc.seed")
        p.add_argument("--threads", type=int, default=1, help="max simulation workers")
        p.add_argument("--resolution", type=int, default=None, metavar="NX",
                       help="override grid.nx")
        if name == "solve":
            p.add_argument("--linear", action="store_true",
                           help="also solve the linear equation with b*, a*")
    return ap


def _report_error(exc: errors.NldiffError) -> None:
    payload = {"error": exc.kind, "message": str(exc)}
    if isinstance(exc, errors.ExprSyntaxError):
        payload["offset"] = exc.offset
        payload["expected"] = sorted(exc.expected)
    if isinstance(exc, errors.UnknownIdentifier):
        payload["offset"] = exc.offset
        payload["identifier"] = exc.name
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.threads < 1:
        _report_error(errors.ConfigError("--threads must be at least 1"))
        return EXIT_CONFIG
    try:
        cfg = _config.load(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"mc": cfg.mc.model_copy(update={"seed": args.seed})})
        return COMMANDS[args.command](cfg, args)
    except _NUMERIC as exc:
        _report_error(exc)
        return EXIT_NUMERIC
    except errors.NldiffError as exc:
        _report_error(exc)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())
