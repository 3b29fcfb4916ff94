"""Command line front end.

    switchscope analyze SYSTEM.json [--json OUT|-] [--find-input]
    switchscope simulate SYSTEM.json --initial MODE:x1,x2 [--policy ...]
                 [--input ...] [--horizon T] [--dt H] [--out BASE]
    switchscope observe SYSTEM.json --trace BASE [--epsilon E] [--json OUT|-]
    switchscope validate SYSTEM.json --trace BASE

Exit codes for ``analyze``: 0 when the verdict is Detectable or
Observable, 2 for NotDetectable, 3 for Unknown.  Malformed input exits 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .model import SwitchingSystem, SystemFormatError, load_system
from .observer import ObserverConfig, run_observer
from .report import build_report
from .simulator import (
    ExponentialInput,
    RandomDwell,
    Schedule,
    SimulationError,
    ZeroInput,
    export_trace,
    load_trace,
    simulate,
    validate_execution,
)
from .subspaces import REL_TOL

__all__ = ["main"]

_EXIT = {"Detectable": 0, "Observable": 0, "NotDetectable": 2, "Unknown": 3}


def _tolerance(args) -> float:
    if args.tol is not None:
        return args.tol
    env = os.environ.get("SWITCHSCOPE_TOL")
    if env:
        try:
            return float(env)
        except ValueError:
            raise SystemExit(f"SWITCHSCOPE_TOL is not a number: {env!r}")
    return REL_TOL


def _load(path: str) -> SwitchingSystem:
    try:
        with open(path) as fh:
            return load_system(fh.read())
    except OSError as exc:
        raise SystemExit(f"cannot read {path}: {exc}")
    except (SystemFormatError, json.JSONDecodeError) as exc:
        raise SystemExit(f"bad system file {path}: {exc}")


def _emit_json(doc: dict, dest: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if dest == "-":
        print(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text + "\n")


def _parse_initial(spec: str, system: SwitchingSystem) -> tuple[str, np.ndarray]:
    if ":" not in spec:
        raise SystemExit("--initial wants MODE:x1,x2,...")
    label, _, coords = spec.partition(":")
    if label not in system.labels:
        raise SystemExit(f"unknown initial mode {label!r}")
    try:
        x0 = np.array([float(v) for v in coords.split(",")], dtype=float)
    except ValueError:
        raise SystemExit(f"bad initial state {coords!r}")
    n = system.mode(label).n
    if x0.shape != (n,):
        raise SystemExit(f"mode {label!r} has dimension {n}, got {x0.shape[0]} coordinates")
    return label, x0


def _parse_policy(spec: str):
    head, _, rest = spec.partition(":")
    if head == "random":
        parts = rest.split(",") if rest else []
        if len(parts) not in (2, 3):
            raise SystemExit("--policy random wants random:MIN,MAX[,SEED]")
        try:
            lo, hi = float(parts[0]), float(parts[1])
            seed = int(parts[2]) if len(parts) == 3 else 0
        except ValueError:
            raise SystemExit(f"bad random policy {spec!r}")
        return RandomDwell(lo, hi, seed)
    if head == "schedule":
        jumps = []
        if rest:
            for item in rest.split(","):
                try:
                    t_str, _, move = item.partition("@")
                    src, _, tgt = move.partition("->")
                    if not src or not tgt:
                        raise ValueError
                    jumps.append((float(t_str), (src, tgt)))
                except ValueError:
                    raise SystemExit(
                        f"bad schedule item {item!r}; expected T@SRC->TGT"
                    )
        return Schedule(tuple(jumps))
    raise SystemExit(f"unknown policy kind {head!r}")


def _parse_input(spec: str, input_dim: int):
    if spec == "zero":
        return ZeroInput(input_dim)
    head, _, rest = spec.partition(":")
    if head == "exp":
        lam_str, _, z_str = rest.partition(":")
        try:
            lam = float(lam_str)
            z = np.array([float(v) for v in z_str.split(",")], dtype=float)
        except ValueError:
            raise SystemExit(f"bad input spec {spec!r}; expected exp:LAMBDA:z1,z2,...")
        if z.shape != (input_dim,):
            raise SystemExit(f"input dimension is {input_dim}, got {z.shape[0]} components")
        return ExponentialInput(z, lam)
    raise SystemExit(f"unknown input kind {head!r}")


def _cmd_analyze(args) -> int:
    system = _load(args.system)
    tol = _tolerance(args)
    report = build_report(system, tol, find_input=args.find_input)
    if args.json:
        _emit_json(report.to_dict(), args.json)
    if args.json != "-":
        print(report.to_text())
    return _EXIT[report.exit_status]


def _cmd_simulate(args) -> int:
    system = _load(args.system)
    label, x0 = _parse_initial(args.initial, system)
    policy = _parse_policy(args.policy)
    u = _parse_input(args.input, system.input_dim)
    try:
        execution = simulate(
            system, label, x0, input_signal=u, policy=policy,
            horizon=args.horizon, dt=args.dt,
        )
    except SimulationError as exc:
        raise SystemExit(f"simulation failed: {exc}")
    problems = validate_execution(system, execution)
    if problems:
        for p in problems:
            print(f"invalid execution: {p}", file=sys.stderr)
        return 1
    csv_path, json_path = export_trace(execution, args.out)
    print(
        f"{len(execution.intervals)} intervals, "
        f"{len(execution.transitions)} jumps, modes "
        + " -> ".join(execution.mode_sequence)
    )
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_observe(args) -> int:
    system = _load(args.system)
    tol = _tolerance(args)
    try:
        execution = load_trace(args.trace, system)
    except (OSError, ValueError) as exc:
        raise SystemExit(f"cannot load trace {args.trace}: {exc}")
    config = ObserverConfig.for_system(system)
    report = run_observer(system, execution, config, epsilon=args.epsilon, tol=tol)
    doc = {
        "evaluated": report.evaluated,
        "ambiguous": report.ambiguous,
        "mode_accuracy": report.mode_accuracy,
        "per_interval_max_error": report.per_interval_max_error,
        "epsilon": report.epsilon,
        "convergence_time": report.convergence_time,
        "warnings": list(report.warnings),
    }
    if args.json:
        _emit_json(doc, args.json)
    if args.json != "-":
        print(f"samples evaluated: {report.evaluated} ({report.ambiguous} ambiguous)")
        print(f"mode identification accuracy: {report.mode_accuracy:.3f}")
        for i, err in enumerate(report.per_interval_max_error):
            shown = "inf" if not np.isfinite(err) else f"{err:.3e}"
            print(f"interval {i}: max state error {shown}")
        if report.convergence_time is None:
            print(f"no convergence to within {report.epsilon:g}")
        else:
            print(f"converged to within {report.epsilon:g} at t = {report.convergence_time:g}")
        for w in report.warnings:
            print(f"warning: {w}")
    return 0


def _cmd_validate(args) -> int:
    system = _load(args.system)
    try:
        execution = load_trace(args.trace, system)
    except (OSError, ValueError) as exc:
        raise SystemExit(f"cannot load trace {args.trace}: {exc}")
    problems = validate_execution(system, execution)
    if problems:
        for p in problems:
            print(p)
        return 1
    print("trace is a valid execution")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="switchscope",
        description="observability and detectability analysis for switching linear systems",
    )
    parser.add_argument("--tol", type=float, default=None, help="rank tolerance (or set SWITCHSCOPE_TOL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run the full analysis on a system file")
    p.add_argument("system")
    p.add_argument("--json", metavar="PATH", help="write the JSON report to PATH ('-' for stdout)")
    p.add_argument("--find-input", action="store_true", help="also construct a distinguishing input")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate", help="integrate an execution and write a trace")
    p.add_argument("system")
    p.add_argument("--initial", required=True, metavar="MODE:x1,x2,...")
    p.add_argument("--policy", default="schedule:", metavar="KIND:...",
                   help="schedule:T@SRC->TGT,... or random:MIN,MAX[,SEED]")
    p.add_argument("--input", default="zero", metavar="KIND:...",
                   help="zero or exp:LAMBDA:z1,z2,...")
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--out", default="trace", metavar="BASE",
                   help="write BASE.csv and BASE.json")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("observe", help="run the observer over a recorded trace")
    p.add_argument("system")
    p.add_argument("--trace", required=True, metavar="BASE")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=_cmd_observe)

    p = sub.add_parser("validate", help="check a recorded trace against the system")
    p.add_argument("system")
    p.add_argument("--trace", required=True, metavar="BASE")
    p.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
