"""Command line interface: validate, run, generate and check-figure5."""

from __future__ import annotations

import argparse
import sys
import time
from contextlib import ExitStack
from typing import List, Optional

from .dynamics import DynamicsParams, controllable, max_acceleration
from .environment import ScenarioError
from .generate import PROFILES, dumps, generate
from .metric_map import MapError
from .scenario import KMH, load_scenario, validate_assumptions
from .simulate import INVALID, SAFE, VIOLATION, UnsafeInitialState, run

FIGURE_PARAMS = DynamicsParams(b_max=3.4, a_max=2.5, dt=1.0)
FIGURE_LIMITS = [(0.0, 100 * KMH), (40.0, 50 * KMH), (140.0, 0.0)]
FIGURE_SPEEDS_KMH = (30, 60, 90)


def figure_table() -> List[dict]:
    """Controllability and best acceleration for the illustration speeds."""
    rows = []
    for kmh in FIGURE_SPEEDS_KMH:
        v = kmh * KMH
        ok = controllable(FIGURE_PARAMS, v, FIGURE_LIMITS)
        acc = max_acceleration(FIGURE_PARAMS, v, FIGURE_LIMITS) if ok else None
        rows.append({"v_kmh": kmh, "controllable": ok, "a_star": acc})
    return rows


def _cmd_check_figure5(args) -> int:
    t0 = time.perf_counter()
    rows = figure_table()
    elapsed = time.perf_counter() - t0
    print("speed limits: (0 m, 100 km/h) (40 m, 50 km/h) (140 m, 0 km/h); b_max=3.4 a_max=2.5 dt=1")
    for r in rows:
        acc = "-" if r["a_star"] is None else f"{r['a_star']:.4f} m/s^2"
        print(f"{r['v_kmh']:>3} km/h  controllable={str(r['controllable']).lower():<5}  a*={acc}")
    expected = [True, True, False]
    ok = [r["controllable"] for r in rows] == expected and rows[1]["a_star"] < FIGURE_PARAMS.a_max
    print(f"matches illustration: {'yes' if ok else 'no'} ({elapsed * 1000:.1f} ms)")
    return 0 if ok else 1


def _load_valid(path: str):
    try:
        sc = load_scenario(path)
    except (ScenarioError, MapError, OSError, KeyError, TypeError, ValueError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return None
    problems = validate_assumptions(sc)
    for p in problems:
        print(f"{p.assumption} [{p.element}]: {p.message}", file=sys.stderr)
    return None if problems else sc


def _cmd_validate(args) -> int:
    sc = _load_valid(args.file)
    if sc is None:
        return INVALID
    print("ok")
    return SAFE


def _cmd_run(args) -> int:
    sc = _load_valid(args.file)
    if sc is None:
        return INVALID
    with ExitStack() as stack:
        trace = stack.enter_context(open(args.trace, "w", encoding="utf-8")) if args.trace else None
        csv_out = stack.enter_context(open(args.csv, "w", encoding="utf-8", newline="")) if args.csv else None
        try:
            res = run(sc, trace=trace, csv_out=csv_out, until_violation=args.until_violation, horizon=args.horizon)
        except UnsafeInitialState as exc:
            print(f"initial state is not safe: {exc}", file=sys.stderr)
            return INVALID
    if res.safe:
        print(f"SAFE after {res.steps} steps")
        return SAFE
    print(f"VIOLATION at step {res.first_violation}")
    for line in res.violations[:20]:
        print(f"  {line}")
    if len(res.violations) > 20:
        print(f"  ... {len(res.violations) - 20} more")
    return VIOLATION


def _cmd_generate(args) -> int:
    text = dumps(generate(args.seed, args.profile, horizon=args.horizon))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safedrive", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    v = sub.add_parser("validate", help="parse a scenario and check the map assumptions")
    v.add_argument("file")
    v.set_defaults(func=_cmd_validate)

    r = sub.add_parser("run", help="simulate a scenario under the safety monitor")
    r.add_argument("file")
    r.add_argument("--trace", metavar="OUT", help="write the NDJSON trace here")
    r.add_argument("--csv", metavar="OUT", help="write a per-vehicle CSV projection here")
    r.add_argument("--until-violation", action="store_true", help="stop at the first violation")
    r.add_argument("--horizon", type=int, default=None, help="override the scenario horizon")
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("generate", help="emit a random scenario")
    g.add_argument("--profile", required=True, choices=PROFILES)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--horizon", type=int, default=1000)
    g.add_argument("-o", "--output", help="output file (default: stdout)")
    g.set_defaults(func=_cmd_generate)

    f = sub.add_parser("check-figure5", help="reproduce the speed-control illustration table")
    f.set_defaults(func=_cmd_check_figure5)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
