"""Command line entry point: ``optvisit {solve,simulate,plan,check,export}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import lattice
from .hybrid import (ControlSignal, HybridControlString, IllegalControlError, check_controls,
                     simulate_auto, simulate_switching)
from .oracle import (BudgetExceededError, CoarseInstance, check_dpp, check_equivalence,
                     check_obstacle)
from .scenario import ScenarioError, export_scenario, load_scenario, validate
from .solver import DEFAULT_MEMORY_CAP, ResourceLimitError, SpaceTimeGrid, solve_all
from .storage import FieldFormatError, read_fields, svg_heatmap, write_fields
from .synthesis import synthesize_trajectory, verify_plan

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_RESOURCE, EXIT_USAGE = 0, 1, 2, 3, 64

log = logging.getLogger("optvisit")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"cannot parse vector {text!r}") from None


def _load(args):
    try:
        return load_scenario(args.scenario)
    except OSError as e:
        raise InputError(f"cannot read scenario: {e}") from None


def _state(text: str | None, n: int) -> int:
    if text is None:
        return 0
    try:
        return lattice.from_bits(text, n)
    except ValueError as e:
        raise InputError(str(e)) from None


def _point(text: str, dim: int) -> np.ndarray:
    x = _vector(text)
    if len(x) != dim:
        raise InputError(f"expected {dim} coordinates, got {len(x)}")
    return np.asarray(x)


def _emit(text: str, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    s = _load(args)
    grid = SpaceTimeGrid.for_scenario(s, args.nx, args.nt)
    t0 = time.perf_counter()
    art = solve_all(s, grid, args.memory_cap, args.threads)
    log.info("solved %d fields in %.2fs", len(art.fields), time.perf_counter() - t0)
    params = {"nx": args.nx, "nt": args.nt, "memory_cap": args.memory_cap}
    write_fields(art, args.out, params)
    if args.svg:
        if s.dim != 2:
            raise InputError("--svg is only available for 2D scenarios")
        out = Path(args.out)
        every = args.svg_every or grid.steps
        for p, fld in art.fields.items():
            bits = lattice.to_bits(p, s.n_targets)
            for k in range(0, grid.steps + 1, every):
                svg = svg_heatmap(fld.values[k], grid, f"W_{bits} t={grid.times[k]:.4g}")
                (out / f"W_{bits}_k{k}.svg").write_text(svg)
    return EXIT_OK


def _read_controls(path: str, dim_a: int) -> np.ndarray:
    try:
        with open(path) as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        data = np.asarray([[float(v) for v in r] for r in rows])
    except (OSError, ValueError) as e:
        raise InputError(f"cannot read controls: {e}") from None
    if data.ndim != 2 or data.shape[1] != dim_a:
        raise InputError(f"controls file must have {dim_a} columns")
    return data


def _parse_switches(text: str, n: int) -> tuple[list[float], list[int]]:
    times, dests = [], []
    for item in text.split(","):
        try:
            t, bits = item.split(":")
            times.append(float(t))
            dests.append(lattice.from_bits(bits, n))
        except ValueError:
            raise InputError(f"bad switch {item!r}; expected time:bits") from None
    return times, dests


def cmd_simulate(args) -> int:
    s = _load(args)
    n = s.n_targets
    x0 = _point(args.x0, s.dim)
    p0 = _state(args.p0, n)
    dim_a = s.control_array.shape[1]
    if args.controls:
        samples = _read_controls(args.controls, dim_a)
        dt = args.dt or (s.horizon - args.t0) / len(samples)
        alpha = ControlSignal(args.t0, dt, samples)
    else:
        a = _vector(args.control) if args.control else [0.0] * dim_a
        alpha = ControlSignal.constant(a, args.t0, s.horizon, args.dt or s.horizon / 200)
    try:
        check_controls(s, alpha)
        if args.mode == "auto":
            traj = simulate_auto(s, x0, args.t0, p0, alpha)
        else:
            if not args.switches:
                raise InputError("--mode switching needs --switches")
            times, dests = _parse_switches(args.switches, n)
            if dests[-1] != s.final_state:
                raise InputError("the last switch must go to the final state")
            u = HybridControlString(alpha, tuple(times), tuple(dests[:-1]))
            traj = simulate_switching(s, x0, args.t0, p0, u)
    except IllegalControlError as e:
        raise InputError(str(e)) from None
    _emit(traj.to_csv(n), args.out)
    return EXIT_OK


def _fields(args, s):
    if not args.fields or not Path(args.fields).is_dir():
        raise InputError(f"fields directory {args.fields!r} not found")
    try:
        return read_fields(args.fields, s)
    except FieldFormatError as e:
        raise InputError(str(e)) from None


def cmd_plan(args) -> int:
    s = _load(args)
    art = _fields(args, s)
    p0 = _state(args.p0, s.n_targets)
    plan = synthesize_trajectory(art, _point(args.x0, s.dim), args.t0, p0, args.dt_sim,
                                 args.stop_tol)
    report = verify_plan(plan)
    _emit(plan.trajectory.to_csv(s.n_targets), args.out)
    print(f"summary: predicted={plan.predicted_cost!r}, achieved={plan.achieved_cost!r}, "
          f"gap={report.gap!r}", file=sys.stderr if not args.out else sys.stdout)
    if not report.ok:
        for problem in report.problems:
            log.error(problem)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_check(args) -> int:
    s = _load(args)
    art = _fields(args, s)
    if args.mode == "obstacle":
        report = check_obstacle(art, 1e-12 if args.tol is None else args.tol)
    elif args.mode == "dpp":
        report = check_dpp(art, args.samples, args.tol, args.seed)
    else:
        try:
            ci = CoarseInstance(s, args.oracle_steps)
        except ValueError as e:
            raise InputError(str(e)) from None
        rng = np.random.default_rng(args.seed)
        states = [p for p in range(1 << s.n_targets)]
        probes = []
        for _ in range(args.samples):
            x = rng.uniform(s.box_lo, s.box_hi)
            k = int(rng.integers(ci.steps + 1))
            probes.append((x, ci.time(k), states[rng.integers(len(states))]))
        report = check_equivalence(ci, probes, art, tol_solver=0.1 if args.tol is None else args.tol)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_export(args) -> int:
    s = _load(args)
    _emit(export_scenario(s), args.out)
    rep = validate(s)
    log.info("M=%g L=%g sup l=%g", rep.sup_dynamics, rep.lipschitz, rep.sup_running_cost)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="optvisit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[common], help="solve the value-function cascade")
    p.add_argument("--nx", type=int, default=41, help="nodes per dimension")
    p.add_argument("--nt", type=int, default=50, help="time steps")
    p.add_argument("--memory-cap", type=int, default=DEFAULT_MEMORY_CAP)
    p.add_argument("--svg", action="store_true", help="also draw heatmaps (2D only)")
    p.add_argument("--svg-every", type=int, default=0, help="slice stride for heatmaps")
    p.set_defaults(func=cmd_solve, needs_out=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a trajectory")
    p.add_argument("--x0", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--p0")
    p.add_argument("--mode", choices=["auto", "switching"], default="auto")
    p.add_argument("--controls", help="CSV file, one control vector per step")
    p.add_argument("--control", help="constant control vector, e.g. 1,0")
    p.add_argument("--dt", type=float)
    p.add_argument("--switches", help="time:bits,... ending in the all-ones state")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan", parents=[common], help="synthesize a visiting plan")
    p.add_argument("--fields", required=True)
    p.add_argument("--x0", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--p0")
    p.add_argument("--dt-sim", type=float)
    p.add_argument("--stop-tol", type=float)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("check", parents=[common], help="verify solved fields")
    p.add_argument("--fields", required=True)
    p.add_argument("--mode", choices=["dpp", "equivalence", "obstacle"], default="obstacle")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--tol", type=float)
    p.add_argument("--oracle-steps", type=int, default=8)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("export", parents=[common], help="print the canonical scenario")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "needs_out", False) and not args.out:
        parser.error("--out is required")
    try:
        return args.func(args)
    except (InputError, ScenarioError) as e:
        print(f"optvisit: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (ResourceLimitError, BudgetExceededError) as e:
        print(f"optvisit: {e}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
