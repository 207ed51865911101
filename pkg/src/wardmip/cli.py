"""``wardmip`` command line.

Exit codes: 0 optimal / success, 1 usage or parse error, 2 infeasible,
3 limit reached, 4 roster has violations.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import io
from .compile import CompileError, compile
from .model import builtin_general_ward, builtin_li2003, random_instance
from .roster import decode, fairness, validate
from .solve import INFEASIBLE, LIMIT, OPTIMAL, SolverConfig, conflict_families, solve_ilp

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_VIOLATIONS = 0, 1, 2, 3, 4
STATUS_EXIT = {OPTIMAL: EXIT_OK, INFEASIBLE: EXIT_INFEASIBLE, LIMIT: EXIT_LIMIT}
DEMOS = {"general-ward": builtin_general_ward, "li2003": builtin_li2003}

log = logging.getLogger("wardmip")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _add_solver_flags(p):
    p.add_argument("--time-limit", type=_positive_float, metavar="SECS")
    p.add_argument("--node-limit", type=_positive_int, metavar="N")
    p.add_argument("--engine", choices=("highs", "simplex"), default="highs",
                   help="LP engine used inside branch-and-bound")


def _add_policy_flags(p):
    p.add_argument("--coverage-mode", choices=("exact", "at-least"))
    p.add_argument("--cascade", choices=("off", "adjacent", "cumulative"))
    p.add_argument("--soft-pm-am", type=float, metavar="WEIGHT")
    p.add_argument("--soft-night-run", nargs=2, metavar=("LEN", "WEIGHT"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wardmip", description="Nurse rostering with an exact 0-1 ILP solver.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve an instance document")
    p.add_argument("instance", type=Path)
    p.add_argument("--csv", type=Path, metavar="PATH", help="also write the roster as CSV")
    _add_solver_flags(p)
    _add_policy_flags(p)

    p = sub.add_parser("validate", help="check a roster CSV against an instance")
    p.add_argument("instance", type=Path)
    p.add_argument("roster", type=Path)

    p = sub.add_parser("export-mps", help="write the compiled model as fixed-format MPS")
    p.add_argument("instance", type=Path)
    p.add_argument("out", type=Path)
    _add_policy_flags(p)

    p = sub.add_parser("demo", help="solve one of the built-in case studies")
    p.add_argument("name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", type=Path, metavar="PATH")
    _add_solver_flags(p)
    _add_policy_flags(p)

    p = sub.add_parser("gen", help="write a random instance document")
    p.add_argument("--nurses", "-n", type=_positive_int, required=True)
    p.add_argument("--days", "-d", type=_positive_int, required=True)
    p.add_argument("--ranks", type=_positive_int, default=1)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--max-work-days", type=int)
    p.add_argument("--rules", action="store_true", help="switch optional policy families on at random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", type=Path, required=True)
    return parser


def _apply_policy_flags(inst, args):
    changes = {}
    if getattr(args, "coverage_mode", None):
        changes["coverage_mode"] = args.coverage_mode.replace("-", "_")
    if getattr(args, "cascade", None):
        changes["cascade_mode"] = args.cascade
    if getattr(args, "soft_pm_am", None) is not None:
        changes["soft_pm_am_weight"] = args.soft_pm_am
    if getattr(args, "soft_night_run", None):
        length, weight = args.soft_night_run
        try:
            changes["soft_night_run"] = (int(length), float(weight))
        except ValueError:
            raise UsageError("--soft-night-run expects an integer length and a numeric weight")
    if not changes:
        return inst
    return dataclasses.replace(inst, policy=dataclasses.replace(inst.policy, **changes))


def _read(path: Path):
    try:
        return io.read_instance(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}")
    except io.DocumentError as exc:
        raise UsageError(f"{path}: {exc}")


def _config(args) -> SolverConfig:
    return SolverConfig(time_limit=args.time_limit, node_limit=args.node_limit, engine=args.engine)


def _solve(inst, args, out):
    """Solve and print the status block; returns ``(exit code, roster or None)``."""
    try:
        model = compile(inst)
    except CompileError as exc:
        raise UsageError(str(exc))
    config = _config(args)
    result = solve_ilp(model, config)
    st = result.stats
    print(f"status     {result.status}", file=out)
    print(f"objective  {result.objective:.6g}", file=out)
    print(f"bound      {result.bound:.6g}", file=out)
    print(f"nodes      {st.nodes}  (LP iterations {st.lp_iterations})", file=out)
    print(f"solved in {st.wall_time:.2f} seconds (wall clock, hardware dependent)", file=out)

    if result.status == INFEASIBLE:
        fams = conflict_families(model, SolverConfig(engine=config.engine, node_limit=10_000))
        print("infeasible: conflicting families " + (", ".join(fams) if fams else "(not isolated)"), file=out)
        return EXIT_INFEASIBLE, None
    if result.incumbent is None:
        print("no incumbent found", file=out)
        return STATUS_EXIT[result.status], None

    roster = decode(inst, result.assignment)
    print(file=out)
    print(io.render_roster(roster, "grid"), end="", file=out)
    if args.csv:
        args.csv.write_text(io.render_roster(roster, "csv"), encoding="utf-8")
    return STATUS_EXIT[result.status], roster


def cmd_solve(args, out=None) -> int:
    inst = _apply_policy_flags(_read(args.instance), args)
    return _solve(inst, args, out)[0]


def cmd_validate(args, out=None) -> int:
    inst = _read(args.instance)
    try:
        roster = io.read_roster_csv(inst, args.roster.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {args.roster}: {exc.strerror}")
    except (io.DocumentError, ValueError) as exc:
        raise UsageError(f"{args.roster}: {exc}")
    report = validate(inst, roster)
    _print_report(report, out)
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def _print_report(report, out):
    print(f"objective  {report.objective_recomputed:.6g} (recomputed from the roster)", file=out)
    if report.ok:
        print("no violations", file=out)
        return
    print(f"{len(report.violations)} violation(s) in families {', '.join(report.families())}", file=out)
    for v in report.violations:
        print(f"  {v}", file=out)


def cmd_export_mps(args, out=None) -> int:
    inst = _apply_policy_flags(_read(args.instance), args)
    try:
        model = compile(inst)
    except CompileError as exc:
        raise UsageError(str(exc))
    args.out.write_text(io.export_mps(model), encoding="utf-8")
    print(f"wrote {args.out}: {len(model.rows)} rows, {model.num_columns} columns", file=out)
    return EXIT_OK


def cmd_demo(args, out=None) -> int:
    if args.name not in DEMOS:
        raise UsageError(f"unknown demo {args.name!r}; choose from {', '.join(DEMOS)}")
    inst = _apply_policy_flags(DEMOS[args.name](args.seed), args)
    print(f"{inst.name}: {inst.n_nurses} nurses, {inst.horizon} days, {inst.n_shifts} shifts", file=out)
    code, roster = _solve(inst, args, out)
    if roster is None:
        return code
    print(file=out)
    report = validate(inst, roster)
    _print_report(report, out)
    fr = fairness(inst, roster)
    print(file=out)
    print(f"shifts per nurse   min {min(fr.totals)}  max {max(fr.totals)}  mean {fr.mean_total:.2f}", file=out)
    print(f"nights per nurse   min {min(fr.nights)}  max {max(fr.nights)}  mean {fr.mean_nights:.2f}", file=out)
    print(f"longest work run   {max(fr.longest_run)} days; longest night run {max(fr.longest_night_run)}", file=out)
    if not report.ok:
        return EXIT_VIOLATIONS
    return code


def cmd_gen(args, out=None) -> int:
    try:
        inst = random_instance(args.nurses, args.days, ranks=args.ranks, density=args.density,
                               seed=args.seed, max_work_days=args.max_work_days, rules=args.rules)
    except ValueError as exc:
        raise UsageError(str(exc))
    args.out.write_text(io.write_instance(inst), encoding="utf-8")
    print(f"wrote {args.out}", file=out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "validate": cmd_validate, "export-mps": cmd_export_mps,
            "demo": cmd_demo, "gen": cmd_gen}


def main(argv=None) -> int:
    level = os.environ.get("WARDMIP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, sys.stdout)
    except UsageError as exc:
        print(f"wardmip: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
