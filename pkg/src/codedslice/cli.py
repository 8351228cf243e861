"""Command-line entry point: ``codedslice analyze|simulate|plan|reproduce``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import config as config_mod
from . import harness, reproduce
from .errors import ConfigurationError, SimulationAborted, UsageError
from .sim_core import simulate_slice, trial_seed

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_ABORT = 4

OUT_ENV = "CODEDSLICE_OUT"
DEFAULT_OUT = "results"

PLAN_ALLOC_HEADER = ("app", "protocol", "feasible", "links_needed", "binding_constraint",
                     "predicted_E_D", "predicted_E_G", "needs_simulation", "capacity", "note")
PLAN_PART_HEADER = ("rank", "slicing_choice", "sizes", "slice_id", "app", "protocol", "links",
                    "analytic_E_D", "analytic_E_G", "flags")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, help="override the base seed")
    common.add_argument("--trials", type=_positive_int, help="override the trial count")
    common.add_argument("--packets", type=_positive_int, help="override packets per application")
    common.add_argument("--mode", choices=("stopwait", "pipelined"),
                        help="RLNC sender: wait for each generation's ack, or pipeline")
    common.add_argument("--workers", type=_positive_int, default=1,
                        help="processes used to run trials")

    parser = argparse.ArgumentParser(
        prog="codedslice",
        description="Coded and un-coded network slicing: closed forms, simulation, planning.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("analyze", "closed-form delay, goodput and missing-DoF tables"),
                       ("simulate", "seeded Monte-Carlo trials with confidence intervals"),
                       ("plan", "minimum slice sizes and feasible partitions")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--config", required=True, help="YAML experiment file")
        if name == "simulate":
            p.add_argument("--trace", action="store_true",
                           help="also dump per-packet traces of trial 0")
    p = sub.add_parser("reproduce", parents=[common],
                       help="rerun a reference scenario and compare against expected values")
    p.add_argument("target", choices=reproduce.TARGETS)
    return parser


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _load(args):
    exp = config_mod.load(args.config)
    return exp.with_overrides(seed=args.seed, trials=args.trials, mode=args.mode,
                              packets=args.packets)


def _emit_rows(exp, rows, args, stem: str) -> list:
    if exp.outputs and not args.out:
        written = []
        for out in exp.outputs:
            records = [r.as_record() for r in rows]
            if out.format == "json":
                written.append(harness.write_json(out.path, records))
            else:
                written.append(harness.write_csv(out.path, harness.REPORT_HEADER, records))
        return written
    return [harness.write_rows(rows, _out_dir(args), stem, args.format)]


def cmd_analyze(args) -> int:
    exp = _load(args)
    rows, pmfs = harness.analyze(exp)
    written = _emit_rows(exp, rows, args, "analyze")
    if pmfs:
        out = _out_dir(args)
        if args.format == "json":
            written.append(harness.write_json(out / "missing_dof.json", pmfs))
        else:
            written.append(harness.write_csv(out / "missing_dof.csv", harness.PMF_HEADER, pmfs))
    for r in rows:
        print(f"choice={r.slicing_choice} slice={r.slice_id} {r.protocol:5s} "
              f"E[D]={r.analytic_E_D:.2f} E[G]={r.analytic_E_G:.4f} {';'.join(r.flags)}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    exp = _load(args)
    rows = harness.simulate(exp, args.workers)
    written = _emit_rows(exp, rows, args, "simulate")
    if args.trace:
        for choice in exp.choices:
            scenario = exp.scenario(choice)
            for j in range(len(scenario.slices)):
                run = simulate_slice(scenario, j, trial_seed(scenario.base_seed, 0))
                tag = "" if choice is None else f"_choice{choice}"
                written.append(run.trace.write_csv(_out_dir(args) / f"trace{tag}_slice{j}.csv"))
    for r in rows:
        print(f"choice={r.slicing_choice} slice={r.slice_id} {r.protocol:5s} "
              f"E[D]={r.E_D:.2f}±{r.ci_D:.2f} E[I]={r.E_I:.2f}±{r.ci_I:.2f} "
              f"E[G]={r.E_G:.3f}±{r.ci_G:.3f} T={r.T_nu:.1f} {';'.join(r.flags)}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_plan(args) -> int:
    exp = _load(args)
    result = harness.plan(exp)
    out = _out_dir(args)
    partitions = result["partitions"] or [{"rank": "", "slicing_choice": "", "sizes": "infeasible",
                                          "slice_id": "", "app": "", "protocol": "",
                                          "flags": "infeasible"}]
    if args.format == "json":
        written = [harness.write_json(out / "plan.json", result)]
    else:
        written = [harness.write_csv(out / "plan_allocations.csv", PLAN_ALLOC_HEADER,
                                     result["allocations"]),
                   harness.write_csv(out / "plan_partitions.csv", PLAN_PART_HEADER, partitions)]
    for a in result["allocations"]:
        status = f"{a['links_needed']} links ({a['binding_constraint']})" if a["feasible"] \
            else f"infeasible ({a['note']})"
        extra = " [confirm in-order bound by simulation]" if a["needs_simulation"] else ""
        cap = "" if a["capacity"] is None else f", capacity {a['capacity']}"
        print(f"{a['app']}: {a['protocol']} {status}{cap}{extra}")
    if result["feasible"]:
        choices = sorted({p["sizes"] for p in result["partitions"]})
        print(f"feasible partitions: {', '.join(choices)}")
    else:
        print("feasible partitions: none (infeasible)")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    tables, checks = reproduce.run(args.target, packets=args.packets, trials=args.trials,
                                   seed=args.seed or 0, workers=args.workers)
    out = _out_dir(args) / args.target
    written = []
    for stem, records in tables.items():
        header = tuple(records[0].keys()) if records else ()
        written.append(harness.write_csv(out / f"{stem}.csv", header, records))
    comparison = [c.as_record() for c in checks]
    written.append(harness.write_csv(out / "comparison.csv", reproduce.COMPARISON_HEADER,
                                     comparison))
    written.append(harness.write_json(out / "comparison.json", comparison))
    for c in checks:
        line = f"{c.status}  {c.item}: reference={c.reference} computed={c.computed} ({c.tolerance})"
        if c.note:
            line += f"  note: {c.note}"
        print(line)
    n_pass = sum(c.passed for c in checks)
    print(f"{args.target}: {n_pass}/{len(checks)} checks pass")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "plan": cmd_plan,
            "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationAborted as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
