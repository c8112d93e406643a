"""Command-line entry point: ``stpa-workbench <command> <project> [flags]``.

Exit codes: 0 success, 1 property or test failure, 2 input error,
3 resource limit exceeded.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .context import parse_mode
from .efsm import DEFAULT_NODE_CAP, ResourceExceeded
from .pipeline import (FAILED, INPUT_ERROR, OK, RESOURCE, InputError, load_project, run_analyze,
                       run_execute, run_report, run_testgen, run_verify)
from .testgen import CRITERIA, DEFAULT_BUDGET, parse_criteria


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("project", help="project file, or @acc for the bundled ACC project")
    common.add_argument("--out", default="out", help="output root directory (default: out)")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="stpa-workbench",
                                description="STPA-driven safety requirements, verification and testing")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="context tables and refined constraints")
    a.add_argument("--mode", default="full", help="full, pairwise or t=<n>")

    v = sub.add_parser("verify", parents=[common], help="model-check every safety requirement")
    v.add_argument("--node-cap", type=int, default=DEFAULT_NODE_CAP)
    v.add_argument("--mode", default="full", help="context mode used to refine constraints")

    t = sub.add_parser("testgen", parents=[common], help="generate, dedup and trace tests")
    _testgen_flags(t)

    e = sub.add_parser("execute", parents=[common], help="run a suite against a system under test")
    e.add_argument("suite", nargs="+", help="suite file(s) written by testgen or verify")
    e.add_argument("--sut", default="acc-ref")
    e.add_argument("--boundary", action="store_true")

    sub.add_parser("report", parents=[common], help="consolidated safety verification report")

    r = sub.add_parser("run-all", parents=[common], help="every stage in order")
    r.add_argument("--mode", default="full")
    r.add_argument("--node-cap", type=int, default=DEFAULT_NODE_CAP)
    r.add_argument("--sut", default="acc-ref")
    _testgen_flags(r, concrete_flag=False)
    return p


def _testgen_flags(p: argparse.ArgumentParser, concrete_flag: bool = True) -> None:
    p.add_argument("--criteria", default=",".join(CRITERIA),
                   help="comma list of states, transitions, pairs, actions")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="maximum total test steps")
    p.add_argument("--boundary", action="store_true", help="add interval-boundary test data")
    p.add_argument("--strict", action="store_true", help="exit 1 when coverage falls short")
    if concrete_flag:
        p.add_argument("--concrete", action="store_true", help="write concrete test scripts")
        p.add_argument("--node-cap", type=int, default=DEFAULT_NODE_CAP)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.out)
    try:
        if getattr(args, "mode", None):
            parse_mode(args.mode)
        criteria = parse_criteria(args.criteria) if hasattr(args, "criteria") else CRITERIA
        if getattr(args, "budget", 1) < 1:
            raise InputError("--budget must be at least 1")
        project = load_project(args.project)
        cmd = args.command
        if cmd == "analyze":
            code, _ = run_analyze(project, out, args.mode, args.seed)
        elif cmd == "verify":
            code = run_verify(project, out, args.node_cap, args.mode, args.seed).code
        elif cmd == "testgen":
            code, _ = run_testgen(project, out, criteria, args.seed, args.budget, args.concrete,
                                  args.boundary, args.strict, args.node_cap)
        elif cmd == "execute":
            code, _ = run_execute(project, [Path(s) for s in args.suite], out, args.sut,
                                  args.seed, args.boundary)
        elif cmd == "report":
            code, _ = run_report(project, out)
        else:
            code = _run_all(project, out, args, criteria)
    except InputError as exc:
        print(str(exc), file=sys.stderr)
        return INPUT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except ResourceExceeded as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return RESOURCE
    _summary(args.command, code)
    return code


def _run_all(project, out: Path, args, criteria) -> int:
    codes = [run_analyze(project, out, args.mode, args.seed)[0]]
    codes.append(run_verify(project, out, args.node_cap, "full", args.seed).code)
    codes.append(run_testgen(project, out, criteria, args.seed, args.budget, True, args.boundary,
                             args.strict, args.node_cap)[0])
    suites = [out / "testgen" / "suite.json", out / "verify" / "counterexample_suite.json"]
    codes.append(run_execute(project, suites, out, args.sut, args.seed, args.boundary)[0])
    codes.append(run_report(project, out)[0])
    for code in (INPUT_ERROR, RESOURCE, FAILED):
        if code in codes:
            return code
    return OK


def _summary(command: str, code: int) -> None:
    word = {OK: "ok", FAILED: "failures found", INPUT_ERROR: "input error",
            RESOURCE: "resource limit exceeded"}[code]
    print(f"{command}: {word} (exit {code})", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
