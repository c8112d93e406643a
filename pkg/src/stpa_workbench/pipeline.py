"""Pipeline stages behind the command line: each writes its artifacts under
an output root and returns an exit code."""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, TextIO

from . import __version__
from .checker import (HOLDS, RESOURCE_EXCEEDED, VIOLATED, FormalizationError, Verdict, check_ltl,
                      formalize_requirement)
from .context import HAZARDOUS, NOT_HAZARDOUS, UNDETERMINED, Analysis, analyze_project, table_csv
from .dsl import ProjectParseError, parse_project
from .efsm import (DEFAULT_NODE_CAP, KripkeStructure, ResourceExceeded, check_determinism,
                   check_model_consistency, domains_of, expand, kripke_text)
from .model import Project, render_bool, validate
from .sut import SUTS, execute
from .testgen import (CRITERIA, DEFAULT_BUDGET, IntegrityError, TestSuite, concretize, dedup,
                      from_counterexample, generate, measure, reachable_obligations, replay_case,
                      scripts_to_json, suite_from_json, suite_to_json, traceability)

OK, FAILED, INPUT_ERROR, RESOURCE = 0, 1, 2, 3


class InputError(Exception):
    pass


def bundled(name: str) -> str:
    return resources.files("stpa_workbench").joinpath("projects", f"{name}.stpa").read_text("utf-8")


def load_project(spec: str, err: TextIO = sys.stderr) -> Project:
    """Parse and validate a project path, or ``@name`` for a bundled one."""
    if spec.startswith("@"):
        try:
            source, file = bundled(spec[1:]), f"{spec[1:]}.stpa"
        except FileNotFoundError:
            raise InputError(f"no bundled project named {spec[1:]!r}") from None
    else:
        path = Path(spec)
        try:
            source, file = path.read_text("utf-8"), str(path)
        except OSError as exc:
            raise InputError(f"cannot read project file {spec}: {exc.strerror or exc}") from None
    try:
        project = parse_project(source, file)
    except ProjectParseError as exc:
        raise InputError("\n".join(str(e) for e in exc.errors)) from None
    report = validate(project)
    for w in report.warnings:
        print(f"warning: {w}", file=err)
    if not report.ok:
        raise InputError("\n".join(f"error: {e}" for e in report.errors))
    return project


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump(data) -> str:
    return json.dumps(data, indent=1) + "\n"


# --------------------------------------------------------------------------
# analyze
# --------------------------------------------------------------------------


def run_analyze(project: Project, out: Path, mode: str = "full", seed: int = 0) -> tuple[int, Analysis]:
    analysis = analyze_project(project, mode, seed)
    base = out / "analyze"
    tables = []
    for t in analysis.tables:
        name = f"contexts_{t.action}_{t.kind.value}.csv"
        _write(base / name, table_csv(t))
        status = [r.verdict.status for r in t.kept]
        tables.append({
            "action": t.action, "kind": t.kind.value, "file": name, "variables": list(t.variables),
            "full_size": t.full_size, "sampled": len(t.sampled), "kept": len(t.kept),
            "removed": len(t.removed), "hazardous": status.count(HAZARDOUS),
            "not_hazardous": status.count(NOT_HAZARDOUS), "undetermined": status.count(UNDETERMINED),
            "strength": t.array.strength if t.array else None,
        })
    refinements = [{"requirement": r.requirement, "action": r.action, "kind": r.kind.value,
                    "constraint": render_bool(r.constraint), "source": r.source,
                    "sample_derived": r.source == "rows-sampled"} for r in analysis.refinements]
    summary = {"tool_version": __version__, "mode": mode, "seed": seed, "tables": tables,
               "refinements": refinements}
    _write(base / "summary.json", _dump(summary))
    return OK, analysis


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------


@dataclass
class VerifyResult:
    verdicts: list[Verdict]
    kripke: Optional[KripkeStructure]
    code: int


def run_verify(project: Project, out: Path, node_cap: int = DEFAULT_NODE_CAP,
               mode: str = "full", seed: int = 0) -> VerifyResult:
    if project.efsm is None:
        raise InputError("project declares no statemachine to verify")
    base = out / "verify"
    try:
        k = expand(project.efsm, node_cap)
    except ResourceExceeded as exc:
        _write(base / "verdicts.json", _dump({"tool_version": __version__, "error": str(exc),
                                              "node_cap": node_cap, "verdicts": []}))
        print(f"resource limit: {exc}", file=sys.stderr)
        return VerifyResult([], None, RESOURCE)
    _write(base / "kripke.txt", kripke_text(k))
    analysis = analyze_project(project, mode, seed)
    inputs = [v.name for v in project.variables if v.is_input]
    verdicts, records, cx_cases = [], [], []
    for req in project.requirements:
        try:
            f = formalize_requirement(req, refinements=analysis.refinements_for(req.id))
        except FormalizationError as exc:
            v = Verdict(req.id, "", "unformalized", notes=[str(exc)])
            verdicts.append(v)
            records.append(_verdict_record(v, None))
            continue
        v = check_ltl(k, f.formula, req.id, node_cap)
        v.origin = f.origin
        v.notes.extend(f.warnings)
        verdicts.append(v)
        trace = None
        if v.result == VIOLATED:
            trace = f"counterexamples/{req.id}.json"
            _write(base / trace, _dump(_trace_record(k, v)))
            cx_cases.append(from_counterexample(k, v.counterexample, req, project.efsm, inputs,
                                                f"CX-{req.id}"))
        records.append(_verdict_record(v, trace))
    rows = [r for t in analyze_project(project, "full").tables for r in t.kept]
    violations = check_model_consistency(project.efsm, rows, k.configurations())
    conflicts = check_determinism(project.efsm, domains_of(project))
    data = {
        "tool_version": __version__, "seed": seed, "mode": mode, "node_cap": node_cap,
        "kripke": {"nodes": len(k.nodes), "edges": len(k.edges)},
        "verdicts": records,
        "consistency_violations": [v.describe() for v in violations],
        "determinism_conflicts": [f"{c.state}/{c.event}: {c.first} and {c.second} overlap at "
                                  + ", ".join(f"{a}={b}" for a, b in c.witness) for c in conflicts],
    }
    _write(base / "verdicts.json", _dump(data))
    _write(base / "counterexample_suite.json", suite_to_json(TestSuite(cx_cases, seed, (), 0)))
    if any(v.result == RESOURCE_EXCEEDED for v in verdicts):
        code = RESOURCE
    elif all(v.result == HOLDS for v in verdicts):
        code = OK
    else:
        code = FAILED
    return VerifyResult(verdicts, k, code)


def _verdict_record(v: Verdict, trace: Optional[str]) -> dict:
    return {"requirement": v.requirement, "formula": v.formula, "origin": v.origin,
            "result": v.result, "vacuous": v.vacuous, "counterexample": trace, "notes": v.notes,
            "nodes": v.stats.kripke_nodes, "product_states": v.stats.product_states,
            "milliseconds": round(v.stats.milliseconds, 3)}


def _trace_record(k: KripkeStructure, v: Verdict) -> dict:
    cex = v.counterexample
    steps = []
    for node, event in zip(cex.path, cex.events):
        n = k.nodes[node]
        steps.append({"node": node, "state": n.config.state, "valuation": dict(n.config.valuation),
                      "emits": n.last_emitted, "event": event})
    return {"requirement": v.requirement, "formula": v.formula, "loop": cex.loop, "steps": steps}


# --------------------------------------------------------------------------
# testgen
# --------------------------------------------------------------------------


def run_testgen(project: Project, out: Path, criteria: Sequence[str] = CRITERIA, seed: int = 0,
                budget: int = DEFAULT_BUDGET, concrete: bool = False, boundary: bool = False,
                strict: bool = False, node_cap: int = DEFAULT_NODE_CAP) -> tuple[int, TestSuite]:
    if project.efsm is None:
        raise InputError("project declares no statemachine to generate tests from")
    efsm = project.efsm
    k = expand(efsm, node_cap)
    reach = reachable_obligations(efsm, k)
    inputs = [v.name for v in project.variables if v.is_input]
    raw = generate(efsm, criteria, seed, budget, inputs, k)
    suite = dedup(raw)
    before, after = measure(raw, efsm, reach), measure(suite, efsm, reach)
    matrix = traceability(suite, project.requirements)
    base = out / "testgen"
    _write(base / "suite.json", suite_to_json(suite))
    _write(base / "traceability.csv", matrix.to_csv())
    coverage = {
        "tool_version": __version__, "seed": seed, "budget": budget, "criteria": list(criteria),
        "raw_cases": len(raw.cases), "deduplicated_cases": len(suite.cases),
        "dedup_scope": "whole run (all criteria)",
        "coverage_raw": before.as_dict(), "coverage": after.as_dict(),
        "ssr_counts": matrix.counts, "ssr_coverage_percent": matrix.coverage_percent,
        "shortfall": suite.shortfall,
    }
    _write(base / "coverage.json", _dump(coverage))
    if concrete:
        scripts = [s for c in suite.cases
                   for s in concretize(c, project.concretizations, seed, boundary)]
        _write(base / "scripts.json", scripts_to_json(scripts))
    if suite.shortfall:
        for line in suite.shortfall:
            print(f"shortfall: {line}", file=sys.stderr)
        if strict:
            return FAILED, suite
    return OK, suite


# --------------------------------------------------------------------------
# execute
# --------------------------------------------------------------------------


def run_execute(project: Project, suite_paths: Sequence[Path], out: Path, sut: str = "acc-ref",
                seed: int = 0, boundary: bool = False):
    if sut not in SUTS:
        raise InputError(f"unknown SUT {sut!r}; registered: {', '.join(SUTS)}")
    if project.efsm is None:
        raise InputError("project declares no statemachine")
    cases = []
    for path in suite_paths:
        try:
            suite = suite_from_json(Path(path).read_text("utf-8"))
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read test suite {path}: {exc}") from None
        for c in suite.cases:
            try:
                replay_case(project.efsm, c)
            except IntegrityError as exc:
                raise InputError(f"suite {path} does not replay on the model: {exc}") from None
        cases.extend(suite.cases)
    scripts = [s for c in cases for s in concretize(c, project.concretizations, seed, boundary)]
    report = execute(scripts, SUTS[sut](project), sut)
    _write(out / "execute" / f"execution_{sut}.json", report.to_json())
    return (OK if report.all_pass else FAILED), report


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


def _read_json(path: Path, what: str):
    if not path.is_file():
        raise InputError(f"missing upstream artifact {path} ({what})")
    return json.loads(path.read_text("utf-8"))


def run_report(project: Project, out: Path) -> tuple[int, dict]:
    analysis = _read_json(out / "analyze" / "summary.json", "run analyze first")
    verify = _read_json(out / "verify" / "verdicts.json", "run verify first")
    coverage = _read_json(out / "testgen" / "coverage.json", "run testgen first")
    suite = suite_from_json((out / "testgen" / "suite.json").read_text("utf-8")) \
        if (out / "testgen" / "suite.json").is_file() else None
    if suite is None:
        raise InputError(f"missing upstream artifact {out / 'testgen' / 'suite.json'} (run testgen first)")
    executions = {}
    exec_dir = out / "execute"
    if exec_dir.is_dir():
        for p in sorted(exec_dir.glob("execution_*.json")):
            data = json.loads(p.read_text("utf-8"))
            executions[data["sut"]] = data
    verdicts = {v["requirement"]: v for v in verify.get("verdicts", [])}
    refinements: dict[str, list] = {}
    for r in analysis.get("refinements", []):
        refinements.setdefault(r["requirement"], []).append(r)
    rows = []
    for req in project.requirements:
        v = verdicts.get(req.id, {})
        tests = [c.id for c in suite.cases if req.id in c.ssrs]
        execution = {}
        for sut, data in executions.items():
            res = [r for r in data["results"] if req.id in r["ssrs"]]
            execution[sut] = {"pass": sum(r["outcome"] == "pass" for r in res),
                              "fail": sum(r["outcome"] == "fail" for r in res),
                              "error": sum(r["outcome"] == "error" for r in res)}
        rows.append({
            "id": req.id, "text": req.text, "source_uca": req.source_uca,
            "verdict": v.get("result", "not verified"), "vacuous": v.get("vacuous", False),
            "formula": v.get("formula", ""), "formula_origin": v.get("origin", ""),
            "counterexample": f"verify/{v['counterexample']}" if v.get("counterexample") else None,
            "refined_constraints": refinements.get(req.id, []),
            "covering_tests": len(tests), "execution": execution,
        })
    report = {
        "tool_version": __version__,
        "seeds": {"analyze": analysis.get("seed"), "verify": verify.get("seed"),
                  "testgen": coverage.get("seed")},
        "analysis_mode": analysis.get("mode"),
        "requirements": rows,
        "coverage": coverage.get("coverage"),
        "ssr_coverage_percent": coverage.get("ssr_coverage_percent"),
        "test_cases": {"raw": coverage.get("raw_cases"), "deduplicated": coverage.get("deduplicated_cases")},
        "context_tables": analysis.get("tables"),
        "consistency_violations": verify.get("consistency_violations", []),
        "determinism_conflicts": verify.get("determinism_conflicts", []),
        "executions": {s: d["totals"] for s, d in executions.items()},
    }
    _write(out / "report" / "report.json", _dump(report))
    _write(out / "report" / "report.md", render_report(report))
    return OK, report


def render_report(r: dict) -> str:
    lines = ["# Safety verification report", "",
             f"Tool version {r['tool_version']}; seeds {r['seeds']}; context mode {r['analysis_mode']}.", "",
             "## Requirements", "",
             "| SSR | verdict | formula origin | covering tests | execution |",
             "| --- | --- | --- | --- | --- |"]
    for row in r["requirements"]:
        verdict = row["verdict"] + (" (vacuous)" if row["vacuous"] else "")
        if row["counterexample"]:
            verdict += f", trace {row['counterexample']}"
        ex = "; ".join(f"{s}: {v['pass']} pass / {v['fail']} fail" for s, v in row["execution"].items())
        lines.append(f"| {row['id']} | {verdict} | {row['formula_origin']} | {row['covering_tests']} | {ex or '-'} |")
    lines += ["", "## Requirement details", ""]
    for row in r["requirements"]:
        lines.append(f"- **{row['id']}**: {row['text']}")
        if row["formula"]:
            lines.append(f"  - formula: `{row['formula']}`")
        for c in row["refined_constraints"]:
            flag = " (sample-derived)" if c.get("sample_derived") else ""
            lines.append(f"  - constraint for {c['action']} {c['kind']}{flag}: `{c['constraint']}`")
    cov = r.get("coverage") or {}
    lines += ["", "## Coverage", ""]
    for name, m in cov.items():
        lines.append(f"- {name}: {m['covered']}/{m['total']} ({m['reachable']} reachable)")
    lines.append(f"- SSR coverage: {r.get('ssr_coverage_percent', 0):.1f}%")
    tc = r.get("test_cases") or {}
    lines.append(f"- test cases: {tc.get('raw')} generated, {tc.get('deduplicated')} after dedup")
    lines += ["", "## Context tables", ""]
    for t in r.get("context_tables") or []:
        lines.append(f"- {t['action']} {t['kind']}: {t['full_size']} combinations, {t['sampled']} sampled, "
                     f"{t['kept']} after rules ({t['hazardous']} hazardous, {t['undetermined']} undetermined)")
    if r.get("consistency_violations"):
        lines += ["", "## Model consistency violations", ""]
        lines += [f"- {v}" for v in r["consistency_violations"]]
    if r.get("executions"):
        lines += ["", "## Test execution", ""]
        for s, t in r["executions"].items():
            lines.append(f"- {s}: {t['pass']} pass, {t['fail']} fail, {t['error']} error")
    return "\n".join(lines) + "\n"
