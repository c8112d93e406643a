import json
import random

import pytest

from stpa_workbench.cli import main
from stpa_workbench.efsm import initial_configuration, step
from stpa_workbench.model import NO_ACTION
from stpa_workbench.sut import (ERROR, FAIL, MUTANTS, PASS, SUTS, AccController, execute)
from stpa_workbench.testgen import (TestCase, TestStep, TestSuite, concretize, suite_to_json)

SMALL = """\
variable x : internal { no yes }
statemachine m {
  states a, b
  initial a { x = no }
  events go, back, poke
  t1 : a -> b : go / x := yes
  t2 : b -> a : back
  t3 : a -> a : poke [x == no] /
}
"""


def run(*argv):
    return main([str(a) for a in argv])


def read(path):
    return json.loads(path.read_text())


# -- analyze ----------------------------------------------------------------

def test_analyze_pairwise(tmp_path):
    assert run("analyze", "@acc", "--mode", "pairwise", "--seed", 42, "--out", tmp_path) == 0
    lines = (tmp_path / "analyze" / "contexts_accelerateSignal_Providing.csv").read_text().splitlines()
    assert 12 <= len(lines) - 1 <= 15
    assert sum(1 for line in lines[1:] if not line.endswith(",R1")) == 6


def test_analyze_full(tmp_path):
    assert run("analyze", "@acc", "--out", tmp_path) == 0
    lines = (tmp_path / "analyze" / "contexts_accelerateSignal_Providing.csv").read_text().splitlines()
    assert len(lines) == 73


def test_missing_file(tmp_path, capsys):
    missing = tmp_path / "nope.stpa"
    assert run("analyze", missing, "--out", tmp_path) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_mode_and_parse_errors(tmp_path, capsys):
    assert run("analyze", "@acc", "--mode", "t=zero", "--out", tmp_path) == 2
    bad = tmp_path / "bad.stpa"
    bad.write_text('accident A1\nhazard H1 "x" causes A9\n')
    assert run("analyze", bad, "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "bad.stpa:" in err


# -- verify -----------------------------------------------------------------

def test_verify_bundled(tmp_path):
    assert run("verify", "@acc", "--out", tmp_path) == 0
    data = read(tmp_path / "verify" / "verdicts.json")
    assert {v["result"] for v in data["verdicts"]} == {"holds"}
    assert data["consistency_violations"] == [] and data["determinism_conflicts"] == []


def test_verify_mutant(tmp_path):
    assert run("verify", "@acc_guard_mutant", "--out", tmp_path) == 1
    data = read(tmp_path / "verify" / "verdicts.json")
    bad = [v for v in data["verdicts"] if v["result"] == "violated"]
    assert [v["requirement"] for v in bad] == ["SSR1.4"]
    trace = read(tmp_path / "verify" / bad[0]["counterexample"])
    assert trace["steps"] and 0 <= trace["loop"] < len(trace["steps"])


def test_verify_node_cap(tmp_path):
    assert run("verify", "@acc", "--node-cap", 10, "--out", tmp_path) == 3


# -- testgen ----------------------------------------------------------------

def test_testgen_bundled_twice(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("testgen", "@acc", "--concrete", "--boundary", "--out", out) == 0
    for name in ("suite.json", "traceability.csv", "coverage.json", "scripts.json"):
        assert (a / "testgen" / name).read_bytes() == (b / "testgen" / name).read_bytes(), name
    cov = read(a / "testgen" / "coverage.json")
    assert cov["ssr_coverage_percent"] == 100.0
    t = cov["coverage"]["transitions"]
    assert t["covered"] == t["reachable"] == t["total"]


def test_strict_pairs_names_the_unreachable_pair(tmp_path, capsys):
    project = tmp_path / "small.stpa"
    project.write_text(SMALL)
    assert run("testgen", project, "--criteria", "pairs", "--out", tmp_path) == 0
    assert run("testgen", project, "--criteria", "pairs", "--strict", "--out", tmp_path) == 1
    assert "t2->t3 unreachable" in capsys.readouterr().err


def test_bad_criteria_and_budget(tmp_path):
    assert run("testgen", "@acc", "--criteria", "everything", "--out", tmp_path) == 2
    assert run("testgen", "@acc", "--budget", 0, "--out", tmp_path) == 2


# -- execute ----------------------------------------------------------------

def test_empty_suite_executes_cleanly(tmp_path):
    suite = tmp_path / "empty.json"
    suite.write_text(suite_to_json(TestSuite([])))
    assert run("execute", "@acc", suite, "--out", tmp_path) == 0
    report = read(tmp_path / "execute" / "execution_acc-ref.json")
    assert report["totals"] == {"pass": 0, "fail": 0, "error": 0}


def test_unknown_sut_and_bad_suite(tmp_path):
    suite = tmp_path / "empty.json"
    suite.write_text(suite_to_json(TestSuite([])))
    assert run("execute", "@acc", suite, "--sut", "nobody", "--out", tmp_path) == 2
    junk = tmp_path / "junk.json"
    junk.write_text("{")
    assert run("execute", "@acc", junk, "--out", tmp_path) == 2


def test_execute_reference_and_mutants(tmp_path):
    assert run("testgen", "@acc", "--out", tmp_path) == 0
    suite = tmp_path / "testgen" / "suite.json"
    assert run("execute", "@acc", suite, "--out", tmp_path) == 0
    for mutant in MUTANTS:
        assert run("execute", "@acc", suite, "--sut", mutant, "--out", tmp_path) == 1
    over = read(tmp_path / "execute" / "execution_acc-mutant-overspeed.json")
    assert any(r["outcome"] == "fail" and "SSR1.4" in r["ssrs"] for r in over["results"])


def test_adapter_exceptions_become_errors(acc):
    class Broken(AccController):
        def apply(self, event, inputs):
            raise RuntimeError("sensor offline")

    case = TestCase("C1", (TestStep("powerOn", (), NO_ACTION, "standby", "t1"),), "manual")
    report = execute(concretize(case, acc.concretizations), Broken(acc.concretizations))
    assert [r.outcome for r in report.results] == [ERROR]
    assert "sensor offline" in report.results[0].observed


def test_must_not_reproduce_polarity(acc):
    steps = (TestStep("powerOn", (), NO_ACTION, "standby", "t1"),)
    faithful = TestCase("X1", steps, "counterexample:S", "must-not-reproduce")
    report = execute(concretize(faithful, acc.concretizations), AccController(acc.concretizations))
    assert report.results[0].outcome == FAIL
    diverging = TestCase("X2", (TestStep("powerOn", (), "accelerateSignal", "standby", "t1"),),
                         "counterexample:S", "must-not-reproduce")
    report = execute(concretize(diverging, acc.concretizations), AccController(acc.concretizations))
    assert report.results[0].outcome == PASS


# -- co-simulation ----------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_reference_controller_follows_the_model(acc, seed):
    """Random event walks through the model, replayed on the controller."""
    rng = random.Random(seed)
    efsm = acc.efsm
    inputs = {v.name for v in acc.variables if v.is_input}
    for n in range(30):
        config, steps = initial_configuration(efsm), []
        for _ in range(25):
            ev = rng.choice(efsm.events)
            config, emitted, t = step(efsm, config, ev)
            delta = tuple((v, x) for v, x in (t.assignments if t else ()) if v in inputs)
            steps.append(TestStep(ev, delta, emitted or NO_ACTION, config.state, t and t.id,
                                  config.valuation))
        case = TestCase(f"W{n}", tuple(steps), "walk")
        for script in concretize(case, acc.concretizations, seed * 100 + n, boundary=True):
            result = execute([script], SUTS["acc-ref"](acc)).results[0]
            assert result.outcome == PASS, (case.id, script.variant, result)


# -- run-all and report -----------------------------------------------------

def test_run_all_and_report(tmp_path):
    assert run("run-all", "@acc", "--out", tmp_path) == 0
    report = read(tmp_path / "report" / "report.json")
    assert [r["id"] for r in report["requirements"]] == ["SSR1.1", "SSR1.2", "SSR1.3", "SSR1.4"]
    for row in report["requirements"]:
        assert row["verdict"] == "holds" and row["covering_tests"] > 0
    assert report["tool_version"] and report["seeds"]["testgen"] == 0
    assert "SSR1.4" in (tmp_path / "report" / "report.md").read_text()


def test_report_after_mutant_verify(tmp_path):
    assert run("analyze", "@acc_guard_mutant", "--out", tmp_path) == 0
    assert run("verify", "@acc_guard_mutant", "--out", tmp_path) == 1
    assert run("testgen", "@acc_guard_mutant", "--out", tmp_path) == 0
    assert run("report", "@acc_guard_mutant", "--out", tmp_path) == 0
    rows = {r["id"]: r for r in read(tmp_path / "report" / "report.json")["requirements"]}
    assert rows["SSR1.4"]["verdict"] == "violated"
    assert rows["SSR1.4"]["counterexample"] == "verify/counterexamples/SSR1.4.json"


def test_report_without_artifacts(tmp_path, capsys):
    assert run("report", "@acc", "--out", tmp_path) == 2
    assert "summary.json" in capsys.readouterr().err
