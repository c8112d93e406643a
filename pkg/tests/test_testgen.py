import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import efsm_atoms, random_efsm, random_formula
from stpa_workbench.checker import VIOLATED, Counterexample, check_invariant, check_ltl
from stpa_workbench.efsm import expand, initial_configuration, step
from stpa_workbench.model import NO_ACTION, Atom, Efsm, SafetyRequirement, Transition
from stpa_workbench.pipeline import run_verify
from stpa_workbench.sut import AccController
from stpa_workbench.testgen import (CRITERIA, MUST_NOT_REPRODUCE, ConcretizationError,
                                    IntegrityError, TestCase, TestStep, TestSuite, concretize,
                                    dedup, from_counterexample, generate, measure,
                                    reachable_obligations, replay_case, structural_pairs,
                                    suite_from_json, suite_to_json, traceability)

ACCEL = "accelerateSignal"


def _inputs(project):
    return [v.name for v in project.variables if v.is_input]


def _suite(project, seed=0, criteria=CRITERIA):
    return generate(project.efsm, criteria, seed, input_variables=_inputs(project))


def _covered(report):
    return {c: report.covered[c] for c in CRITERIA}


# -- generation -------------------------------------------------------------

def test_acc_full_reachable_coverage(acc):
    suite = _suite(acc)
    report = measure(suite, acc.efsm)
    for c in CRITERIA:
        m = report.metric(c)
        assert m.covered == m.reachable, c
    assert report.states.covered == report.states.total == len(acc.efsm.states)
    assert report.transitions.covered == report.transitions.total == len(acc.efsm.transitions)
    assert report.pairs.total == len(structural_pairs(acc.efsm))
    assert not [s for s in suite.shortfall if "budget" in s]


def test_single_self_loop():
    efsm = Efsm("m", ("s",), "s", (), ("tick",), (Transition("t", "s", "s", "tick"),))
    suite = generate(efsm, ["transitions"])
    assert len(suite.cases) == 1 and len(suite.cases[0].steps) == 1


def test_unsatisfiable_guard_is_a_shortfall():
    ts = (Transition("ok", "s", "s", "tick"),
          Transition("never", "s", "s", "tock", Atom("x", "1")))
    efsm = Efsm("m", ("s",), "s", (("x", "0"),), ("tick", "tock"), ts)
    suite = generate(efsm, ["transitions"])
    assert suite.shortfall == ["transitions: never unreachable"]


def test_budget_shortfall(acc):
    suite = generate(acc.efsm, ["transitions"], 0, budget=3)
    assert sum(len(c.steps) for c in suite.cases) <= 3
    assert any("budget" in s for s in suite.shortfall)
    with pytest.raises(ValueError):
        generate(acc.efsm, ["transitions"], 0, budget=0)


def test_seed_determinism(acc):
    assert suite_to_json(dedup(_suite(acc, 7))) == suite_to_json(dedup(_suite(acc, 7)))


def test_inputs_touch_only_input_variables(acc):
    allowed = set(_inputs(acc))
    for case in _suite(acc).cases:
        for s in case.steps:
            assert {v for v, _ in s.inputs} <= allowed


# -- measure ----------------------------------------------------------------

def test_empty_suite_measures_zero(acc):
    report = measure(TestSuite([]), acc.efsm)
    for c in CRITERIA:
        assert report.metric(c).covered == 0 and report.metric(c).total > 0


def test_pairs_never_exceed_total(acc):
    report = measure(_suite(acc, 3, ["transitions"]), acc.efsm)
    assert report.pairs.covered <= report.pairs.total


def test_corrupt_case_is_an_integrity_error(acc):
    case = _suite(acc).cases[0]
    bad_step = case.steps[0].__class__(case.steps[0].event, (), "bogus",
                                       case.steps[0].expected_state, case.steps[0].transition)
    broken = TestCase("TCX", (bad_step,) + case.steps[1:], case.origin)
    with pytest.raises(IntegrityError, match="TCX step 0"):
        measure([broken], acc.efsm)


def test_monotone_coverage(acc):
    cases = _suite(acc).cases
    prev = None
    for i in range(len(cases) + 1):
        report = measure(cases[:i], acc.efsm)
        if prev is not None:
            for c in CRITERIA:
                assert report.covered[c] >= prev.covered[c]
        prev = report


# -- dedup ------------------------------------------------------------------

def test_identical_cases_collapse(acc):
    case = _suite(acc).cases[0]
    assert dedup(TestSuite([case, case])).cases == [case]


def test_dedup_is_identity_without_duplicates(acc):
    cases = dedup(_suite(acc)).cases
    assert dedup(TestSuite(list(cases))).cases == cases


def test_acc_dedup_shrinks_and_preserves(acc):
    raw = _suite(acc)
    final = dedup(raw)
    assert len(final.cases) < len(raw.cases)
    assert _covered(measure(final, acc.efsm)) == _covered(measure(raw, acc.efsm))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9), st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 12)),
                                       max_size=25))
def test_dedup_preserves_coverage(seed, picks):
    efsm = random_efsm(random.Random(seed))
    pool = generate(efsm, CRITERIA, seed % 97).cases
    if not pool:
        return
    cases = []
    for i, (which, cut) in enumerate(picks):
        c = pool[which % len(pool)]
        cases.append(TestCase(f"R{i}", c.steps[:max(1, cut)], c.origin))
    suite = TestSuite(cases)
    assert _covered(measure(dedup(suite), efsm)) == _covered(measure(suite, efsm))


# -- replay soundness -------------------------------------------------------

@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_generated_tests_replay(seed):
    rng = random.Random(seed)
    efsm = random_efsm(rng)
    suite = generate(efsm, CRITERIA, seed)
    for case in suite.cases:
        configs = replay_case(efsm, case)
        assert [c.state for c in configs[1:]] == [s.expected_state for s in case.steps]
    k = expand(efsm)
    f = random_formula(rng, efsm_atoms(efsm))
    verdict = check_ltl(k, f)
    if verdict.result == VIOLATED:
        case = from_counterexample(k, verdict.counterexample, SafetyRequirement("S", "t"), efsm)
        replay_case(efsm, case)
        assert len(case.steps) == len(verdict.counterexample.path)


# -- counterexample tests ---------------------------------------------------

def test_mutant_counterexample_test(acc_mutant, tmp_path):
    result = run_verify(acc_mutant, tmp_path)
    k = result.kripke
    verdict = next(v for v in result.verdicts if v.requirement == "SSR1.4")
    case = from_counterexample(k, verdict.counterexample, acc_mutant.requirement("SSR1.4"),
                               acc_mutant.efsm)
    assert case.polarity == MUST_NOT_REPRODUCE and case.origin == "counterexample:SSR1.4"
    emitting = [s for s in case.steps if s.expected_emission == ACCEL
                and dict(s.expected_valuation)["speed"] == "greaterThanDesired"]
    assert emitting


def test_stutter_lasso_test_length():
    efsm = Efsm("m", ("a", "b"), "a", (), ("go",), (Transition("t", "a", "b", "go"),))
    k = expand(efsm)
    cex = check_invariant(k, Atom("state", "a")).counterexample
    case = from_counterexample(k, cex, SafetyRequirement("S", "t"), efsm)
    assert len(case.steps) == len(cex.prefix) + 1
    assert case.steps[-1].event == "stutter"


def test_empty_prefix_lasso():
    t = Transition("on", "s", "s", "tick", Atom("bit", "off"), (("bit", "on"),))
    u = Transition("off", "s", "s", "tock", Atom("bit", "on"), (("bit", "off"),))
    efsm = Efsm("toggle", ("s",), "s", (("bit", "off"),), ("tick", "tock"), (t, u))
    k = expand(efsm)
    cex = check_invariant(k, Atom("bit", "on")).counterexample
    assert cex.loop == 0
    case = from_counterexample(k, cex, SafetyRequirement("S", "t"), efsm)
    assert case.steps[0].event == cex.events[0] == "tick"


def test_forged_counterexample_is_rejected(acc):
    k = expand(acc.efsm)
    with pytest.raises(IntegrityError):
        from_counterexample(k, Counterexample((0, 5), ("brakePress", "brakePress"), 0),
                            SafetyRequirement("S", "t"), acc.efsm)


# -- concretization ---------------------------------------------------------

def _one_input_case(var, label):
    return TestCase("C1", (TestStep("ev", ((var, label),), NO_ACTION, "s", None),), "manual")


def test_interval_membership_and_boundaries(acc):
    case = _one_input_case("distance", "lessOrEqualSafe")
    [sample] = concretize(case, acc.concretizations, seed=1)
    x = dict(sample.steps[0].inputs)["distance"]
    assert 0 <= x <= 50
    variants = concretize(case, acc.concretizations, seed=1, boundary=True)
    values = {v.variant: dict(v.steps[0].inputs)["distance"] for v in variants}
    assert values["low"] == 0 and values["high"] == 50


def test_missing_mapping(acc):
    with pytest.raises(ConcretizationError, match="mode = cruise"):
        concretize(_one_input_case("mode", "cruise"), acc.concretizations)


def test_t6_case_speed_is_below_desired(acc):
    speed = acc.concretization("speed")
    below, at = speed.lookup("lessThanDesired"), speed.lookup("equalsDesired")
    case = _one_input_case("speed", "lessThanDesired")
    for seed in range(50):
        x = dict(concretize(case, acc.concretizations, seed)[0].steps[0].inputs)["speed"]
        assert x in below and x not in at and x < AccController.DESIRED_SPEED


def test_concretize_is_deterministic(acc):
    case = _suite(acc).cases[0]
    assert concretize(case, acc.concretizations, 5) == concretize(case, acc.concretizations, 5)


# -- traceability -----------------------------------------------------------

def test_acc_traceability(acc):
    m = traceability(dedup(_suite(acc)), acc.requirements)
    assert m.coverage_percent == 100.0
    assert all(n > 0 for n in m.counts.values())
    for s, row in zip(m.ssrs, m.cells):
        assert m.count(s) == sum(row)
    lines = m.to_csv().splitlines()
    assert lines[0].startswith("ssr_id,") and lines[0].endswith(",count")
    assert lines[-1].startswith("coverage_percent,") and lines[-1].endswith("100.0")


def test_empty_suite_traceability(acc):
    m = traceability(TestSuite([]), acc.requirements)
    assert m.coverage_percent == 0.0 and set(m.counts.values()) == {0}


def test_labelled_reachable_transitions_are_traced(acc):
    m = traceability(_suite(acc), acc.requirements)
    labelled = {x for t in acc.efsm.transitions for x in t.ssr_labels}
    reachable = reachable_obligations(acc.efsm)["transitions"]
    assert reachable == {t.id for t in acc.efsm.transitions}
    for ssr in labelled:
        assert m.count(ssr) > 0


def test_suite_json_round_trip(acc):
    suite = dedup(_suite(acc))
    again = suite_from_json(suite_to_json(suite))
    assert again.cases == suite.cases and suite_to_json(again) == suite_to_json(suite)


# -- the model itself, step by step ----------------------------------------

def test_random_walks_replay(acc):
    rng = random.Random(0)
    for n in range(100):
        config, steps = initial_configuration(acc.efsm), []
        for _ in range(15):
            ev = rng.choice(acc.efsm.events)
            config, emitted, t = step(acc.efsm, config, ev)
            steps.append(TestStep(ev, (), emitted or NO_ACTION, config.state, t and t.id,
                                  config.valuation))
        replay_case(acc.efsm, TestCase(f"W{n}", tuple(steps), "walk"))
