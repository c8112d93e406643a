import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import covering_ok
from stpa_workbench.context import (HAZARDOUS, NOT_HAZARDOUS, UNDETERMINED, AnalysisError,
                                    ContextRow, HazardVerdict, analyze_project, apply_domain_rules,
                                    build_uca_table, enumerate_contexts, evaluate_hazards,
                                    generate_covering_array, refine_constraints, table_csv)
from stpa_workbench.model import (And, Atom, Const, ContextKind, ControlAction, DomainRule, GuideType,
                                  ProcessVariable, SafetyRequirement, VariableKind, eval_bool)

P = ContextKind.PROVIDING
ACCEL = "accelerateSignal"


def _var(name, *domain):
    return ProcessVariable(name, VariableKind.INTERNAL, tuple(domain))


def _accel_rows(acc):
    action = acc.action(ACCEL)
    return enumerate_contexts(action, P, [acc.variable(n) for n in action.relevant])


def _row(**values):
    order = ("distance", "speed", "brake", "mode")
    return ContextRow(ACCEL, P, tuple((k, values[k]) for k in order))


# -- enumeration ------------------------------------------------------------

def test_acc_full_enumeration(acc):
    rows = _accel_rows(acc)
    assert len(rows) == 72 == 3 * 3 * 2 * 4
    assert all(r.verdict.status == UNDETERMINED for r in rows)


def test_small_enumerations():
    a = ControlAction("act", "c")
    assert len(enumerate_contexts(a, P, [_var("x", "0", "1")])) == 2
    rows = enumerate_contexts(a, P, [_var("x", "0", "1"), _var("y", "a", "b", "c")])
    assert [tuple(v for _, v in r.valuation) for r in rows] == list(
        itertools.product("01", "abc"))


def test_enumeration_needs_variables():
    with pytest.raises(AnalysisError, match="no process model declared for action act"):
        enumerate_contexts(ControlAction("act", "c"), P, [])


# -- covering arrays --------------------------------------------------------

def test_acc_pairwise_size():
    for seed in (0, 1, 42):
        ca = generate_covering_array((3, 3, 2, 4), 2, seed)
        assert 12 <= len(ca.rows) <= 15
        assert covering_ok((3, 3, 2, 4), ca.rows, 2)


def test_two_binary_columns_give_full_product():
    ca = generate_covering_array((2, 2), 2, 0)
    assert sorted(ca.rows) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_three_binary_columns_need_four_rows():
    # no three rows can cover all twelve pairs
    pairs = list(itertools.product(range(2), repeat=3))
    assert not any(covering_ok((2, 2, 2), rows, 2) for rows in itertools.combinations(pairs, 3))
    ca = generate_covering_array((2, 2, 2), 2, 0)
    assert len(ca.rows) >= 4 and covering_ok((2, 2, 2), ca.rows, 2)


def test_strength_above_column_count_is_rejected():
    with pytest.raises(ValueError):
        generate_covering_array((2, 3), 3, 0)


def test_covering_array_is_deterministic():
    assert generate_covering_array((3, 4, 2, 5), 2, 7) == generate_covering_array((3, 4, 2, 5), 2, 7)


@settings(max_examples=120, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=2, max_size=6), st.integers(2, 3),
       st.integers(0, 10**6))
def test_covering_property(domains, t, seed):
    t = min(t, len(domains))
    ca = generate_covering_array(domains, t, seed)
    assert covering_ok(domains, ca.rows, t)
    assert len(ca.rows) <= math.prod(domains)
    assert len(ca.rows) >= math.prod(sorted(domains)[-t:])


# -- rules and hazards ------------------------------------------------------

def test_acc_pairwise_then_cancel_rule(acc):
    table = analyze_project(acc, "pairwise", seed=42).table(ACCEL, P)
    assert len(table.sampled) == 12 and len(table.kept) == 6
    assert {rule for _, rule in table.removed} == {"R1"}


def test_rule_edge_cases(acc):
    rows = _accel_rows(acc)
    kept, removed = apply_domain_rules(rows, [])
    assert kept == rows and removed == []
    kept, removed = apply_domain_rules(rows, [DomainRule("T", "all", Const(True))])
    assert kept == [] and [r for r, _ in removed] == rows


def test_table_rows(acc):
    rows = evaluate_hazards([
        _row(distance="lessOrEqualSafe", speed="equalsDesired", brake="applied", mode="cruise"),
        _row(distance="lessOrEqualSafe", speed="greaterThanDesired", brake="notApplied",
             mode="cruise"),
        _row(distance="lessOrEqualSafe", speed="greaterThanDesired", brake="notApplied",
             mode="follow"),
    ], acc.hazard_rules)
    assert rows[0].verdict.status == NOT_HAZARDOUS
    assert rows[1].verdict.status == HAZARDOUS
    assert rows[1].verdict.hazards == ("H2",) and rows[1].verdict.ssrs == ("SSR1.4",)
    assert rows[2].verdict.status == HAZARDOUS and "H1" in rows[2].verdict.hazards


def test_undetermined_without_rules():
    row = ContextRow("other", P, (("x", "a"),))
    assert evaluate_hazards([row], [])[0].verdict.status == UNDETERMINED


def test_verdicts_ignore_row_order(acc):
    rows = _accel_rows(acc)
    forward = {r.valuation: r.verdict for r in evaluate_hazards(rows, acc.hazard_rules)}
    backward = {r.valuation: r.verdict for r in evaluate_hazards(rows[::-1], acc.hazard_rules)}
    assert forward == backward


# -- refinement -------------------------------------------------------------

def test_ssr14_from_its_table_row(acc):
    rows = evaluate_hazards([_row(distance="lessOrEqualSafe", speed="greaterThanDesired",
                                  brake="notApplied", mode="cruise")], acc.hazard_rules)
    expr = refine_constraints(rows, acc.requirement("SSR1.4"))
    assert expr == And((Atom("distance", "lessOrEqualSafe"), Atom("speed", "greaterThanDesired"),
                        Atom("brake", "notApplied"), Atom("mode", "cruise")))
    assert eval_bool(expr, rows[0].values)
    for v in _accel_rows(acc):
        assert eval_bool(expr, v.values) == (v.values == rows[0].values)


def test_two_rows_differing_in_mode():
    req = SafetyRequirement("S", "t")
    verdict = dict(status=HAZARDOUS, hazards=("H",), ssrs=("S",))
    rows = [ContextRow("a", P, (("x", "1"), ("mode", m)), HazardVerdict(**verdict))
            for m in ("cruise", "follow")]
    expr = refine_constraints(rows, req)
    assert len(expr.operands) == 2 and all(len(c.operands) == 2 for c in expr.operands)


def test_rows_covering_everything_refine_to_a_tautology():
    a = ControlAction("a", "c")
    rows = [ContextRow(r.action, r.kind, r.valuation, HazardVerdict(HAZARDOUS, ("H",), ("S",)))
            for r in enumerate_contexts(a, P, [_var("x", "0", "1"), _var("y", "a", "b")])]
    expr = refine_constraints(rows, SafetyRequirement("S", "t"))
    assert all(eval_bool(expr, dict(zip("xy", v))) for v in itertools.product("01", "ab"))


def test_refinement_needs_tagged_rows():
    with pytest.raises(AnalysisError, match="S9"):
        refine_constraints([], SafetyRequirement("S9", "t"))


def test_full_table_refinement_is_exact(acc):
    analysis = analyze_project(acc, "full")
    for ref in analysis.refinements:
        if ref.source != "rows":
            continue
        for row in analysis.table(ref.action, ref.kind).kept:
            tagged = row.verdict.hazardous and ref.requirement in row.verdict.ssrs
            assert eval_bool(ref.constraint, row.values) == tagged


def test_sampled_refinements_are_flagged(acc):
    sources = {r.source for r in analyze_project(acc, "pairwise", 42).refinements}
    assert "rows" not in sources


# -- scaffolding and export -------------------------------------------------

def test_uca_templates(acc):
    assert len(build_uca_table(acc.actions)) == 8
    assert build_uca_table([ControlAction("a", "c", safety_critical=False)]) == []
    one = build_uca_table([ControlAction("a", "c")])
    assert [u.guide_type for u in one] == list(GuideType)


def test_csv_columns(acc):
    table = analyze_project(acc, "pairwise", 42).table(ACCEL, P)
    lines = table_csv(table).splitlines()
    assert lines[0] == "distance,speed,brake,mode,kind,hazardous,hazards,ssrs,removed_by_rule"
    assert len(lines) == 13
    assert sum(line.endswith(",R1") for line in lines) == 6
