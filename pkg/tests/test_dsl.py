import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from generators import projects
from stpa_workbench.dsl import (ProjectParseError, parse_guard, parse_project, parse_transition,
                                render_project)
from stpa_workbench.lexer import ParseError
from stpa_workbench.model import And, Atom, Or, Project, validate
from stpa_workbench.pipeline import bundled


def test_empty_input():
    assert parse_project("") == Project()


def test_unclosed_variable_block():
    with pytest.raises(ProjectParseError) as exc:
        parse_project("variable distance { lessOrEqualSafe greaterThanSafe")
    assert len(exc.value.errors) == 1


def test_errors_in_several_blocks_surface_together():
    src = "accident A1\nhazard H1 \"h\" causes\naccident A2 \"fine\"\nrule R1 \"r\" forbid x ==\n"
    with pytest.raises(ProjectParseError) as exc:
        parse_project(src)
    # one error per broken block, each reported where the parser got stuck
    lines = [e.span.line for e in exc.value.errors]
    assert lines == [2, 3, 4]


def test_duplicate_block_id():
    with pytest.raises(ProjectParseError, match="duplicate"):
        parse_project('accident A1 "x"\naccident A1 "y"\n')


def test_guard_precedence():
    assert parse_guard("speed == greaterThanDesired && brake == notApplied") == And(
        (Atom("speed", "greaterThanDesired"), Atom("brake", "notApplied")))
    assert parse_guard("a == x || b == y && c == z") == Or(
        (Atom("a", "x"), And((Atom("b", "y"), Atom("c", "z")))))
    assert parse_guard("a == x OR b != y AND NOT c == z") == parse_guard(
        "a == x || (b != y && !(c == z))")


def test_guard_missing_value():
    with pytest.raises(ParseError, match="expected value label"):
        parse_guard("mode ==")


def test_transition_declarations():
    t = parse_transition("controlSpeed [speed == lessThanDesired && distance == greaterThanSafe"
                         " && mode == cruise && brake == notApplied] / accelerateSignal  @SSR1.3")
    assert t.event == "controlSpeed" and t.emits == "accelerateSignal"
    assert t.ssr_labels == ("SSR1.3",) and len(t.guard.operands) == 4
    tick = parse_transition("tick / ")
    assert (tick.guard, tick.emits, tick.assignments) == (None, None, ())
    # undeclared labels are a validation matter, not a syntax error
    assert parse_transition("ev [x == 1] /").guard == Atom("x", "1")


def test_assignments_and_emission():
    t = parse_transition("brakePress / mode := standby, brake := applied")
    assert t.assignments == (("mode", "standby"), ("brake", "applied")) and t.emits is None


def test_bundled_round_trip(acc):
    assert parse_project(render_project(acc)) == acc


def test_comments_are_ignored():
    assert parse_project("# nothing\n  # still nothing\n") == Project()


@settings(max_examples=150, suppress_health_check=[HealthCheck.too_slow])
@given(projects())
def test_round_trip(project):
    assert validate(project).ok, validate(project).errors
    assert parse_project(render_project(project)) == project


@settings(max_examples=200)
@given(st.lists(st.sampled_from(list('ab{}[]()"=!:-/#@\n \t1.') + ["hazard", "ssr", "\\"]),
                max_size=60).map("".join))
def test_error_spans_lie_inside_the_source(src):
    try:
        parse_project(src)
    except ProjectParseError as exc:
        lines = src.split("\n")
        for e in exc.errors:
            assert e.message
            assert 1 <= e.span.line <= len(lines)
            assert 1 <= e.span.column <= len(lines[e.span.line - 1]) + 1
            assert e.span.length >= 1


def test_parsing_is_pure():
    src = bundled("acc")
    assert parse_project(src) == parse_project(src)
