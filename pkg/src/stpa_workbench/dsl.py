"""Parser and printer for ``.stpa`` project files.

A project is a sequence of top-level declarations::

    accident A1 "ACC vehicle collides with a vehicle in front while ACC is active"
    hazard H1 "..." causes A1
    controller acc "ACC software controller"
    variable distance : interaction { lessOrEqualSafe greaterThanSafe noTarget }
    action accelerateSignal : acc critical relevant distance, speed, brake, mode
    uca UCA1 : accelerateSignal ProvidedUnsafe "..." -> H2
    ssr SSR1.4 "..." from UCA1
    rule R1 "..." forbid mode == off || brake == applied
    hazard-rule HR1 : accelerateSignal Providing when speed == greaterThanDesired -> H2 @SSR1.4
    statemachine acc { states ..., initial ..., events ..., transitions }
    concretize distance { lessOrEqualSafe [0, 50] noTarget {-1} }

Parsing recovers at the next top-level keyword, so one pass reports every
broken declaration.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .lexer import ParseError, SourceSpan, Token, TokenStream, tokenize
from .ltl import parse_ltl, render_ltl
from .model import (Accident, And, Atom, BoolExpr, Const, ContextKind, ControlAction,
                    Controller, DomainRule, Efsm, GuideType, Hazard, HazardRule, Interval,
                    Literals, Not, Or, ProcessVariable, Project, SafetyRequirement,
                    Transition, UnsafeControlAction, VariableConcretization, VariableKind,
                    render_bool)

TOP_LEVEL = ("accident", "hazard", "controller", "variable", "action", "uca", "ssr",
             "rule", "hazard-rule", "statemachine", "concretize")
CONTEXTUAL = ("causes", "critical", "relevant", "from", "constraint", "ltl", "forbid",
              "when", "within", "states", "initial", "events")
OPERATOR_WORDS = ("true", "false", "AND", "OR", "NOT")
RESERVED = frozenset(TOP_LEVEL + CONTEXTUAL + OPERATOR_WORDS)


class ProjectParseError(Exception):
    """Raised by :func:`parse_project` with every error found in one pass."""

    def __init__(self, errors: list[ParseError]):
        super().__init__("\n".join(str(e) for e in errors))
        self.errors = errors


@dataclass(frozen=True)
class TransitionDecl:
    event: str
    guard: Optional[BoolExpr]
    assignments: tuple[tuple[str, str], ...]
    emits: Optional[str]
    ssr_labels: tuple[str, ...]


# --------------------------------------------------------------------------
# Guards
# --------------------------------------------------------------------------


def _parse_or(s: TokenStream) -> BoolExpr:
    items = [_parse_and(s)]
    while s.accept("||") or (s.current.is_word("OR") and s.advance()):
        items.append(_parse_and(s))
    return items[0] if len(items) == 1 else Or(tuple(items))


def _parse_and(s: TokenStream) -> BoolExpr:
    items = [_parse_not(s)]
    while s.accept("&&") or (s.current.is_word("AND") and s.advance()):
        items.append(_parse_not(s))
    return items[0] if len(items) == 1 else And(tuple(items))


def _parse_not(s: TokenStream) -> BoolExpr:
    if s.accept("!") or (s.current.is_word("NOT") and s.advance()):
        return Not(_parse_not(s))
    return _parse_atom(s)


def _parse_atom(s: TokenStream) -> BoolExpr:
    tok = s.current
    if s.accept("("):
        inner = _parse_or(s)
        s.expect(")")
        return inner
    if tok.kind != "IDENT" or tok.value in TOP_LEVEL:
        raise s.error("expected variable name", ["variable"])
    if tok.value in ("true", "false") and not s.peek().is_punct("==", "!="):
        s.advance()
        return Const(tok.value == "true")
    s.advance()
    op = s.accept("==", "!=")
    if op is None:
        raise s.error("expected '==' or '!='", ["==", "!="])
    value = s.current
    if value.kind not in ("IDENT", "NUMBER") or value.value in TOP_LEVEL:
        raise s.error("expected value label", ["value label"])
    s.advance()
    return Atom(tok.value, value.value, op.value == "!=")


def _stream(source: str, file: str) -> TokenStream:
    tokens, errors = tokenize(source, file)
    if errors:
        raise errors[0]
    return TokenStream(tokens)


def parse_guard(source: str, file: str = "<guard>") -> BoolExpr:
    """Parse a guard. ``!``/``NOT`` binds tighter than ``&&``/``AND``, which
    binds tighter than ``||``/``OR``."""
    s = _stream(source, file)
    expr = _parse_or(s)
    if not s.at_end():
        raise s.error("expected end of expression")
    return expr


def parse_transition(source: str, file: str = "<transition>") -> TransitionDecl:
    s = _stream(source, file)
    decl = _parse_transition_decl(s)
    if not s.at_end():
        raise s.error("expected end of transition")
    return decl


def _parse_transition_decl(s: TokenStream) -> TransitionDecl:
    event = s.expect_ident("event name").value
    guard = None
    if s.accept("["):
        guard = _parse_or(s)
        s.expect("]")
    assignments: list[tuple[str, str]] = []
    emits: Optional[str] = None
    if s.accept("/"):
        while _starts_effect(s):
            name = s.advance()
            if s.accept(":="):
                value = s.current
                if value.kind not in ("IDENT", "NUMBER"):
                    raise s.error("expected value label", ["value label"])
                s.advance()
                assignments.append((name.value, value.value))
            else:
                if emits is not None:
                    raise ParseError(name.span, "a transition emits at most one control action")
                emits = name.value
            if not s.accept(","):
                break
    labels: list[str] = []
    while s.current.kind == "LABEL":
        labels.append(s.advance().value)
    return TransitionDecl(event, guard, tuple(assignments), emits, tuple(labels))


def _starts_effect(s: TokenStream) -> bool:
    tok = s.current
    if tok.kind != "IDENT" or tok.value in RESERVED:
        return False
    # "t7 : a -> b" starts the next transition, not an effect
    return not s.peek().is_punct(":")


# --------------------------------------------------------------------------
# Projects
# --------------------------------------------------------------------------


class _ProjectParser:
    def __init__(self, tokens: list[Token], errors: list[ParseError]):
        self.s = TokenStream(tokens)
        self.errors = errors
        self.seen: dict[tuple[str, str], SourceSpan] = {}
        self.parts: dict[str, list] = {k: [] for k in (
            "accidents", "hazards", "controllers", "variables", "actions", "ucas",
            "requirements", "domain_rules", "hazard_rules", "concretizations")}
        self.efsm: Optional[Efsm] = None

    def run(self) -> Project:
        s = self.s
        while not s.at_end():
            tok = s.current
            start = s.pos
            if tok.kind != "IDENT" or tok.value not in TOP_LEVEL:
                self.errors.append(s.error("expected a declaration", list(TOP_LEVEL)))
                self._recover(start)
                continue
            try:
                getattr(self, "_" + tok.value.replace("-", "_"))()
            except ParseError as err:
                self.errors.append(err)
                self._recover(start)
        return Project(efsm=self.efsm, **{k: tuple(v) for k, v in self.parts.items()})

    def _recover(self, start: int) -> None:
        s = self.s
        if s.pos == start:
            s.advance()
        while not s.at_end() and not (s.current.kind == "IDENT" and s.current.value in TOP_LEVEL):
            s.advance()

    # helpers ---------------------------------------------------------------

    def _id(self, kind: str, what: str = "identifier") -> str:
        tok = self.s.current
        if tok.kind != "IDENT" or tok.value in RESERVED:
            raise self.s.error(f"expected {what}", [what])
        self.s.advance()
        key = (kind, tok.value)
        if key in self.seen:
            self.errors.append(ParseError(tok.span, f"duplicate {kind} id {tok.value!r}"))
        else:
            self.seen[key] = tok.span
        return tok.value

    def _name(self, what: str = "identifier") -> str:
        tok = self.s.current
        if tok.kind != "IDENT" or tok.value in RESERVED:
            raise self.s.error(f"expected {what}", [what])
        return self.s.advance().value

    def _string(self) -> str:
        tok = self.s.current
        if tok.kind != "STRING":
            raise self.s.error("expected string literal", ["string"])
        return self.s.advance().value

    def _id_list(self, what: str) -> tuple[str, ...]:
        items = [self._name(what)]
        while self.s.accept(","):
            items.append(self._name(what))
        return tuple(items)

    def _labels(self) -> tuple[str, ...]:
        labels = []
        while self.s.current.kind == "LABEL":
            labels.append(self.s.advance().value)
        return tuple(labels)

    def _number(self) -> float:
        tok = self.s.current
        if tok.kind != "NUMBER":
            raise self.s.error("expected number", ["number"])
        self.s.advance()
        return float(tok.value)

    # declarations ------------------------------------------------------------

    def _accident(self):
        self.s.advance()
        aid = self._id("accident", "accident id")
        self.parts["accidents"].append(Accident(aid, self._string()))

    def _hazard(self):
        self.s.advance()
        hid = self._id("hazard", "hazard id")
        text = self._string()
        self.s.expect_word("causes")
        self.parts["hazards"].append(Hazard(hid, text, self._id_list("accident id")))

    def _controller(self):
        self.s.advance()
        cid = self._id("controller", "controller id")
        text = self._string() if self.s.current.kind == "STRING" else ""
        self.parts["controllers"].append(Controller(cid, text))

    def _variable(self):
        s = self.s
        s.advance()
        name = self._id("variable", "variable name")
        kind = VariableKind.INTERNAL
        if s.accept(":"):
            word = s.current
            try:
                kind = VariableKind(word.value)
            except ValueError:
                raise s.error("expected variable kind", [k.value for k in VariableKind]) from None
            s.advance()
        parent = None
        if s.current.is_word("within"):
            s.advance()
            pvar = self._name("parent variable")
            s.expect("==")
            parent = (pvar, self._name("parent value"))
        s.expect("{")
        labels = []
        while s.current.kind == "IDENT" and s.current.value not in TOP_LEVEL:
            labels.append(s.advance().value)
        s.expect("}")
        self.parts["variables"].append(ProcessVariable(name, kind, tuple(labels), parent))

    def _action(self):
        s = self.s
        s.advance()
        name = self._id("action", "action name")
        s.expect(":")
        controller = self._name("controller id")
        critical = False
        if s.current.is_word("critical"):
            s.advance()
            critical = True
        relevant: tuple[str, ...] = ()
        if s.current.is_word("relevant"):
            s.advance()
            relevant = self._id_list("variable name")
        self.parts["actions"].append(ControlAction(name, controller, critical, relevant))

    def _uca(self):
        s = self.s
        s.advance()
        uid = self._id("uca", "uca id")
        s.expect(":")
        action = self._name("action name")
        try:
            guide = GuideType(s.current.value)
        except ValueError:
            raise s.error("expected guide type", [g.value for g in GuideType]) from None
        s.advance()
        text = self._string()
        s.expect("->")
        self.parts["ucas"].append(UnsafeControlAction(uid, action, guide, text, self._id_list("hazard id")))

    def _ssr(self):
        s = self.s
        s.advance()
        rid = self._id("ssr", "requirement id")
        text = self._string()
        source = constraint = formula = None
        if s.current.is_word("from"):
            s.advance()
            source = self._name("uca id")
        if s.current.is_word("constraint"):
            s.advance()
            constraint = _parse_or(s)
        if s.current.is_word("ltl"):
            s.advance()
            tok = s.current
            src = self._string()
            try:
                formula = parse_ltl(src, tok.span.file)
            except ParseError as err:
                raise ParseError(tok.span, f"in LTL formula: {err.message}", err.expected) from None
        self.parts["requirements"].append(SafetyRequirement(rid, text, source, constraint, formula))

    def _rule(self):
        s = self.s
        s.advance()
        rid = self._id("rule", "rule id")
        text = self._string()
        s.expect_word("forbid")
        self.parts["domain_rules"].append(DomainRule(rid, text, _parse_or(s)))

    def _hazard_rule(self):
        s = self.s
        s.advance()
        rid = self._id("hazard-rule", "rule id")
        s.expect(":")
        action = self._name("action name")
        try:
            kind = ContextKind(s.current.value)
        except ValueError:
            raise s.error("expected context kind", [k.value for k in ContextKind]) from None
        s.advance()
        s.expect_word("when")
        when = _parse_or(s)
        s.expect("->")
        hazards = self._id_list("hazard id")
        self.parts["hazard_rules"].append(HazardRule(rid, action, kind, when, hazards, self._labels()))

    def _concretize(self):
        s = self.s
        s.advance()
        var = self._id("concretize", "variable name")
        s.expect("{")
        mapping = []
        while s.current.kind == "IDENT" and s.current.value not in TOP_LEVEL:
            label = s.advance().value
            if s.accept("["):
                low = self._number()
                s.expect(",")
                high = self._number()
                s.expect("]")
                mapping.append((label, Interval(low, high)))
            elif s.accept("{"):
                values = [self._number()]
                while s.accept(","):
                    values.append(self._number())
                s.expect("}")
                mapping.append((label, Literals(tuple(values))))
            else:
                raise s.error("expected '[' interval or '{' literal set", ["[", "{"])
        s.expect("}")
        self.parts["concretizations"].append(VariableConcretization(var, tuple(mapping)))

    def _statemachine(self):
        s = self.s
        start = s.advance()
        name = self._name("state machine name")
        if self.efsm is not None:
            self.errors.append(ParseError(start.span, "only one statemachine per project"))
        s.expect("{")
        states: list[str] = []
        events: list[str] = []
        initial_state: Optional[str] = None
        initial: list[tuple[str, str]] = []
        transitions: list[Transition] = []
        tids: set[str] = set()
        while not s.current.is_punct("}"):
            tok = s.current
            if tok.is_word("states"):
                s.advance()
                states.extend(self._id_list("state name"))
            elif tok.is_word("events"):
                s.advance()
                events.extend(self._id_list("event name"))
            elif tok.is_word("initial"):
                s.advance()
                initial_state = self._name("state name")
                s.expect("{")
                if not s.current.is_punct("}"):
                    while True:
                        var = self._name("variable name")
                        s.expect("=")
                        value = s.current
                        if value.kind not in ("IDENT", "NUMBER"):
                            raise s.error("expected value label", ["value label"])
                        s.advance()
                        initial.append((var, value.value))
                        if not s.accept(","):
                            break
                s.expect("}")
            elif tok.kind == "IDENT" and tok.value not in RESERVED:
                tid = s.advance()
                if tid.value in tids:
                    self.errors.append(ParseError(tid.span, f"duplicate transition id {tid.value!r}"))
                tids.add(tid.value)
                s.expect(":")
                source = self._name("source state")
                s.expect("->")
                target = self._name("target state")
                s.expect(":")
                d = _parse_transition_decl(s)
                transitions.append(Transition(tid.value, source, target, d.event, d.guard,
                                              d.assignments, d.emits, d.ssr_labels))
            else:
                raise s.error("expected 'states', 'initial', 'events', transition or '}'")
        s.expect("}")
        if initial_state is None:
            raise ParseError(start.span, f"statemachine {name!r} has no initial declaration")
        if self.efsm is None:
            self.efsm = Efsm(name, tuple(states), initial_state, tuple(initial), tuple(events),
                             tuple(transitions))


def parse_project(source: str, file: str = "<project>") -> Project:
    """Parse a project; raises :class:`ProjectParseError` listing all errors.

    Validation of cross references is a separate step (:func:`model.validate`).
    """
    tokens, errors = tokenize(source, file)
    parser = _ProjectParser(tokens, errors)
    project = parser.run()
    if errors:
        errors.sort(key=lambda e: (e.span.line, e.span.column))
        raise ProjectParseError(errors)
    return project


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------


def _q(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() and abs(x) < 1e15 else repr(float(x))


def render_transition(t: Transition) -> str:
    parts = [f"{t.id} : {t.source} -> {t.target} : {t.event}"]
    if t.guard is not None:
        parts.append(f"[{render_bool(t.guard)}]")
    effects = [f"{var} := {value}" for var, value in t.assignments]
    if t.emits is not None:
        effects.append(t.emits)
    parts.append("/ " + ", ".join(effects) if effects else "/")
    parts.extend(f"@{label}" for label in t.ssr_labels)
    return " ".join(parts)


def render_project(p: Project) -> str:
    out: list[str] = []
    for a in p.accidents:
        out.append(f"accident {a.id} {_q(a.description)}")
    for h in p.hazards:
        out.append(f"hazard {h.id} {_q(h.description)} causes {', '.join(h.accidents)}")
    for c in p.controllers:
        out.append(f"controller {c.id} {_q(c.description)}")
    for v in p.variables:
        head = f"variable {v.name} : {v.kind.value}"
        if v.parent is not None:
            head += f" within {v.parent[0]} == {v.parent[1]}"
        out.append(f"{head} {{ {' '.join(v.domain)} }}")
    for a in p.actions:
        line = f"action {a.name} : {a.controller}"
        if a.safety_critical:
            line += " critical"
        if a.relevant:
            line += " relevant " + ", ".join(a.relevant)
        out.append(line)
    for u in p.ucas:
        out.append(f"uca {u.id} : {u.action} {u.guide_type.value} {_q(u.description)} -> {', '.join(u.hazards)}")
    for r in p.requirements:
        line = f"ssr {r.id} {_q(r.text)}"
        if r.source_uca is not None:
            line += f" from {r.source_uca}"
        if r.refined_constraint is not None:
            line += f" constraint {render_bool(r.refined_constraint)}"
        if r.ltl is not None:
            line += f" ltl {_q(render_ltl(r.ltl))}"
        out.append(line)
    for rule in p.domain_rules:
        out.append(f"rule {rule.id} {_q(rule.description)} forbid {render_bool(rule.forbidden)}")
    for rule in p.hazard_rules:
        line = (f"hazard-rule {rule.id} : {rule.action} {rule.kind.value} when "
                f"{render_bool(rule.when)} -> {', '.join(rule.hazards)}")
        line += "".join(f" @{s}" for s in rule.ssrs)
        out.append(line)
    if p.efsm is not None:
        m = p.efsm
        out.append(f"statemachine {m.name} {{")
        if m.states:
            out.append(f"  states {', '.join(m.states)}")
        init = ", ".join(f"{var} = {value}" for var, value in m.initial_valuation)
        out.append(f"  initial {m.initial_state} {{ {init} }}" if init else f"  initial {m.initial_state} {{ }}")
        if m.events:
            out.append(f"  events {', '.join(m.events)}")
        for t in m.transitions:
            out.append("  " + render_transition(t))
        out.append("}")
    for c in p.concretizations:
        items = []
        for label, cset in c.mapping:
            if isinstance(cset, Interval):
                items.append(f"{label} [{_num(cset.low)}, {_num(cset.high)}]")
            else:
                items.append(f"{label} {{{', '.join(_num(x) for x in cset.values)}}}")
        out.append(f"concretize {c.variable} {{ {' '.join(items)} }}")
    return "\n".join(out) + ("\n" if out else "")
