"""Domain types of the STPA pipeline and the Boolean constraint language.

Every type here is a frozen dataclass holding tuples, so a parsed and
validated :class:`Project` can be shared freely between analyses.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")

# Proposition prefixes reserved by the verifier; no process variable may use them.
STATE = "state"
EMITS = "emits"
NO_ACTION = "none"
RESERVED_NAMES = frozenset({STATE, EMITS})


class EvaluationError(Exception):
    """A Boolean expression referenced a variable the valuation lacks."""

    def __init__(self, variable: str):
        super().__init__(f"variable {variable!r} is not bound in the valuation")
        self.variable = variable


# --------------------------------------------------------------------------
# Boolean constraints
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    var: str
    value: str
    negated: bool = False


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    operand: "BoolExpr"


@dataclass(frozen=True)
class And:
    operands: tuple["BoolExpr", ...]


@dataclass(frozen=True)
class Or:
    operands: tuple["BoolExpr", ...]


BoolExpr = Union[Atom, Const, Not, And, Or]

TRUE = Const(True)
FALSE = Const(False)


def conjunction(items: Iterable[BoolExpr]) -> BoolExpr:
    items = tuple(items)
    if not items:
        return TRUE
    if len(items) == 1:
        return items[0]
    return And(items)


def disjunction(items: Iterable[BoolExpr]) -> BoolExpr:
    items = tuple(items)
    if not items:
        return FALSE
    if len(items) == 1:
        return items[0]
    return Or(items)


def eval_bool(expr: BoolExpr, valuation: Mapping[str, str]) -> bool:
    match expr:
        case Atom(var, value, negated):
            try:
                actual = valuation[var]
            except KeyError:
                raise EvaluationError(var) from None
            return (actual == value) != negated
        case Const(value):
            return value
        case Not(operand):
            return not eval_bool(operand, valuation)
        case And(operands):
            # evaluate every operand so unbound variables always surface
            results = [eval_bool(op, valuation) for op in operands]
            return all(results)
        case Or(operands):
            results = [eval_bool(op, valuation) for op in operands]
            return any(results)
    raise TypeError(f"not a Boolean expression: {expr!r}")


def atoms(expr: BoolExpr) -> Iterator[Atom]:
    match expr:
        case Atom():
            yield expr
        case Not(operand):
            yield from atoms(operand)
        case And(operands) | Or(operands):
            for op in operands:
                yield from atoms(op)


def variables_of(expr: BoolExpr) -> list[str]:
    seen: dict[str, None] = {}
    for atom in atoms(expr):
        seen.setdefault(atom.var, None)
    return list(seen)


_PRECEDENCE = {Or: 1, And: 2, Not: 3, Atom: 4, Const: 4}


def render_bool(expr: BoolExpr) -> str:
    """Render an expression in guard syntax; parsing the result gives back
    the same tree (n-ary nodes nested in their own kind are parenthesized)."""

    def wrap(child: BoolExpr, parent: type) -> str:
        text = render_bool(child)
        if isinstance(child, (And, Or)) and _PRECEDENCE[type(child)] <= _PRECEDENCE[parent]:
            return f"({text})"
        return text

    match expr:
        case Atom(var, value, negated):
            return f"{var} {'!=' if negated else '=='} {value}"
        case Const(value):
            return "true" if value else "false"
        case Not(operand):
            if isinstance(operand, Not):
                return f"!{render_bool(operand)}"
            return f"!({render_bool(operand)})"
        case And(operands):
            return " && ".join(wrap(op, And) for op in operands)
        case Or(operands):
            return " || ".join(wrap(op, Or) for op in operands)
    raise TypeError(f"not a Boolean expression: {expr!r}")


# --------------------------------------------------------------------------
# STPA concepts
# --------------------------------------------------------------------------


class VariableKind(enum.Enum):
    INTERNAL = "internal"
    INTERACTION = "interaction"
    ENVIRONMENTAL = "environmental"


class GuideType(enum.Enum):
    """The four general types of hazardous control behaviour, in analysis order."""

    NOT_PROVIDED = "NotProvided"
    PROVIDED_UNSAFE = "ProvidedUnsafe"
    WRONG_TIMING_OR_ORDER = "WrongTimingOrOrder"
    STOPPED_TOO_SOON_OR_APPLIED_TOO_LONG = "StoppedTooSoonOrAppliedTooLong"


class ContextKind(enum.Enum):
    PROVIDING = "Providing"
    NOT_PROVIDING = "NotProviding"


@dataclass(frozen=True)
class Accident:
    id: str
    description: str


@dataclass(frozen=True)
class Hazard:
    id: str
    description: str
    accidents: tuple[str, ...]


@dataclass(frozen=True)
class Controller:
    id: str
    description: str


@dataclass(frozen=True)
class ProcessVariable:
    name: str
    kind: VariableKind
    domain: tuple[str, ...]
    parent: Optional[tuple[str, str]] = None

    @property
    def is_input(self) -> bool:
        return self.kind is not VariableKind.INTERNAL


@dataclass(frozen=True)
class ControlAction:
    name: str
    controller: str
    safety_critical: bool = True
    relevant: tuple[str, ...] = ()


@dataclass(frozen=True)
class UnsafeControlAction:
    id: str
    action: str
    guide_type: GuideType
    description: str
    hazards: tuple[str, ...]


@dataclass(frozen=True)
class SafetyRequirement:
    id: str
    text: str
    source_uca: Optional[str] = None
    refined_constraint: Optional[BoolExpr] = None
    # verifier.ltl.LtlFormula; kept untyped here to avoid an import cycle
    ltl: Optional[object] = None


@dataclass(frozen=True)
class DomainRule:
    id: str
    description: str
    forbidden: BoolExpr


@dataclass(frozen=True)
class HazardRule:
    id: str
    action: str
    kind: ContextKind
    when: BoolExpr
    hazards: tuple[str, ...]
    ssrs: tuple[str, ...] = ()


@dataclass(frozen=True)
class Transition:
    id: str
    source: str
    target: str
    event: str
    guard: Optional[BoolExpr] = None
    assignments: tuple[tuple[str, str], ...] = ()
    emits: Optional[str] = None
    ssr_labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class Efsm:
    name: str
    states: tuple[str, ...]
    initial_state: str
    initial_valuation: tuple[tuple[str, str], ...]
    events: tuple[str, ...]
    transitions: tuple[Transition, ...]

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.initial_valuation)

    def transition(self, tid: str) -> Transition:
        for t in self.transitions:
            if t.id == tid:
                return t
        raise KeyError(tid)


@dataclass(frozen=True)
class Interval:
    low: float
    high: float

    def __contains__(self, x: float) -> bool:
        return self.low <= x <= self.high


@dataclass(frozen=True)
class Literals:
    values: tuple[float, ...]

    def __contains__(self, x: float) -> bool:
        return x in self.values


ConcreteSet = Union[Interval, Literals]


@dataclass(frozen=True)
class VariableConcretization:
    variable: str
    mapping: tuple[tuple[str, ConcreteSet], ...]

    def lookup(self, label: str) -> ConcreteSet:
        for name, cset in self.mapping:
            if name == label:
                return cset
        raise KeyError(label)

    def abstract(self, x: float) -> Optional[str]:
        for name, cset in self.mapping:
            if x in cset:
                return name
        return None


@dataclass(frozen=True)
class Project:
    accidents: tuple[Accident, ...] = ()
    hazards: tuple[Hazard, ...] = ()
    controllers: tuple[Controller, ...] = ()
    variables: tuple[ProcessVariable, ...] = ()
    actions: tuple[ControlAction, ...] = ()
    ucas: tuple[UnsafeControlAction, ...] = ()
    requirements: tuple[SafetyRequirement, ...] = ()
    domain_rules: tuple[DomainRule, ...] = ()
    hazard_rules: tuple[HazardRule, ...] = ()
    efsm: Optional[Efsm] = None
    concretizations: tuple[VariableConcretization, ...] = ()

    def variable(self, name: str) -> ProcessVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def action(self, name: str) -> ControlAction:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def requirement(self, rid: str) -> SafetyRequirement:
        for r in self.requirements:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def concretization(self, var: str) -> VariableConcretization:
        for c in self.concretizations:
            if c.variable == var:
                return c
        raise KeyError(var)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.message}"


@dataclass
class ValidationReport:
    errors: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, subject: str, message: str) -> None:
        self.errors.append(Finding(subject, message))

    def warn(self, subject: str, message: str) -> None:
        self.warnings.append(Finding(subject, message))


def _duplicates(ids: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    dups: list[str] = []
    for i in ids:
        if i in seen and i not in dups:
            dups.append(i)
        seen.add(i)
    return dups


def validate(project: Project) -> ValidationReport:
    """Check identifiers, cross references and type invariants.

    Nothing raises; every finding becomes a report entry. The project is
    analyzable iff ``report.errors`` is empty.
    """
    report = ValidationReport()
    domains = {v.name: v.domain for v in project.variables}
    accidents = {a.id for a in project.accidents}
    hazards = {h.id for h in project.hazards}
    controllers = {c.id for c in project.controllers}
    actions = {a.name for a in project.actions}
    ucas = {u.id for u in project.ucas}
    ssrs = {r.id for r in project.requirements}
    used_vars: set[str] = set()

    groups = [
        ("accident", [a.id for a in project.accidents]),
        ("hazard", [h.id for h in project.hazards]),
        ("controller", [c.id for c in project.controllers]),
        ("variable", [v.name for v in project.variables]),
        ("action", [a.name for a in project.actions]),
        ("uca", [u.id for u in project.ucas]),
        ("ssr", [r.id for r in project.requirements]),
        ("rule", [r.id for r in project.domain_rules]),
        ("hazard-rule", [r.id for r in project.hazard_rules]),
        ("concretize", [c.variable for c in project.concretizations]),
    ]
    for kind, ids in groups:
        for dup in _duplicates(ids):
            report.error(dup, f"duplicate {kind} id {dup!r}")
        for i in ids:
            if not IDENTIFIER.match(i):
                report.error(i, f"malformed {kind} identifier {i!r}")

    def check_expr(subject: str, expr: BoolExpr, allowed: Optional[Iterable[str]] = None) -> None:
        scope = set(allowed) if allowed is not None else None
        for atom in atoms(expr):
            used_vars.add(atom.var)
            if atom.var not in domains:
                report.error(subject, f"unknown variable {atom.var!r}")
            elif atom.value not in domains[atom.var]:
                report.error(subject, f"{atom.value!r} is not a value of {atom.var!r}")
            elif scope is not None and atom.var not in scope:
                report.error(subject, f"variable {atom.var!r} is outside the state machine")

    for a in project.accidents:
        if not a.description.strip():
            report.error(a.id, "accident description is empty")
    for h in project.hazards:
        if not h.accidents:
            report.error(h.id, "hazard links no accident")
        for acc in h.accidents:
            if acc not in accidents:
                report.error(h.id, f"unknown accident {acc!r}")

    for v in project.variables:
        if v.name in RESERVED_NAMES:
            report.error(v.name, f"{v.name!r} is a reserved proposition name")
        if len(v.domain) < 2:
            report.error(v.name, "domain size < 2")
        for dup in _duplicates(v.domain):
            report.error(v.name, f"duplicate value label {dup!r}")
        for label in v.domain:
            if not IDENTIFIER.match(label):
                report.error(v.name, f"malformed value label {label!r}")
        if v.parent is not None:
            pvar, pval = v.parent
            used_vars.add(pvar)
            if pvar == v.name or pvar not in domains:
                report.error(v.name, f"unknown parent variable {pvar!r}")
            elif pval not in domains[pvar]:
                report.error(v.name, f"{pval!r} is not a value of parent {pvar!r}")

    for a in project.actions:
        if a.controller not in controllers:
            report.error(a.name, f"unknown controller {a.controller!r}")
        for dup in _duplicates(a.relevant):
            report.error(a.name, f"relevant variable {dup!r} listed twice")
        for var in a.relevant:
            used_vars.add(var)
            if var not in domains:
                report.error(a.name, f"unknown relevant variable {var!r}")

    for u in project.ucas:
        if u.action not in actions:
            report.error(u.id, f"unknown control action {u.action!r}")
        if not u.hazards:
            report.error(u.id, "unsafe control action links no hazard")
        for h in u.hazards:
            if h not in hazards:
                report.error(u.id, f"unknown hazard {h!r}")

    for r in project.requirements:
        if r.source_uca is not None and r.source_uca not in ucas:
            report.error(r.id, f"unknown unsafe control action {r.source_uca!r}")
        if r.refined_constraint is not None:
            check_expr(r.id, r.refined_constraint)
        if r.ltl is not None:
            _check_ltl_atoms(project, r.id, r.ltl, report)

    for rule in project.domain_rules:
        check_expr(rule.id, rule.forbidden)

    for rule in project.hazard_rules:
        if rule.action not in actions:
            report.error(rule.id, f"unknown control action {rule.action!r}")
        else:
            relevant = project.action(rule.action).relevant
            check_expr(rule.id, rule.when, relevant or None)
        if not rule.hazards:
            report.error(rule.id, "hazard rule names no hazard")
        for h in rule.hazards:
            if h not in hazards:
                report.error(rule.id, f"unknown hazard {h!r}")
        for s in rule.ssrs:
            if s not in ssrs:
                report.error(rule.id, f"unknown safety requirement {s!r}")

    if project.efsm is not None:
        _validate_efsm(project, report, domains, actions, ssrs, check_expr, used_vars)

    for c in project.concretizations:
        if c.variable not in domains:
            report.error(c.variable, f"concretization of unknown variable {c.variable!r}")
            continue
        for dup in _duplicates(label for label, _ in c.mapping):
            report.error(c.variable, f"label {dup!r} concretized twice")
        sets = []
        for label, cset in c.mapping:
            if label not in domains[c.variable]:
                report.error(c.variable, f"{label!r} is not a value of {c.variable!r}")
            if isinstance(cset, Interval) and cset.low > cset.high:
                report.error(c.variable, f"empty interval for {label!r}")
            if isinstance(cset, Literals) and not cset.values:
                report.error(c.variable, f"empty literal set for {label!r}")
            sets.append((label, cset))
        for i, (la, sa) in enumerate(sets):
            for lb, sb in sets[i + 1:]:
                if _overlap(sa, sb):
                    report.error(c.variable, f"concrete sets of {la!r} and {lb!r} overlap")

    for v in project.variables:
        if v.name not in used_vars:
            report.warn(v.name, "variable is never used")
    return report


def _overlap(a: ConcreteSet, b: ConcreteSet) -> bool:
    if isinstance(a, Literals):
        return any(x in b for x in a.values)
    if isinstance(b, Literals):
        return any(x in a for x in b.values)
    return a.low <= b.high and b.low <= a.high


def _validate_efsm(project, report, domains, actions, ssrs, check_expr, used_vars) -> None:
    m = project.efsm
    subject = f"statemachine {m.name}"
    states = set(m.states)
    for dup in _duplicates(m.states):
        report.error(subject, f"duplicate state {dup!r}")
    for dup in _duplicates(m.events):
        report.error(subject, f"duplicate event {dup!r}")
    for dup in _duplicates(t.id for t in m.transitions):
        report.error(subject, f"duplicate transition id {dup!r}")
    if m.initial_state not in states:
        report.error(subject, f"initial state {m.initial_state!r} is not declared")
    for dup in _duplicates(m.variables):
        report.error(subject, f"variable {dup!r} initialised twice")
    for var, value in m.initial_valuation:
        used_vars.add(var)
        if var not in domains:
            report.error(subject, f"unknown variable {var!r} in initial valuation")
        elif value not in domains[var]:
            report.error(subject, f"{value!r} is not a value of {var!r}")
    scope = m.variables
    for t in m.transitions:
        where = f"transition {t.id}"
        for s in (t.source, t.target):
            if s not in states:
                report.error(where, f"unknown state {s!r}")
        if t.event not in m.events:
            report.error(where, f"event {t.event!r} is not in the alphabet")
        if t.guard is not None:
            check_expr(where, t.guard, scope)
        for dup in _duplicates(var for var, _ in t.assignments):
            report.error(where, f"variable {dup!r} assigned twice")
        for var, value in t.assignments:
            used_vars.add(var)
            if var not in scope:
                report.error(where, f"assignment to {var!r} outside the state machine")
            elif value not in domains.get(var, ()):
                report.error(where, f"{value!r} is not a value of {var!r}")
        if t.emits is not None and t.emits not in actions:
            report.error(where, f"unknown control action {t.emits!r}")
        for label in t.ssr_labels:
            if label not in ssrs:
                report.error(where, f"unknown safety requirement {label!r}")
        if not t.ssr_labels:
            report.warn(where, "transition carries no safety requirement label")


def _check_ltl_atoms(project: Project, subject: str, formula, report: ValidationReport) -> None:
    from .ltl import propositions

    domains = {v.name: v.domain for v in project.variables}
    states = set(project.efsm.states) if project.efsm else set()
    actions = {a.name for a in project.actions} | {NO_ACTION}
    for atom in propositions(formula):
        if atom.var == STATE:
            if atom.value not in states:
                report.error(subject, f"formula names unknown state {atom.value!r}")
        elif atom.var == EMITS:
            if atom.value not in actions:
                report.error(subject, f"formula names unknown action {atom.value!r}")
        elif atom.var not in domains:
            report.error(subject, f"formula names unknown variable {atom.var!r}")
        elif atom.value not in domains[atom.var]:
            report.error(subject, f"{atom.value!r} is not a value of {atom.var!r}")
