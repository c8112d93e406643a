"""Context tables: enumerate or sample process-model contexts for each
control action, drop impossible ones, judge hazards and refine constraints."""
from __future__ import annotations

import csv
import io
import itertools
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .model import (And, Atom, BoolExpr, Const, ContextKind, ControlAction, DomainRule, GuideType,
                    HazardRule, Not, Or, ProcessVariable, Project, SafetyRequirement,
                    UnsafeControlAction, conjunction, disjunction, eval_bool)


class AnalysisError(Exception):
    pass


HAZARDOUS = "hazardous"
NOT_HAZARDOUS = "not_hazardous"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class HazardVerdict:
    status: str = UNDETERMINED
    hazards: tuple[str, ...] = ()
    ssrs: tuple[str, ...] = ()

    @property
    def hazardous(self) -> bool:
        return self.status == HAZARDOUS


@dataclass(frozen=True)
class ContextRow:
    action: str
    kind: ContextKind
    valuation: tuple[tuple[str, str], ...]
    verdict: HazardVerdict = HazardVerdict()

    @property
    def values(self) -> dict[str, str]:
        return dict(self.valuation)


# --------------------------------------------------------------------------
# Enumeration
# --------------------------------------------------------------------------


def enumerate_contexts(action: ControlAction, kind: ContextKind,
                       variables: Sequence[ProcessVariable]) -> list[ContextRow]:
    """Full cartesian product, lexicographic over declaration order."""
    if not variables:
        raise AnalysisError(f"no process model declared for action {action.name}")
    names = [v.name for v in variables]
    return [ContextRow(action.name, kind, tuple(zip(names, combo)))
            for combo in itertools.product(*(v.domain for v in variables))]


@dataclass(frozen=True)
class CoveringArray:
    strength: int
    domains: tuple[int, ...]
    rows: tuple[tuple[int, ...], ...]


def uncovered_tuples(domains: Sequence[int], strength: int,
                     rows: Iterable[Sequence[int]]) -> list[tuple]:
    """Every (columns, values) t-tuple missing from ``rows``, by exhaustive check."""
    rows = list(rows)
    missing = []
    for cols in itertools.combinations(range(len(domains)), strength):
        seen = {tuple(r[c] for c in cols) for r in rows}
        for vals in itertools.product(*(range(domains[c]) for c in cols)):
            if vals not in seen:
                missing.append((cols, vals))
    return missing


def generate_covering_array(domains: Sequence[int], strength: int = 2,
                            seed: int = 0, candidates: int = 40) -> CoveringArray:
    """Greedy AETG-style t-way covering array.

    Each new row is the best of ``candidates`` seeded trial rows; a trial row
    fixes one uncovered tuple, then fills the other columns in random order,
    picking the value that covers most new tuples (smallest index on ties).
    """
    domains = tuple(domains)
    k = len(domains)
    if strength < 1 or strength > k:
        raise ValueError(f"strength {strength} needs between 1 and {k} variables")
    if any(d < 1 for d in domains):
        raise ValueError("every domain needs at least one value")
    rng = random.Random(seed)
    col_sets = list(itertools.combinations(range(k), strength))
    uncovered: set[tuple] = set()
    for cols in col_sets:
        for vals in itertools.product(*(range(domains[c]) for c in cols)):
            uncovered.add((cols, vals))
    by_col: dict[int, list[tuple[int, ...]]] = {c: [cs for cs in col_sets if c in cs]
                                                for c in range(k)}

    def gain(row: list, col: int) -> int:
        # new tuples completed by column ``col`` given the columns already set
        total = 0
        for cols in by_col[col]:
            if all(row[c] is not None for c in cols):
                if (cols, tuple(row[c] for c in cols)) in uncovered:
                    total += 1
        return total

    def score(row: Sequence[int]) -> int:
        return sum((cols, tuple(row[c] for c in cols)) in uncovered for cols in col_sets)

    rows: list[tuple[int, ...]] = []
    while uncovered:
        ordered = sorted(uncovered)
        best, best_score = None, -1
        for _ in range(candidates):
            cols, vals = ordered[rng.randrange(len(ordered))]
            row: list[Optional[int]] = [None] * k
            for c, v in zip(cols, vals):
                row[c] = v
            rest = [c for c in range(k) if row[c] is None]
            rng.shuffle(rest)
            for c in rest:
                top, pick = -1, 0
                for v in range(domains[c]):
                    row[c] = v
                    g = gain(row, c)
                    if g > top:
                        top, pick = g, v
                row[c] = pick
            s = score(row)
            if s > best_score:
                best, best_score = tuple(row), s
        rows.append(best)
        for cols in col_sets:
            uncovered.discard((cols, tuple(best[c] for c in cols)))

    if uncovered_tuples(domains, strength, rows):
        raise AssertionError("covering array construction left tuples uncovered")
    return CoveringArray(strength, domains, tuple(rows))


def sample_contexts(action: ControlAction, kind: ContextKind,
                    variables: Sequence[ProcessVariable], array: CoveringArray) -> list[ContextRow]:
    names = [v.name for v in variables]
    return [ContextRow(action.name, kind,
                       tuple((n, v.domain[i]) for n, v, i in zip(names, variables, r)))
            for r in array.rows]


# --------------------------------------------------------------------------
# Rules and hazards
# --------------------------------------------------------------------------


def _matches(expr: BoolExpr, row: ContextRow) -> bool:
    # rules may mention variables outside the action's relevant set; such
    # atoms cannot hold on the row and are treated as false
    values = row.values
    return eval_bool(_restrict(expr, values), values)


def _restrict(expr: BoolExpr, values: Mapping[str, str]) -> BoolExpr:
    match expr:
        case Atom(var, _, _) if var not in values:
            return Const(False)
        case Not(a):
            return Not(_restrict(a, values))
        case And(ops):
            return And(tuple(_restrict(o, values) for o in ops))
        case Or(ops):
            return Or(tuple(_restrict(o, values) for o in ops))
    return expr


def apply_domain_rules(rows: Sequence[ContextRow], rules: Sequence[DomainRule]
                       ) -> tuple[list[ContextRow], list[tuple[ContextRow, str]]]:
    kept, removed = [], []
    for row in rows:
        hit = next((r.id for r in rules if _matches(r.forbidden, row)), None)
        if hit is None:
            kept.append(row)
        else:
            removed.append((row, hit))
    return kept, removed


def evaluate_hazards(rows: Sequence[ContextRow], rules: Sequence[HazardRule]) -> list[ContextRow]:
    out = []
    for row in rows:
        relevant = [r for r in rules if r.action == row.action and r.kind == row.kind]
        if not relevant:
            verdict = HazardVerdict(UNDETERMINED)
        else:
            hits = [r for r in relevant if _matches(r.when, row)]
            if hits:
                verdict = HazardVerdict(HAZARDOUS, _union(r.hazards for r in hits),
                                        _union(r.ssrs for r in hits))
            else:
                verdict = HazardVerdict(NOT_HAZARDOUS)
        out.append(replace(row, verdict=verdict))
    return out


def _union(groups: Iterable[Iterable[str]]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for g in groups:
        for x in g:
            seen.setdefault(x, None)
    return tuple(seen)


def refine_constraints(rows: Sequence[ContextRow], requirement: SafetyRequirement) -> BoolExpr:
    """OR over tagged hazardous rows of the AND of their atoms."""
    tagged = [r for r in rows if r.verdict.hazardous and requirement.id in r.verdict.ssrs]
    if not tagged:
        raise AnalysisError(f"no hazardous context row is tagged with {requirement.id}")
    return disjunction(conjunction(Atom(v, x) for v, x in r.valuation) for r in tagged)


def build_uca_table(actions: Sequence[ControlAction]) -> list[UnsafeControlAction]:
    """Blank UCA templates, one per (safety-critical action, guide type)."""
    out = []
    for a in actions:
        if not a.safety_critical:
            continue
        for i, g in enumerate(GuideType, start=1):
            out.append(UnsafeControlAction(f"UCA.{a.name}.{i}", a.name, g, "", ()))
    return out


# --------------------------------------------------------------------------
# Whole-project analysis
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ContextTable:
    action: str
    kind: ContextKind
    variables: tuple[str, ...]
    sampled: tuple[ContextRow, ...]
    kept: tuple[ContextRow, ...]
    removed: tuple[tuple[ContextRow, str], ...]
    full_size: int
    array: Optional[CoveringArray] = None

    @property
    def rows(self) -> tuple[ContextRow, ...]:
        return self.kept


@dataclass(frozen=True)
class Refinement:
    requirement: str
    action: str
    kind: ContextKind
    constraint: BoolExpr
    source: str  # "rows", "rows-sampled" or "declared"


@dataclass
class Analysis:
    mode: str
    seed: int
    tables: list[ContextTable] = field(default_factory=list)
    refinements: list[Refinement] = field(default_factory=list)

    def table(self, action: str, kind: ContextKind) -> ContextTable:
        for t in self.tables:
            if t.action == action and t.kind == kind:
                return t
        raise KeyError((action, kind))

    def refinements_for(self, rid: str) -> list[Refinement]:
        return [r for r in self.refinements if r.requirement == rid]


def parse_mode(mode: str) -> Optional[int]:
    """None for the full product, else the covering strength."""
    if mode == "full":
        return None
    if mode == "pairwise":
        return 2
    if mode.startswith("t="):
        try:
            t = int(mode[2:])
        except ValueError:
            pass
        else:
            if t >= 1:
                return t
    raise ValueError(f"unknown mode {mode!r}; use full, pairwise or t=<n>")


def _kind_of_uca(g: GuideType) -> ContextKind:
    return ContextKind.NOT_PROVIDING if g is GuideType.NOT_PROVIDED else ContextKind.PROVIDING


def analyze_project(project: Project, mode: str = "full", seed: int = 0) -> Analysis:
    strength = parse_mode(mode)
    result = Analysis(mode, seed)
    for action in project.actions:
        if not action.safety_critical or not action.relevant:
            continue
        variables = [project.variable(n) for n in action.relevant]
        full = 1
        for v in variables:
            full *= len(v.domain)
        array = None
        if strength is not None and strength < len(variables):
            array = generate_covering_array([len(v.domain) for v in variables], strength, seed)
        for kind in ContextKind:
            if array is None:
                sampled = enumerate_contexts(action, kind, variables)
            else:
                sampled = sample_contexts(action, kind, variables, array)
            kept, removed = apply_domain_rules(sampled, project.domain_rules)
            kept = evaluate_hazards(kept, project.hazard_rules)
            result.tables.append(ContextTable(action.name, kind, tuple(action.relevant),
                                              tuple(sampled), tuple(kept), tuple(removed),
                                              full, array))

    for req in project.requirements:
        if req.refined_constraint is not None:
            uca = next((u for u in project.ucas if u.id == req.source_uca), None)
            if uca is not None:
                result.refinements.append(Refinement(req.id, uca.action, _kind_of_uca(uca.guide_type),
                                                     req.refined_constraint, "declared"))
            continue
        for table in result.tables:
            try:
                expr = refine_constraints(table.kept, req)
            except AnalysisError:
                continue
            source = "rows" if table.array is None else "rows-sampled"
            result.refinements.append(Refinement(req.id, table.action, table.kind, expr, source))
    return result


def with_refinements(project: Project, analysis: Analysis) -> Project:
    """Project whose requirements carry the synthesized constraints."""
    reqs = []
    for req in project.requirements:
        found = analysis.refinements_for(req.id)
        if req.refined_constraint is None and found:
            req = replace(req, refined_constraint=disjunction(r.constraint for r in found))
        reqs.append(req)
    return replace(project, requirements=tuple(reqs))


def table_csv(table: ContextTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*table.variables, "kind", "hazardous", "hazards", "ssrs", "removed_by_rule"])
    verdicts = {row.valuation: row.verdict for row in table.kept}
    removed = {row.valuation: rule for row, rule in table.removed}
    for row in table.sampled:
        values = [x for _, x in row.valuation]
        if row.valuation in removed:
            w.writerow([*values, row.kind.value, "", "", "", removed[row.valuation]])
            continue
        v = verdicts[row.valuation]
        label = {HAZARDOUS: "yes", NOT_HAZARDOUS: "no", UNDETERMINED: "undetermined"}[v.status]
        w.writerow([*values, row.kind.value, label, ";".join(v.hazards), ";".join(v.ssrs), ""])
    return buf.getvalue()


__all__ = ["ContextRow", "HazardVerdict", "CoveringArray", "ContextTable", "Analysis", "Refinement",
           "AnalysisError", "enumerate_contexts", "generate_covering_array", "uncovered_tuples",
           "sample_contexts", "apply_domain_rules", "evaluate_hazards", "refine_constraints",
           "build_uca_table", "analyze_project", "with_refinements", "table_csv", "parse_mode",
           "HAZARDOUS", "NOT_HAZARDOUS", "UNDETERMINED"]
