"""Explicit-state LTL model checking over the expanded behavior model."""
from __future__ import annotations

import itertools
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .buchi import AutomatonTooLarge, label_holds, ltl_to_buchi
from .efsm import DEFAULT_NODE_CAP, KripkeStructure
from .ltl import (Finally, Globally, Implies, LAnd, LNot, LtlFormula, Prop, evaluate_lasso, from_bool,
                  invariant_body, is_propositional, render_ltl, to_bool)
from .model import EMITS, Atom, BoolExpr, ContextKind, SafetyRequirement, atoms, eval_bool

HOLDS = "holds"
VIOLATED = "violated"
RESOURCE_EXCEEDED = "resource_exceeded"


class FormalizationError(Exception):
    pass


@dataclass(frozen=True)
class Counterexample:
    """Lasso through the Kripke structure.

    ``path[i]`` moves to ``path[i + 1]`` on ``events[i]``; the last event leads
    from ``path[-1]`` back to ``path[loop]``.
    """

    path: tuple[int, ...]
    events: tuple[str, ...]
    loop: int

    @property
    def prefix(self) -> list[tuple[int, str]]:
        return list(zip(self.path[:self.loop], self.events[:self.loop]))

    @property
    def cycle(self) -> list[tuple[int, str]]:
        return list(zip(self.path[self.loop:], self.events[self.loop:]))


@dataclass
class Statistics:
    kripke_nodes: int = 0
    product_states: int = 0
    automaton_states: int = 0
    milliseconds: float = 0.0


@dataclass
class Verdict:
    requirement: str
    formula: str
    result: str
    counterexample: Optional[Counterexample] = None
    vacuous: bool = False
    origin: str = "template"
    notes: list[str] = field(default_factory=list)
    stats: Statistics = field(default_factory=Statistics)

    @property
    def holds(self) -> bool:
        return self.result == HOLDS


# --------------------------------------------------------------------------
# Replay certificate
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplayResult:
    ok: bool
    index: Optional[int] = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _edge_map(k: KripkeStructure) -> dict[tuple[int, str], int]:
    return {(e.source, e.event): e.target for e in k.edges}


def replay(k: KripkeStructure, cex: Counterexample, formula: LtlFormula) -> ReplayResult:
    """Is ``cex`` a lasso of ``k`` whose word falsifies ``formula``?"""
    n = len(cex.path)
    if n == 0 or len(cex.events) != n or not 0 <= cex.loop < n:
        return ReplayResult(False, None, "malformed lasso")
    if cex.path[0] not in k.initial:
        return ReplayResult(False, 0, "path does not start at an initial node")
    edges = _edge_map(k)
    for i in range(n):
        src = cex.path[i]
        dst = cex.path[i + 1] if i + 1 < n else cex.path[cex.loop]
        if not 0 <= src < len(k.nodes) or edges.get((src, cex.events[i])) != dst:
            return ReplayResult(False, i, f"no edge {src} --{cex.events[i]}--> {dst}")
    word = [k.nodes[i].letter() for i in cex.path]
    if evaluate_lasso(formula, word, cex.loop):
        return ReplayResult(False, None, "lasso word satisfies the formula")
    return ReplayResult(True)


# --------------------------------------------------------------------------
# Invariants
# --------------------------------------------------------------------------


def _close_cycle(k: KripkeStructure, start: int, adj) -> tuple[list[int], list[str], int]:
    # from ``start``, follow first successors until a node repeats
    path, events, where = [start], [], {start: 0}
    cur = start
    while True:
        e = adj[cur][0]
        events.append(e.event)
        if e.target in where:
            return path, events, where[e.target]
        where[e.target] = len(path)
        path.append(e.target)
        cur = e.target


def check_invariant(k: KripkeStructure, predicate: BoolExpr, requirement: str = "",
                    formula: Optional[str] = None) -> Verdict:
    """Breadth-first search for a reachable node falsifying ``predicate``."""
    t0 = time.perf_counter()
    text = formula or f"G ({render_ltl(from_bool(predicate))})"
    parent: dict[int, tuple[int, str] | None] = {i: None for i in k.initial}
    queue = deque(k.initial)
    adj = k.successors()
    bad = None
    while queue:
        i = queue.popleft()
        if not eval_bool(predicate, k.nodes[i].letter()):
            bad = i
            break
        for e in adj[i]:
            if e.target not in parent:
                parent[e.target] = (i, e.event)
                queue.append(e.target)
    stats = Statistics(len(k.nodes), len(parent), 1)
    if bad is None:
        stats.milliseconds = (time.perf_counter() - t0) * 1000
        return Verdict(requirement, text, HOLDS, stats=stats)
    prefix_nodes, prefix_events = [bad], []
    cur = bad
    while parent[cur] is not None:
        cur, ev = parent[cur]
        prefix_nodes.append(cur)
        prefix_events.append(ev)
    prefix_nodes.reverse()
    prefix_events.reverse()
    tail, tail_events, loop = _close_cycle(k, bad, adj)
    offset = len(prefix_nodes) - 1
    cex = Counterexample(tuple(prefix_nodes[:-1] + tail), tuple(prefix_events + tail_events),
                         offset + loop)
    stats.milliseconds = (time.perf_counter() - t0) * 1000
    return Verdict(requirement, text, VIOLATED, cex, stats=stats)


# --------------------------------------------------------------------------
# Full LTL: nested depth-first search over the product
# --------------------------------------------------------------------------


class ProductTooLarge(Exception):
    pass


def check_ltl(k: KripkeStructure, formula: LtlFormula, requirement: str = "",
              node_cap: int = DEFAULT_NODE_CAP, fast_path: bool = True) -> Verdict:
    text = render_ltl(formula)
    body = invariant_body(formula) if fast_path else None
    if body is not None:
        verdict = check_invariant(k, to_bool(body), requirement, text)
    else:
        verdict = _nested_dfs(k, formula, requirement, text, node_cap)
    if verdict.result == VIOLATED:
        cert = replay(k, verdict.counterexample, formula)
        if not cert:
            raise AssertionError(f"counterexample for {text} failed replay: {cert.reason}")
    elif verdict.result == HOLDS and _vacuous(k, formula):
        verdict.vacuous = True
        verdict.notes.append("holds vacuously: no reachable node satisfies the antecedent")
    return verdict


def _nested_dfs(k: KripkeStructure, formula: LtlFormula, requirement: str, text: str,
                node_cap: int) -> Verdict:
    t0 = time.perf_counter()
    stats = Statistics(len(k.nodes))
    try:
        ba = ltl_to_buchi(LNot(formula), state_cap=node_cap)
    except AutomatonTooLarge:
        stats.milliseconds = (time.perf_counter() - t0) * 1000
        return Verdict(requirement, text, RESOURCE_EXCEEDED, stats=stats,
                       notes=["automaton exceeds the node cap"])
    stats.automaton_states = len(ba.states)
    letters = k.letters()
    kadj = k.successors()
    badj = ba.adjacency()
    accepting = ba.accepting

    def successors(p: tuple[int, int]) -> list[tuple[str, tuple[int, int]]]:
        s, q = p
        targets = [dst for lab, dst in badj[q] if label_holds(lab, letters[s])]
        return [(e.event, (e.target, q2)) for e in kadj[s] for q2 in targets]

    blue: set = set()
    red: set = set()
    on_stack: dict = {}
    stack_nodes: list = []
    stack_events: list = []
    found = None

    try:
        for q0 in ba.initial:
            for s0 in k.initial:
                root = (s0, q0)
                if root in blue:
                    continue
                found = _blue(root, successors, accepting, blue, red, on_stack, stack_nodes,
                              stack_events, node_cap)
                if found:
                    break
            if found:
                break
    except ProductTooLarge:
        stats.product_states = len(blue)
        stats.milliseconds = (time.perf_counter() - t0) * 1000
        return Verdict(requirement, text, RESOURCE_EXCEEDED, stats=stats,
                       notes=[f"product exceeds {node_cap} states"])

    stats.product_states = len(blue)
    stats.milliseconds = (time.perf_counter() - t0) * 1000
    if not found:
        return Verdict(requirement, text, HOLDS, stats=stats)
    path_nodes, path_events, loop = found
    cex = Counterexample(tuple(s for s, _ in path_nodes), tuple(path_events), loop)
    return Verdict(requirement, text, VIOLATED, cex, stats=stats)


def _blue(root, successors, accepting, blue, red, on_stack, stack_nodes, stack_events, cap):
    blue.add(root)
    on_stack[root] = 0
    stack_nodes.append(root)
    iters = [iter(successors(root))]
    while iters:
        step = next(iters[-1], None)
        if step is not None:
            event, nxt = step
            if nxt not in blue:
                if len(blue) >= cap:
                    raise ProductTooLarge()
                blue.add(nxt)
                stack_events.append(event)
                on_stack[nxt] = len(stack_nodes)
                stack_nodes.append(nxt)
                iters.append(iter(successors(nxt)))
            continue
        # post-order: search for a cycle through an accepting seed
        node = stack_nodes[-1]
        if node[1] in accepting:
            hit = _red(node, successors, red, on_stack)
            if hit is not None:
                red_events, red_nodes = hit
                target = red_nodes[-1]
                start = on_stack[target]
                nodes = stack_nodes + red_nodes[:-1]
                events = stack_events + red_events
                return nodes, events, start
        iters.pop()
        stack_nodes.pop()
        del on_stack[node]
        if stack_events:
            stack_events.pop()
    return None


def _red(seed, successors, red, on_stack):
    """Search from ``seed`` for a node on the blue stack; returns the events
    and nodes walked, ending at that node."""
    red.add(seed)
    path_nodes = [seed]
    path_events: list[str] = []
    iters = [iter(successors(seed))]
    while iters:
        step = next(iters[-1], None)
        if step is None:
            iters.pop()
            path_nodes.pop()
            if path_events:
                path_events.pop()
            continue
        event, nxt = step
        if nxt in on_stack:
            return path_events + [event], path_nodes[1:] + [nxt]
        if nxt not in red:
            red.add(nxt)
            path_nodes.append(nxt)
            path_events.append(event)
            iters.append(iter(successors(nxt)))
    return None


# --------------------------------------------------------------------------
# Vacuity and formalization
# --------------------------------------------------------------------------


def _antecedent(formula: LtlFormula):
    if isinstance(formula, Globally) and isinstance(formula.operand, Implies):
        a = formula.operand.left
        if is_propositional(a):
            return to_bool(a)
    return None


def _vacuous(k: KripkeStructure, formula: LtlFormula) -> bool:
    a = _antecedent(formula)
    if a is None:
        return False
    return not any(eval_bool(a, letter) for letter in k.letters())


def template(constraint: BoolExpr, kind: ContextKind, action: str) -> LtlFormula:
    emits = Prop(Atom(EMITS, action))
    consequent = LNot(emits) if kind is ContextKind.PROVIDING else Finally(emits)
    return Globally(Implies(from_bool(constraint), consequent))


@dataclass(frozen=True)
class Formalization:
    requirement: str
    formula: LtlFormula
    origin: str  # "override" or "template"
    warnings: tuple[str, ...] = ()


def formalize_requirement(req: SafetyRequirement, kind: Optional[ContextKind] = None,
                          action: Optional[str] = None,
                          refinements: Sequence = ()) -> Formalization:
    """Hand-written formula if present, else the template over the refined
    constraint (one conjunct per refinement when several are given)."""
    if req.ltl is not None:
        return Formalization(req.id, req.ltl, "override")
    parts = [(r.constraint, r.kind, r.action) for r in refinements]
    if not parts:
        if req.refined_constraint is None or kind is None or action is None:
            raise FormalizationError(f"{req.id} has no refined constraint to formalize")
        parts = [(req.refined_constraint, kind, action)]
    warnings = []
    formula = None
    for constraint, k, a in parts:
        if not any(eval_bool(constraint, v) for v in _valuations(constraint)):
            warnings.append(f"constraint for {a} ({k.value}) is unsatisfiable; formula holds vacuously")
        f = template(constraint, k, a)
        formula = f if formula is None else LAnd(formula, f)
    return Formalization(req.id, formula, "template", tuple(warnings))


def _valuations(expr: BoolExpr):
    # values mentioned by the expression plus one fresh value per variable
    # are enough to decide satisfiability of an atom formula
    by_var: dict[str, set[str]] = {}
    for a in atoms(expr):
        by_var.setdefault(a.var, set()).add(a.value)
    names = sorted(by_var)
    choices = [sorted(by_var[n]) + ["\0other"] for n in names]
    for combo in itertools.product(*choices):
        yield dict(zip(names, combo))


__all__ = ["Counterexample", "Verdict", "Statistics", "ReplayResult", "Formalization",
           "FormalizationError", "HOLDS", "VIOLATED", "RESOURCE_EXCEEDED", "replay",
           "check_invariant", "check_ltl", "template", "formalize_requirement"]
