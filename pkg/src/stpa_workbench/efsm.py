"""Executable semantics of the guarded state machine and its expansion
into a finite Kripke structure."""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .model import (EMITS, NO_ACTION, STATE, BoolExpr, ContextKind, Efsm, Project, Transition,
                    eval_bool, variables_of)

STUTTER = "stutter"
DEFAULT_NODE_CAP = 1_000_000


class EfsmError(Exception):
    pass


class ResourceExceeded(Exception):
    def __init__(self, cap: int, nodes: int, frontier: int):
        super().__init__(f"state space exceeds the cap of {cap} nodes "
                         f"({nodes} discovered, frontier {frontier})")
        self.cap = cap
        self.nodes = nodes
        self.frontier = frontier


@dataclass(frozen=True)
class Configuration:
    state: str
    valuation: tuple[tuple[str, str], ...]

    @property
    def values(self) -> dict[str, str]:
        return dict(self.valuation)

    def get(self, var: str) -> str:
        for name, value in self.valuation:
            if name == var:
                return value
        raise KeyError(var)


def initial_configuration(efsm: Efsm) -> Configuration:
    return Configuration(efsm.initial_state, tuple(efsm.initial_valuation))


def _guard_holds(t: Transition, values: Mapping[str, str]) -> bool:
    return t.guard is None or eval_bool(t.guard, values)


def enabled(efsm: Efsm, config: Configuration, event: str) -> list[Transition]:
    if event not in efsm.events:
        raise EfsmError(f"unknown event {event!r}")
    values = config.values
    return [t for t in efsm.transitions
            if t.source == config.state and t.event == event and _guard_holds(t, values)]


def fire(config: Configuration, t: Transition) -> Configuration:
    updates = dict(t.assignments)
    return Configuration(t.target, tuple((n, updates.get(n, v)) for n, v in config.valuation))


def step(efsm: Efsm, config: Configuration, event: str
         ) -> tuple[Configuration, Optional[str], Optional[Transition]]:
    """Fire the first enabled transition; unmatched events leave ``config`` alone."""
    ts = enabled(efsm, config, event)
    if not ts:
        return config, None, None
    t = ts[0]
    return fire(config, t), t.emits, t


# --------------------------------------------------------------------------
# Determinism
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Conflict:
    state: str
    event: str
    first: str
    second: str
    witness: tuple[tuple[str, str], ...]


def _satisfiable_together(a: Optional[BoolExpr], b: Optional[BoolExpr],
                          domains: Mapping[str, Sequence[str]]):
    names = sorted(set((variables_of(a) if a else []) + (variables_of(b) if b else [])))
    for combo in itertools.product(*(domains[n] for n in names)):
        values = dict(zip(names, combo))
        if (a is None or eval_bool(a, values)) and (b is None or eval_bool(b, values)):
            return tuple(values.items())
    return None


def check_determinism(efsm: Efsm, domains: Mapping[str, Sequence[str]]) -> list[Conflict]:
    """Pairs of same-source, same-event transitions whose guards can hold at once."""
    out = []
    for t1, t2 in itertools.combinations(efsm.transitions, 2):
        if t1.source != t2.source or t1.event != t2.event:
            continue
        witness = _satisfiable_together(t1.guard, t2.guard, domains)
        if witness is not None:
            out.append(Conflict(t1.source, t1.event, t1.id, t2.id, witness))
    return out


def domains_of(project: Project) -> dict[str, tuple[str, ...]]:
    return {v.name: v.domain for v in project.variables}


# --------------------------------------------------------------------------
# Kripke structure
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    config: Configuration
    last_emitted: str  # NO_ACTION when the incoming edge emitted nothing

    def letter(self) -> dict[str, str]:
        out = dict(self.config.valuation)
        out[STATE] = self.config.state
        out[EMITS] = self.last_emitted
        return out


@dataclass(frozen=True)
class Edge:
    source: int
    event: str
    transition: Optional[str]  # None for stutter loops
    emitted: str
    target: int


@dataclass(frozen=True)
class KripkeStructure:
    name: str
    nodes: tuple[Node, ...]
    initial: tuple[int, ...]
    edges: tuple[Edge, ...]

    def successors(self) -> list[list[Edge]]:
        adj: list[list[Edge]] = [[] for _ in self.nodes]
        for e in self.edges:
            adj[e.source].append(e)
        return adj

    def letters(self) -> list[dict[str, str]]:
        return [n.letter() for n in self.nodes]

    def configurations(self) -> list[Configuration]:
        seen: dict[Configuration, None] = {}
        for n in self.nodes:
            seen.setdefault(n.config, None)
        return list(seen)


def expand(efsm: Efsm, node_cap: int = DEFAULT_NODE_CAP) -> KripkeStructure:
    """Breadth-first closure of the initial configuration under every event.

    A node pairs a configuration with the action emitted on the edge that
    entered it. Events that enable nothing add no edge; nodes left without
    successors get a ``stutter`` self-loop.
    """
    start = Node(initial_configuration(efsm), NO_ACTION)
    index = {start: 0}
    nodes = [start]
    edges: list[Edge] = []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        node = nodes[i]
        out = 0
        for event in efsm.events:
            ts = enabled(efsm, node.config, event)
            if not ts:
                continue
            t = ts[0]
            emitted = t.emits or NO_ACTION
            succ = Node(fire(node.config, t), emitted)
            j = index.get(succ)
            if j is None:
                if len(nodes) >= node_cap:
                    raise ResourceExceeded(node_cap, len(nodes), len(queue) + 1)
                j = index[succ] = len(nodes)
                nodes.append(succ)
                queue.append(j)
            edges.append(Edge(i, event, t.id, emitted, j))
            out += 1
        if out == 0:
            edges.append(Edge(i, STUTTER, None, NO_ACTION, i))
    return KripkeStructure(efsm.name, tuple(nodes), (0,), tuple(edges))


def kripke_text(k: KripkeStructure) -> str:
    """Line-oriented interchange form: ``node`` lines then ``edge`` lines."""
    lines = [f"kripke {k.name} nodes {len(k.nodes)} edges {len(k.edges)}",
             "initial " + " ".join(str(i) for i in k.initial)]
    for i, n in enumerate(k.nodes):
        props = " ".join(f"{name}=={value}" for name, value in n.letter().items())
        lines.append(f"node {i} {props}")
    for e in k.edges:
        lines.append(f"edge {e.source} {e.event} {e.transition or '-'} {e.emitted} {e.target}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Consistency with the context tables
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    requirement_ssrs: tuple[str, ...]
    action: str
    kind: str
    row: tuple[tuple[str, str], ...]
    config: Configuration
    event: Optional[str]
    transition: Optional[str]

    def describe(self) -> str:
        row = ", ".join(f"{v}={x}" for v, x in self.row)
        where = f"{self.config.state} {dict(self.config.valuation)}"
        if self.transition:
            return (f"{self.action} can be provided by {self.transition} on {self.event} "
                    f"in hazardous context [{row}] at {where}")
        return f"{self.action} can never be provided in hazardous context [{row}] at {where}"


def check_model_consistency(efsm: Efsm, rows, configurations: Optional[Sequence[Configuration]] = None,
                            node_cap: int = DEFAULT_NODE_CAP) -> list[Violation]:
    """Compare reachable behavior with hazardous context rows.

    Providing rows must never see an enabled transition that emits the
    action; NotProviding rows must always offer at least one.
    """
    rows = [r for r in rows if r.verdict.hazardous]
    if not rows:
        return []
    if configurations is None:
        configurations = expand(efsm, node_cap).configurations()
    variables = set(efsm.variables)
    out = []
    for row in rows:
        if any(v not in variables for v, _ in row.valuation):
            continue
        for config in configurations:
            values = config.values
            if any(values[v] != x for v, x in row.valuation):
                continue
            emitting = [(e, t) for e in efsm.events for t in enabled(efsm, config, e)
                        if t.emits == row.action]
            if row.kind is ContextKind.PROVIDING:
                for e, t in emitting:
                    out.append(Violation(row.verdict.ssrs, row.action, row.kind.value,
                                         row.valuation, config, e, t.id))
            elif not emitting:
                out.append(Violation(row.verdict.ssrs, row.action, row.kind.value,
                                     row.valuation, config, None, None))
    return out


__all__ = ["Configuration", "Conflict", "Node", "Edge", "KripkeStructure", "Violation",
           "EfsmError", "ResourceExceeded", "STUTTER", "DEFAULT_NODE_CAP",
           "initial_configuration", "enabled", "fire", "step", "check_determinism", "domains_of",
           "expand", "kripke_text", "check_model_consistency"]
