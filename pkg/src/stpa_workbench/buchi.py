"""Translation of LTL formulas into Büchi automata.

The construction is the usual on-the-fly tableau: a state is the set of
obligations that must hold from the current position on; expanding it yields
covers (literals to read now, obligations for the next position). Untils that
are postponed by a cover make it non-accepting for that until, which gives a
transition-based generalized Büchi automaton. A level counter degeneralizes
it into an ordinary state-based automaton.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .ltl import (LAnd, LConst, LOr, LtlFormula, Letter, Next, Prop, Release, Until,
                  holds_atom, negate_atom, nnf, render_ltl)

DEFAULT_STATE_CAP = 50_000


class AutomatonTooLarge(Exception):
    def __init__(self, cap: int):
        super().__init__(f"automaton exceeds {cap} states")
        self.cap = cap


Label = frozenset  # frozenset[Atom] read as a conjunction of literals


@dataclass(frozen=True)
class BuchiAutomaton:
    states: tuple[int, ...]
    initial: tuple[int, ...]
    transitions: tuple[tuple[int, Label, int], ...]
    accepting: frozenset[int]
    names: tuple[str, ...] = ()

    def successors(self, q: int) -> list[tuple[Label, int]]:
        return [(lab, dst) for src, lab, dst in self.transitions if src == q]

    def adjacency(self) -> dict[int, list[tuple[Label, int]]]:
        adj: dict[int, list[tuple[Label, int]]] = {q: [] for q in self.states}
        for src, lab, dst in self.transitions:
            adj[src].append((lab, dst))
        return adj


def label_holds(label: Label, letter: Letter) -> bool:
    return all(holds_atom(a, letter) for a in label)


def _consistent(literals: frozenset) -> bool:
    positive: dict[str, str] = {}
    for a in literals:
        if negate_atom(a) in literals:
            return False
        if not a.negated:
            if positive.setdefault(a.var, a.value) != a.value:
                return False
    for a in literals:
        if a.negated and positive.get(a.var) == a.value:
            return False
    return True


@dataclass(frozen=True)
class _Cover:
    literals: frozenset
    next: frozenset
    postponed: frozenset


def _expand(obligations: frozenset) -> list[_Cover]:
    covers: list[_Cover] = []
    # each work item: (todo, literals, next, postponed)
    work = [(list(obligations), frozenset(), frozenset(), frozenset())]
    while work:
        todo, lits, nxt, post = work.pop()
        dead = False
        while todo and not dead:
            f = todo.pop()
            match f:
                case LConst(True):
                    pass
                case LConst(False):
                    dead = True
                case Prop(atom):
                    lits = lits | {atom}
                    if not _consistent(lits):
                        dead = True
                case LAnd(a, b):
                    todo += [a, b]
                case LOr(a, b):
                    work.append((todo + [b], lits, nxt, post))
                    todo.append(a)
                case Next(a):
                    nxt = nxt | {a}
                case Until(a, b):
                    work.append((todo + [a], lits, nxt | {f}, post | {f}))
                    todo.append(b)
                case Release(a, b):
                    work.append((todo + [b], lits, nxt | {f}, post))
                    todo += [a, b]
                case _:
                    raise ValueError(f"formula not in negation normal form: {f!r}")
        if not dead:
            covers.append(_Cover(lits, nxt, post))
    # identical covers can arise from different branch orders
    unique: dict[_Cover, None] = {}
    for c in covers:
        unique.setdefault(c, None)
    return list(unique)


def _untils(f: LtlFormula, acc: dict) -> None:
    if isinstance(f, Until):
        acc.setdefault(f, None)
    for attr in ("left", "right", "operand"):
        sub = getattr(f, attr, None)
        if sub is not None:
            _untils(sub, acc)


def _sort_key(obligations: frozenset) -> tuple:
    return tuple(sorted(render_ltl(f) for f in obligations))


def ltl_to_buchi(formula: LtlFormula, state_cap: int = DEFAULT_STATE_CAP) -> BuchiAutomaton:
    """Build a Büchi automaton accepting exactly the words satisfying ``formula``."""
    root = nnf(formula)
    found: dict = {}
    _untils(root, found)
    untils = sorted(found, key=render_ltl)

    # generalized automaton over obligation sets
    init = frozenset({root})
    index: dict[frozenset, int] = {init: 0}
    order = [init]
    edges: list[tuple[int, frozenset, int, frozenset]] = []
    queue = deque([init])
    while queue:
        s = queue.popleft()
        covers = sorted(_expand(s), key=lambda c: (_sort_key(c.next), _label_key(c.literals),
                                                   _sort_key(c.postponed)))
        for c in covers:
            if c.next not in index:
                if len(index) >= state_cap:
                    raise AutomatonTooLarge(state_cap)
                index[c.next] = len(order)
                order.append(c.next)
                queue.append(c.next)
            accepting_sets = frozenset(i for i, u in enumerate(untils) if u not in c.postponed)
            edges.append((index[s], c.literals, index[c.next], accepting_sets))

    k = len(untils)
    out_edges: dict[int, list] = {}
    for src, lab, dst, acc in edges:
        out_edges.setdefault(src, []).append((lab, dst, acc))

    if k == 0:
        states = tuple(range(len(order)))
        transitions = _dedupe((src, lab, dst) for src, lab, dst, _ in edges)
        names = tuple("{" + ", ".join(_sort_key(s)) + "}" for s in order)
        return BuchiAutomaton(states, (0,), transitions, frozenset(states), names)

    # degeneralize: level k marks that every acceptance set was seen
    start = (0, 0)
    ids = {start: 0}
    names = [_level_name(order[0], 0)]
    trans: list[tuple[int, Label, int]] = []
    queue2 = deque([start])
    while queue2:
        q, level = queue2.popleft()
        base = 0 if level == k else level
        for lab, dst, acc in out_edges.get(q, ()):
            j = base
            while j < k and j in acc:
                j += 1
            target = (dst, j)
            if target not in ids:
                if len(ids) >= state_cap:
                    raise AutomatonTooLarge(state_cap)
                ids[target] = len(ids)
                names.append(_level_name(order[dst], j))
                queue2.append(target)
            trans.append((ids[(q, level)], lab, ids[target]))
    accepting = frozenset(i for (q, level), i in ids.items() if level == k)
    return BuchiAutomaton(tuple(range(len(ids))), (0,), _dedupe(trans), accepting, tuple(names))


def _label_key(lits: frozenset) -> tuple:
    return tuple(sorted((a.var, a.value, a.negated) for a in lits))


def _level_name(obligations: frozenset, level: int) -> str:
    return "{" + ", ".join(_sort_key(obligations)) + f"}}#{level}"


def _dedupe(items) -> tuple:
    seen: dict = {}
    for t in items:
        seen.setdefault(t, None)
    return tuple(seen)


def accepts_lasso(ba: BuchiAutomaton, word: Sequence[Letter], loop: int) -> bool:
    """Does ``ba`` accept ``word[:loop] (word[loop:])^omega``?"""
    n = len(word)
    succ = [i + 1 for i in range(n - 1)] + [loop]
    adj = ba.adjacency()

    def nexts(node: tuple[int, int]) -> list[tuple[int, int]]:
        q, i = node
        return [(dst, succ[i]) for lab, dst in adj[q] if label_holds(lab, word[i])]

    reachable: list[tuple[int, int]] = []
    seen = set()
    stack = [(q, 0) for q in ba.initial]
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        reachable.append(node)
        stack.extend(nexts(node))
    for node in reachable:
        if node[0] in ba.accepting and _on_cycle(node, nexts):
            return True
    return False


def _on_cycle(node, nexts) -> bool:
    seen = set()
    stack = list(nexts(node))
    while stack:
        cur = stack.pop()
        if cur == node:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(nexts(cur))
    return False


def describe(ba: BuchiAutomaton) -> str:
    lines = [f"states {len(ba.states)}, initial {list(ba.initial)}, accepting {sorted(ba.accepting)}"]
    for src, lab, dst in ba.transitions:
        text = " && ".join(f"{a.var}{'!=' if a.negated else '=='}{a.value}"
                           for a in sorted(lab, key=lambda a: (a.var, a.value, a.negated))) or "true"
        lines.append(f"  {src} --[{text}]--> {dst}")
    return "\n".join(lines)


__all__ = ["BuchiAutomaton", "ltl_to_buchi", "accepts_lasso", "label_holds",
           "AutomatonTooLarge", "describe"]
