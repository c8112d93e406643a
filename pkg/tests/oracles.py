"""Reference implementations the tests compare the package against.

Nothing here reuses the package's automaton construction, product search or
Kripke expansion. The LTL oracle labels every position with the exact truth
value of every subformula (one atom per labelling), links atoms through the
one-step expansion laws and asks for a reachable fair cycle.
"""
from __future__ import annotations

import itertools
from typing import Iterable, Mapping, Sequence

from stpa_workbench.ltl import (Finally, Globally, Iff, Implies, LAnd, LConst, LNot, LOr, Next,
                                Prop, Release, Until, evaluate_lasso)
from stpa_workbench.model import NO_ACTION, eval_bool

TEMPORAL = (Next, Until, Release, Globally, Finally)


def subformulas(f) -> list:
    """Post-order list of distinct subformulas (children before parents)."""
    out: list = []
    seen: set = set()

    def walk(g):
        if g in seen:
            return
        match g:
            case LNot(a) | Next(a) | Globally(a) | Finally(a):
                walk(a)
            case LAnd(a, b) | LOr(a, b) | Implies(a, b) | Iff(a, b) | Until(a, b) | Release(a, b):
                walk(a)
                walk(b)
        seen.add(g)
        out.append(g)

    walk(f)
    return out


def _label(subs, temporal_values: dict, letter: Mapping[str, str]) -> dict:
    v: dict = {}
    for g in subs:
        match g:
            case Prop(atom):
                v[g] = (letter.get(atom.var) == atom.value) != atom.negated
            case LConst(value):
                v[g] = value
            case LNot(a):
                v[g] = not v[a]
            case LAnd(a, b):
                v[g] = v[a] and v[b]
            case LOr(a, b):
                v[g] = v[a] or v[b]
            case Implies(a, b):
                v[g] = (not v[a]) or v[b]
            case Iff(a, b):
                v[g] = v[a] == v[b]
            case _:
                v[g] = temporal_values[g]
    return v


def _linked(g, here: dict, there: dict) -> bool:
    nxt = there[g] if not isinstance(g, Next) else None
    match g:
        case Next(a):
            return here[g] == there[a]
        case Until(a, b):
            return here[g] == (here[b] or (here[a] and nxt))
        case Release(a, b):
            return here[g] == (here[b] and (here[a] or nxt))
        case Globally(a):
            return here[g] == (here[a] and nxt)
        case Finally(a):
            return here[g] == (here[a] or nxt)
    raise TypeError(g)


def _pending(g, v: dict) -> bool:
    """Is an eventuality outstanding at this atom?"""
    match g:
        case Until(_, b):
            return v[g] and not v[b]
        case Finally(a):
            return v[g] and not v[a]
        case Release(_, b):
            return not v[g] and v[b]
        case Globally(a):
            return not v[g] and v[a]
    return False


def _sccs(n: int, adj: Sequence[Sequence[int]]) -> list[list[int]]:
    """Tarjan, iterative."""
    index = [-1] * n
    low = [0] * n
    on = [False] * n
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on[root] = True
        while work:
            v, i = work[-1]
            if i < len(adj[v]):
                work[-1] = (v, i + 1)
                w = adj[v][i]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on[w] = True
                    work.append((w, 0))
                elif on[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def violated(k, formula) -> bool:
    """Does some infinite path of ``k`` from an initial node falsify ``formula``?"""
    subs = subformulas(formula)
    temporal = [g for g in subs if isinstance(g, TEMPORAL)]
    letters = k.letters()
    atoms: list[tuple[int, dict]] = []
    by_node: dict[int, list[int]] = {}
    for node, letter in enumerate(letters):
        for bits in itertools.product((False, True), repeat=len(temporal)):
            atoms.append((node, _label(subs, dict(zip(temporal, bits)), letter)))
            by_node.setdefault(node, []).append(len(atoms) - 1)
    kadj: dict[int, set[int]] = {}
    for e in k.edges:
        kadj.setdefault(e.source, set()).add(e.target)
    adj: list[list[int]] = []
    for node, v in atoms:
        adj.append([j for t in sorted(kadj.get(node, ())) for j in by_node[t]
                    if all(_linked(g, v, atoms[j][1]) for g in temporal)])

    # restrict to atoms reachable from an initial atom falsifying the formula
    start = [j for n in k.initial for j in by_node[n] if not atoms[j][1][formula]]
    reach = set(start)
    todo = list(start)
    while todo:
        for j in adj[todo.pop()]:
            if j not in reach:
                reach.add(j)
                todo.append(j)
    eventualities = [g for g in temporal if not isinstance(g, Next)]
    for comp in _sccs(len(atoms), adj):
        if not comp or comp[0] not in reach:
            continue
        members = set(comp)
        if not any(m2 in members for m in comp for m2 in adj[m]):
            continue
        if all(any(not _pending(g, atoms[m][1]) for m in comp) for g in eventualities):
            return True
    return False


def lassos(k, max_len: int) -> Iterable[tuple[list[int], int]]:
    """Every lasso (node path, loop index) of length at most ``max_len``."""
    adj: dict[int, set[int]] = {}
    for e in k.edges:
        adj.setdefault(e.source, set()).add(e.target)

    def extend(path):
        last = path[-1]
        for loop, n in enumerate(path):
            if n in adj.get(last, ()):
                yield list(path), loop
        if len(path) < max_len:
            for t in sorted(adj.get(last, ())):
                yield from extend(path + [t])

    for init in k.initial:
        yield from extend([init])


def violating_lasso(k, formula, max_len: int):
    letters = k.letters()
    for path, loop in lassos(k, max_len):
        if not evaluate_lasso(formula, [letters[i] for i in path], loop):
            return path, loop
    return None


# --------------------------------------------------------------------------
# Brute-force EFSM simulation
# --------------------------------------------------------------------------


def simulate(efsm, events: Sequence[str]):
    """Run ``events`` from the initial configuration by reading the
    transition table directly. Returns the list of (state, valuation, emitted)
    after each event. An event that enables nothing changes nothing, the
    last emission included."""
    state = efsm.initial_state
    values = dict(efsm.initial_valuation)
    emitted = NO_ACTION
    trace = []
    for ev in events:
        for t in efsm.transitions:
            if t.source != state or t.event != ev:
                continue
            if t.guard is not None and not eval_bool(t.guard, values):
                continue
            state = t.target
            values.update(dict(t.assignments))
            emitted = t.emits or NO_ACTION
            break
        trace.append((state, tuple(sorted(values.items())), emitted))
    return trace


def reachable_by_sequences(efsm, max_len: int) -> set:
    """(state, valuation, last emission) triples reached by any event
    sequence of length at most ``max_len``."""
    start = (efsm.initial_state, tuple(sorted(dict(efsm.initial_valuation).items())), NO_ACTION)
    seen = {start}
    for n in range(1, max_len + 1):
        for seq in itertools.product(efsm.events, repeat=n):
            seen.add(simulate(efsm, seq)[-1])
    return seen


def covering_ok(domains: Sequence[int], rows: Sequence[Sequence[int]], t: int) -> bool:
    """Every t-way value combination appears in some row."""
    for cols in itertools.combinations(range(len(domains)), t):
        need = set(itertools.product(*(range(domains[c]) for c in cols)))
        have = {tuple(r[c] for c in cols) for r in rows}
        if need - have:
            return False
    return True
