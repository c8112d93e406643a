"""Safety-based test generation from the behavior model: coverage-driven
traversal, counterexample tests, dedup, concretization and traceability."""
from __future__ import annotations

import csv
import io
import json
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .checker import Counterexample
from .efsm import STUTTER, Configuration, KripkeStructure, expand, initial_configuration, step
from .model import NO_ACTION, Efsm, Interval, Literals, SafetyRequirement, Transition, VariableConcretization

STATES = "states"
TRANSITIONS = "transitions"
PAIRS = "pairs"
ACTIONS = "actions"
CRITERIA = (STATES, TRANSITIONS, PAIRS, ACTIONS)

MUST_PASS = "must-pass"
MUST_NOT_REPRODUCE = "must-not-reproduce"

DEFAULT_BUDGET = 5000
MAX_TEST_LENGTH = 12


class IntegrityError(Exception):
    pass


class ConcretizationError(Exception):
    pass


@dataclass(frozen=True)
class TestStep:
    __test__ = False  # not a pytest class

    event: str
    inputs: tuple[tuple[str, str], ...]
    expected_emission: str
    expected_state: str
    transition: Optional[str]
    expected_valuation: tuple[tuple[str, str], ...] = ()
    ssrs: tuple[str, ...] = ()


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    id: str
    steps: tuple[TestStep, ...]
    origin: str  # "traversal:<criterion>:<seed>" or "counterexample:<ssr>"
    polarity: str = MUST_PASS

    @property
    def transitions(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(s.transition for s in self.steps if s.transition))

    @property
    def ssrs(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(x for s in self.steps for x in s.ssrs))

    def signature(self) -> tuple:
        return tuple((s.event, s.transition) for s in self.steps)


@dataclass
class TestSuite:
    __test__ = False  # not a pytest class

    cases: list[TestCase]
    seed: int = 0
    criteria: tuple[str, ...] = CRITERIA
    budget: int = DEFAULT_BUDGET
    shortfall: list[str] = field(default_factory=list)
    raw_size: Optional[int] = None


def parse_criteria(text: str) -> tuple[str, ...]:
    items = tuple(x.strip() for x in text.split(",") if x.strip())
    bad = [x for x in items if x not in CRITERIA]
    if bad or not items:
        raise ValueError(f"unknown criteria {bad or text!r}; choose from {', '.join(CRITERIA)}")
    return tuple(c for c in CRITERIA if c in items)


# --------------------------------------------------------------------------
# Obligations
# --------------------------------------------------------------------------


def structural_pairs(efsm: Efsm) -> set[tuple[str, str]]:
    return {(a.id, b.id) for a in efsm.transitions for b in efsm.transitions if a.target == b.source}


def reachable_obligations(efsm: Efsm, k: Optional[KripkeStructure] = None) -> dict[str, set]:
    k = k or expand(efsm)
    adj = k.successors()
    incoming: dict[int, set[str]] = {}
    for e in k.edges:
        if e.transition:
            incoming.setdefault(e.target, set()).add(e.transition)
    pairs = set()
    for i in range(len(k.nodes)):
        outs = {e.transition for e in adj[i] if e.transition}
        for a in incoming.get(i, ()):
            pairs.update((a, b) for b in outs)
    return {
        STATES: {n.config.state for n in k.nodes},
        TRANSITIONS: {e.transition for e in k.edges if e.transition},
        PAIRS: pairs,
        ACTIONS: {e.event for e in k.edges if e.transition},
    }


def total_obligations(efsm: Efsm) -> dict[str, set]:
    return {
        STATES: set(efsm.states),
        TRANSITIONS: {t.id for t in efsm.transitions},
        PAIRS: structural_pairs(efsm),
        ACTIONS: set(efsm.events),
    }


def _obligations_of(criterion: str, last: Optional[str], t: Transition) -> list:
    if criterion == STATES:
        return [t.target]
    if criterion == TRANSITIONS:
        return [t.id]
    if criterion == PAIRS:
        return [(last, t.id)] if last else []
    return [t.event]


# --------------------------------------------------------------------------
# Generation
# --------------------------------------------------------------------------


def _options(efsm: Efsm, config: Configuration) -> list[tuple[str, Transition]]:
    out = []
    for event in efsm.events:
        nxt, _, t = step(efsm, config, event)
        if t is not None:
            out.append((event, t))
    return out


def _make_step(efsm: Efsm, config: Configuration, event: str, t: Transition,
               inputs_of: frozenset) -> tuple[TestStep, Configuration]:
    nxt, emitted, _ = step(efsm, config, event)
    delta = tuple((v, x) for v, x in t.assignments if v in inputs_of)
    return TestStep(event, delta, emitted or NO_ACTION, nxt.state, t.id, nxt.valuation,
                    t.ssr_labels), nxt


def _route(efsm: Efsm, start: Configuration, last: Optional[str], criterion: str,
           uncovered: set) -> Optional[list[tuple[str, Transition]]]:
    """Shortest event path from (start, last) to a step that meets an
    uncovered obligation."""
    origin = (start, last)
    parent: dict = {origin: None}
    queue = deque([origin])
    while queue:
        cfg, prev = queue.popleft()
        for event, t in _options(efsm, cfg):
            node = (step(efsm, cfg, event)[0], t.id)
            if any(o in uncovered for o in _obligations_of(criterion, prev, t)):
                path = [(event, t)]
                cur = (cfg, prev)
                while parent[cur] is not None:
                    cur, move = parent[cur]
                    path.append(move)
                path.reverse()
                return path
            if node not in parent:
                parent[node] = ((cfg, prev), (event, t))
                queue.append(node)
    return None


def generate(efsm: Efsm, criteria: Sequence[str] = CRITERIA, seed: int = 0,
             budget: int = DEFAULT_BUDGET, input_variables: Optional[Iterable[str]] = None,
             k: Optional[KripkeStructure] = None, max_length: int = MAX_TEST_LENGTH) -> TestSuite:
    """One greedy traversal per criterion, concatenated into a raw suite.

    From the current configuration the step adding most new obligations is
    taken (seeded draw on ties); with nothing new one step away, the walk
    follows a shortest route to the nearest uncovered obligation, and a test
    ends when none is reachable or it hits ``max_length``.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    inputs_of = frozenset(efsm.variables if input_variables is None else input_variables)
    reachable = reachable_obligations(efsm, k)
    totals = total_obligations(efsm)
    cases: list[TestCase] = []
    shortfall: list[str] = []
    used = 0
    for criterion in criteria:
        rng = random.Random(f"{seed}:{criterion}")
        uncovered = set(reachable[criterion])
        if criterion == STATES:
            uncovered.discard(efsm.initial_state)
        while uncovered and used < budget:
            config, last = initial_configuration(efsm), None
            steps: list[TestStep] = []
            plan: list[tuple[str, Transition]] = []
            while uncovered and used < budget and len(steps) < max_length:
                if not plan:
                    options = _options(efsm, config)
                    scored = [(sum(o in uncovered for o in _obligations_of(criterion, last, t)), ev, t)
                              for ev, t in options]
                    top = max((s for s, _, _ in scored), default=0)
                    if top > 0:
                        best = [(ev, t) for s, ev, t in scored if s == top]
                        plan = [best[rng.randrange(len(best))]]
                    else:
                        plan = _route(efsm, config, last, criterion, uncovered) or []
                        if not plan:
                            break
                event, t = plan.pop(0)
                for o in _obligations_of(criterion, last, t):
                    uncovered.discard(o)
                s, config = _make_step(efsm, config, event, t, inputs_of)
                steps.append(s)
                last = t.id
                used += 1
            if not steps:
                break
            cases.append(TestCase(f"TC{len(cases) + 1:03d}", tuple(steps),
                                  f"traversal:{criterion}:{seed}"))
        for o in sorted(uncovered, key=str):
            shortfall.append(f"{criterion}: {_fmt(o)} not covered (budget exhausted)")
        for o in sorted(totals[criterion] - reachable[criterion], key=str):
            shortfall.append(f"{criterion}: {_fmt(o)} unreachable")
    return TestSuite(cases, seed, tuple(criteria), budget, shortfall, len(cases))


def _fmt(o) -> str:
    return f"{o[0]}->{o[1]}" if isinstance(o, tuple) else str(o)


# --------------------------------------------------------------------------
# Measurement and dedup
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Metric:
    covered: int
    total: int
    reachable: int

    @property
    def percent(self) -> float:
        return 100.0 * self.covered / self.total if self.total else 100.0

    @property
    def reachable_percent(self) -> float:
        return 100.0 * self.covered / self.reachable if self.reachable else 100.0


@dataclass(frozen=True)
class CoverageReport:
    states: Metric
    transitions: Metric
    pairs: Metric
    actions: Metric
    covered: Mapping[str, frozenset] = field(default_factory=dict, compare=False)

    def metric(self, name: str) -> Metric:
        return getattr(self, name)

    def as_dict(self) -> dict:
        return {c: {"covered": m.covered, "total": m.total, "reachable": m.reachable}
                for c, m in ((c, self.metric(c)) for c in CRITERIA)}


def replay_case(efsm: Efsm, case: TestCase) -> list[Configuration]:
    """Configurations visited by ``case``; raises IntegrityError on mismatch."""
    config = initial_configuration(efsm)
    seen = [config]
    for i, s in enumerate(case.steps):
        if s.event == STUTTER:
            if any(_options(efsm, config)):
                raise IntegrityError(f"{case.id} step {i}: stutter at a node with successors")
            nxt, emitted, t = config, None, None
        else:
            if s.event not in efsm.events:
                raise IntegrityError(f"{case.id} step {i}: unknown event {s.event}")
            nxt, emitted, t = step(efsm, config, s.event)
        tid = t.id if t else None
        if tid != s.transition:
            raise IntegrityError(f"{case.id} step {i}: expected transition {s.transition}, fired {tid}")
        if (emitted or NO_ACTION) != s.expected_emission or nxt.state != s.expected_state:
            raise IntegrityError(f"{case.id} step {i}: state or emission differs from the model")
        if s.expected_valuation and tuple(s.expected_valuation) != nxt.valuation:
            raise IntegrityError(f"{case.id} step {i}: valuation differs from the model")
        config = nxt
        seen.append(config)
    return seen


def measure(suite: TestSuite | Sequence[TestCase], efsm: Efsm,
            reachable: Optional[Mapping[str, set]] = None) -> CoverageReport:
    cases = suite.cases if isinstance(suite, TestSuite) else list(suite)
    reachable = reachable or reachable_obligations(efsm)
    totals = total_obligations(efsm)
    got: dict[str, set] = {c: set() for c in CRITERIA}
    for case in cases:
        replay_case(efsm, case)
        got[STATES].add(efsm.initial_state)
        last = None
        for s in case.steps:
            if s.transition is None:
                last = None
                continue
            got[STATES].add(s.expected_state)
            got[TRANSITIONS].add(s.transition)
            got[ACTIONS].add(s.event)
            if last:
                got[PAIRS].add((last, s.transition))
            last = s.transition
    metrics = {c: Metric(len(got[c]), len(totals[c]), len(reachable[c])) for c in CRITERIA}
    return CoverageReport(**metrics, covered={c: frozenset(got[c]) for c in CRITERIA})


def dedup(suite: TestSuite) -> TestSuite:
    """Drop exact repeats and cases whose steps are a prefix of another case
    with the same polarity; first occurrences are kept."""
    kept: list[TestCase] = []
    seen: set = set()
    for case in suite.cases:
        sig = (case.polarity, case.signature())
        if sig in seen:
            continue
        seen.add(sig)
        kept.append(case)
    out = []
    for case in kept:
        sig = case.signature()
        longer = any(o.polarity == case.polarity and len(o.steps) > len(sig)
                     and o.signature()[:len(sig)] == sig for o in kept)
        if not longer:
            out.append(case)
    return TestSuite(out, suite.seed, suite.criteria, suite.budget, list(suite.shortfall),
                     suite.raw_size if suite.raw_size is not None else len(suite.cases))


# --------------------------------------------------------------------------
# Counterexample tests
# --------------------------------------------------------------------------


def from_counterexample(k: KripkeStructure, cex: Counterexample, req: SafetyRequirement,
                        efsm: Efsm, input_variables: Optional[Iterable[str]] = None,
                        case_id: Optional[str] = None) -> TestCase:
    """Prefix plus one pass around the cycle, as a must-not-reproduce test."""
    inputs_of = frozenset(efsm.variables if input_variables is None else input_variables)
    edges = {(e.source, e.event): e for e in k.edges}
    steps = []
    n = len(cex.path)
    if cex.path[0] not in k.initial:
        raise IntegrityError("counterexample does not start at an initial node")
    for i, (src, event) in enumerate(zip(cex.path, cex.events)):
        dst = cex.path[i + 1] if i + 1 < n else cex.path[cex.loop]
        e = edges.get((src, event))
        if e is None or e.target != dst:
            raise IntegrityError(f"counterexample step {i} is not an edge of the model")
        node = k.nodes[dst]
        if e.transition is None:
            steps.append(TestStep(event, (), NO_ACTION, node.config.state, None, node.config.valuation))
            continue
        t = efsm.transition(e.transition)
        delta = tuple((v, x) for v, x in t.assignments if v in inputs_of)
        steps.append(TestStep(event, delta, e.emitted, node.config.state, t.id,
                              node.config.valuation, t.ssr_labels))
    return TestCase(case_id or f"CX-{req.id}", tuple(steps), f"counterexample:{req.id}",
                    MUST_NOT_REPRODUCE)


# --------------------------------------------------------------------------
# Concretization
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConcreteStep:
    event: str
    inputs: tuple[tuple[str, float], ...]
    expected_emission: str
    expected_state: str
    expected_valuation: tuple[tuple[str, str], ...]
    transition: Optional[str]


@dataclass(frozen=True)
class ConcreteTestScript:
    test_id: str
    variant: str  # "sample", "low" or "high"
    polarity: str
    steps: tuple[ConcreteStep, ...]
    ssrs: tuple[str, ...] = ()


def _draw(cset, rng: random.Random, variant: str) -> float:
    if isinstance(cset, Literals):
        values = sorted(cset.values)
        if variant == "low":
            return values[0]
        if variant == "high":
            return values[-1]
        return values[rng.randrange(len(values))]
    assert isinstance(cset, Interval)
    if variant == "low":
        return cset.low
    if variant == "high":
        return cset.high
    if float(cset.low).is_integer() and float(cset.high).is_integer():
        return rng.randint(int(cset.low), int(cset.high))
    return rng.uniform(cset.low, cset.high)


def concretize(case: TestCase, concretizations: Mapping[str, VariableConcretization] | Sequence,
               seed: int = 0, boundary: bool = False) -> list[ConcreteTestScript]:
    """One script with seeded draws; boundary mode adds all-low and all-high
    variants taking interval ends."""
    if not isinstance(concretizations, Mapping):
        concretizations = {c.variable: c for c in concretizations}
    variants = ["sample", "low", "high"] if boundary else ["sample"]
    rng = random.Random(f"{seed}:{case.id}")
    out = []
    for variant in variants:
        steps = []
        for s in case.steps:
            inputs = []
            for var, label in s.inputs:
                c = concretizations.get(var)
                try:
                    cset = c.lookup(label) if c else None
                except KeyError:
                    cset = None
                if cset is None:
                    raise ConcretizationError(f"no concrete values for {var} = {label}")
                inputs.append((var, _num(_draw(cset, rng, variant))))
            steps.append(ConcreteStep(s.event, tuple(inputs), s.expected_emission, s.expected_state,
                                      s.expected_valuation, s.transition))
        out.append(ConcreteTestScript(case.id, variant, case.polarity, tuple(steps), case.ssrs))
    return out


def _num(x: float):
    return int(x) if float(x).is_integer() else x


# --------------------------------------------------------------------------
# Traceability
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceabilityMatrix:
    ssrs: tuple[str, ...]
    tests: tuple[str, ...]
    cells: tuple[tuple[bool, ...], ...]

    def count(self, ssr: str) -> int:
        return sum(self.cells[self.ssrs.index(ssr)])

    @property
    def counts(self) -> dict[str, int]:
        return {s: sum(row) for s, row in zip(self.ssrs, self.cells)}

    @property
    def coverage_percent(self) -> float:
        if not self.ssrs:
            return 100.0
        return 100.0 * sum(1 for row in self.cells if any(row)) / len(self.ssrs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ssr_id", *self.tests, "count"])
        for s, row in zip(self.ssrs, self.cells):
            w.writerow([s, *(int(c) for c in row), sum(row)])
        w.writerow(["coverage_percent", *([""] * len(self.tests)), f"{self.coverage_percent:.1f}"])
        return buf.getvalue()


def traceability(suite: TestSuite | Sequence[TestCase],
                 ssrs: Sequence[SafetyRequirement]) -> TraceabilityMatrix:
    cases = suite.cases if isinstance(suite, TestSuite) else list(suite)
    ids = tuple(r.id for r in ssrs)
    covered = [set(c.ssrs) for c in cases]
    cells = tuple(tuple(r in cov for cov in covered) for r in ids)
    return TraceabilityMatrix(ids, tuple(c.id for c in cases), cells)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def _case_dict(c: TestCase) -> dict:
    return {
        "id": c.id, "origin": c.origin, "polarity": c.polarity,
        "steps": [{
            "event": s.event, "inputs": dict(s.inputs), "expected_state": s.expected_state,
            "expected_emission": s.expected_emission, "transition": s.transition,
            "expected_valuation": dict(s.expected_valuation), "ssrs": list(s.ssrs),
        } for s in c.steps],
    }


def suite_to_json(suite: TestSuite) -> str:
    data = {
        "seed": suite.seed, "criteria": list(suite.criteria), "budget": suite.budget,
        "raw_size": suite.raw_size, "shortfall": suite.shortfall,
        "cases": [_case_dict(c) for c in suite.cases],
    }
    return json.dumps(data, indent=1) + "\n"


def suite_from_json(text: str) -> TestSuite:
    data = json.loads(text)
    cases = []
    for c in data["cases"]:
        steps = tuple(TestStep(s["event"], tuple(s["inputs"].items()), s["expected_emission"],
                               s["expected_state"], s["transition"],
                               tuple(s.get("expected_valuation", {}).items()), tuple(s["ssrs"]))
                      for s in c["steps"])
        cases.append(TestCase(c["id"], steps, c["origin"], c["polarity"]))
    return TestSuite(cases, data.get("seed", 0), tuple(data.get("criteria", CRITERIA)),
                     data.get("budget", DEFAULT_BUDGET), list(data.get("shortfall", [])),
                     data.get("raw_size"))


def scripts_to_json(scripts: Sequence[ConcreteTestScript]) -> str:
    return json.dumps([asdict(s) for s in scripts], indent=1) + "\n"


__all__ = ["TestStep", "TestCase", "TestSuite", "CoverageReport", "Metric", "TraceabilityMatrix",
           "ConcreteStep", "ConcreteTestScript", "IntegrityError", "ConcretizationError",
           "CRITERIA", "STATES", "TRANSITIONS", "PAIRS", "ACTIONS", "MUST_PASS", "MUST_NOT_REPRODUCE",
           "parse_criteria", "generate", "measure", "dedup", "from_counterexample", "concretize",
           "traceability", "replay_case", "reachable_obligations", "total_obligations",
           "structural_pairs", "suite_to_json", "suite_from_json", "scripts_to_json"]
