"""Linear temporal logic formulas: syntax tree, parser, printer, negation
normal form and direct evaluation over lasso-shaped words."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence, Union

from .lexer import ParseError, TokenStream, tokenize
from .model import And, Atom, BoolExpr, Const, Not, Or, conjunction, disjunction


@dataclass(frozen=True)
class Prop:
    atom: Atom


@dataclass(frozen=True)
class LConst:
    value: bool


@dataclass(frozen=True)
class LNot:
    operand: "LtlFormula"


@dataclass(frozen=True)
class LAnd:
    left: "LtlFormula"
    right: "LtlFormula"


@dataclass(frozen=True)
class LOr:
    left: "LtlFormula"
    right: "LtlFormula"


@dataclass(frozen=True)
class Implies:
    left: "LtlFormula"
    right: "LtlFormula"


@dataclass(frozen=True)
class Iff:
    left: "LtlFormula"
    right: "LtlFormula"


@dataclass(frozen=True)
class Next:
    operand: "LtlFormula"


@dataclass(frozen=True)
class Globally:
    operand: "LtlFormula"


@dataclass(frozen=True)
class Finally:
    operand: "LtlFormula"


@dataclass(frozen=True)
class Until:
    left: "LtlFormula"
    right: "LtlFormula"


@dataclass(frozen=True)
class Release:
    left: "LtlFormula"
    right: "LtlFormula"


LtlFormula = Union[Prop, LConst, LNot, LAnd, LOr, Implies, Iff, Next, Globally, Finally, Until, Release]

LTRUE = LConst(True)
LFALSE = LConst(False)

_UNARY = {"G": Globally, "F": Finally, "X": Next}
_BINARY_TEMPORAL = {"U": Until, "R": Release}


def children(f: LtlFormula) -> tuple[LtlFormula, ...]:
    match f:
        case LNot(a) | Next(a) | Globally(a) | Finally(a):
            return (a,)
        case LAnd(a, b) | LOr(a, b) | Implies(a, b) | Iff(a, b) | Until(a, b) | Release(a, b):
            return (a, b)
    return ()


def propositions(f: LtlFormula) -> Iterator[Atom]:
    if isinstance(f, Prop):
        yield f.atom
    for c in children(f):
        yield from propositions(c)


def depth(f: LtlFormula) -> int:
    return 1 + max((depth(c) for c in children(f)), default=0)


def size(f: LtlFormula) -> int:
    return 1 + sum(size(c) for c in children(f))


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------


def parse_ltl(source: str, file: str = "<ltl>") -> LtlFormula:
    """Parse a formula. Precedence from loosest: ``<->``, ``->`` (right
    associative), ``||``, ``&&``, ``U``/``R`` (right associative), then the
    unary operators ``! G F X``."""
    tokens, errors = tokenize(source, file)
    if errors:
        raise errors[0]
    stream = TokenStream(tokens)
    formula = _parse_iff(stream)
    if not stream.at_end():
        raise stream.error("expected end of formula")
    return formula


def parse_ltl_tokens(stream: TokenStream) -> LtlFormula:
    return _parse_iff(stream)


def _parse_iff(s: TokenStream) -> LtlFormula:
    left = _parse_implies(s)
    while s.accept("<->"):
        left = Iff(left, _parse_implies(s))
    return left


def _parse_implies(s: TokenStream) -> LtlFormula:
    left = _parse_or(s)
    if s.accept("->"):
        return Implies(left, _parse_implies(s))
    return left


def _parse_or(s: TokenStream) -> LtlFormula:
    left = _parse_and(s)
    while s.accept("||"):
        left = LOr(left, _parse_and(s))
    return left


def _parse_and(s: TokenStream) -> LtlFormula:
    left = _parse_temporal(s)
    while s.accept("&&"):
        left = LAnd(left, _parse_temporal(s))
    return left


def _parse_temporal(s: TokenStream) -> LtlFormula:
    left = _parse_unary(s)
    tok = s.current
    if tok.kind == "IDENT" and tok.value in _BINARY_TEMPORAL:
        s.advance()
        return _BINARY_TEMPORAL[tok.value](left, _parse_temporal(s))
    return left


def _parse_unary(s: TokenStream) -> LtlFormula:
    tok = s.current
    if s.accept("!"):
        return LNot(_parse_unary(s))
    if tok.kind == "IDENT" and tok.value in _UNARY and not s.peek().is_punct("==", "!="):
        s.advance()
        return _UNARY[tok.value](_parse_unary(s))
    return _parse_primary(s)


def _parse_primary(s: TokenStream) -> LtlFormula:
    tok = s.current
    if s.accept("("):
        inner = _parse_iff(s)
        s.expect(")")
        return inner
    if tok.kind != "IDENT":
        raise s.error("expected proposition", ["proposition", "("])
    if tok.value in ("true", "false") and not s.peek().is_punct("==", "!="):
        s.advance()
        return LConst(tok.value == "true")
    s.advance()
    op = s.accept("==", "!=")
    if op is None:
        raise s.error("expected '==' or '!='", ["==", "!="])
    value = s.current
    if value.kind not in ("IDENT", "NUMBER"):
        raise s.error("expected value label", ["value label"])
    s.advance()
    return Prop(Atom(tok.value, value.value, op.value == "!="))


# --------------------------------------------------------------------------
# Printing
# --------------------------------------------------------------------------

_LEVEL = {Iff: 1, Implies: 2, LOr: 3, LAnd: 4, Until: 5, Release: 5,
          LNot: 6, Next: 6, Globally: 6, Finally: 6, Prop: 7, LConst: 7}
_SYMBOL = {Iff: "<->", Implies: "->", LOr: "||", LAnd: "&&", Until: "U", Release: "R"}
_UNARY_SYMBOL = {LNot: "!", Next: "X ", Globally: "G ", Finally: "F "}


def render_ltl(f: LtlFormula) -> str:
    def sub(child: LtlFormula, minimum: int) -> str:
        text = render_ltl(child)
        return f"({text})" if _LEVEL[type(child)] < minimum else text

    match f:
        case Prop(Atom(var, value, negated)):
            return f"{var} {'!=' if negated else '=='} {value}"
        case LConst(value):
            return "true" if value else "false"
        case LNot(a) | Next(a) | Globally(a) | Finally(a):
            sym = _UNARY_SYMBOL[type(f)]
            if isinstance(a, Prop):
                return f"{sym}({render_ltl(a)})"
            return sym + sub(a, 6)
        case Implies(a, b) | Until(a, b) | Release(a, b):
            level = _LEVEL[type(f)]
            return f"{sub(a, level + 1)} {_SYMBOL[type(f)]} {sub(b, level)}"
        case Iff(a, b) | LOr(a, b) | LAnd(a, b):
            level = _LEVEL[type(f)]
            return f"{sub(a, level)} {_SYMBOL[type(f)]} {sub(b, level + 1)}"
    raise TypeError(f"not an LTL formula: {f!r}")


# --------------------------------------------------------------------------
# Conversions
# --------------------------------------------------------------------------


def from_bool(expr: BoolExpr) -> LtlFormula:
    match expr:
        case Atom():
            return Prop(expr)
        case Const(value):
            return LConst(value)
        case Not(operand):
            return LNot(from_bool(operand))
        case And(operands):
            out = from_bool(operands[0])
            for op in operands[1:]:
                out = LAnd(out, from_bool(op))
            return out
        case Or(operands):
            out = from_bool(operands[0])
            for op in operands[1:]:
                out = LOr(out, from_bool(op))
            return out
    raise TypeError(f"not a Boolean expression: {expr!r}")


def is_propositional(f: LtlFormula) -> bool:
    if isinstance(f, (Next, Globally, Finally, Until, Release)):
        return False
    return all(is_propositional(c) for c in children(f))


def to_bool(f: LtlFormula) -> BoolExpr:
    """Convert a temporal-operator-free formula into a Boolean expression."""
    match f:
        case Prop(atom):
            return atom
        case LConst(value):
            return Const(value)
        case LNot(a):
            return Not(to_bool(a))
        case LAnd(a, b):
            return conjunction([to_bool(a), to_bool(b)])
        case LOr(a, b):
            return disjunction([to_bool(a), to_bool(b)])
        case Implies(a, b):
            return Or((Not(to_bool(a)), to_bool(b)))
        case Iff(a, b):
            x, y = to_bool(a), to_bool(b)
            return Or((And((x, y)), And((Not(x), Not(y)))))
    raise ValueError("formula has temporal operators")


def invariant_body(f: LtlFormula):
    """Return the predicate ``p`` when ``f`` is ``G p`` with propositional ``p``."""
    if isinstance(f, Globally) and is_propositional(f.operand):
        return f.operand
    return None


def negate_atom(atom: Atom) -> Atom:
    return Atom(atom.var, atom.value, not atom.negated)


def nnf(f: LtlFormula, negate: bool = False) -> LtlFormula:
    """Negation normal form over literals, true/false, &&, ||, X, U and R."""
    match f:
        case Prop(atom):
            return Prop(negate_atom(atom)) if negate else f
        case LConst(value):
            return LConst(value != negate)
        case LNot(a):
            return nnf(a, not negate)
        case LAnd(a, b):
            ctor = LOr if negate else LAnd
            return ctor(nnf(a, negate), nnf(b, negate))
        case LOr(a, b):
            ctor = LAnd if negate else LOr
            return ctor(nnf(a, negate), nnf(b, negate))
        case Implies(a, b):
            return nnf(LOr(LNot(a), b), negate)
        case Iff(a, b):
            return nnf(LOr(LAnd(a, b), LAnd(LNot(a), LNot(b))), negate)
        case Next(a):
            return Next(nnf(a, negate))
        case Globally(a):
            return nnf(Release(LFALSE, a), negate)
        case Finally(a):
            return nnf(Until(LTRUE, a), negate)
        case Until(a, b):
            ctor = Release if negate else Until
            return ctor(nnf(a, negate), nnf(b, negate))
        case Release(a, b):
            ctor = Until if negate else Release
            return ctor(nnf(a, negate), nnf(b, negate))
    raise TypeError(f"not an LTL formula: {f!r}")


# --------------------------------------------------------------------------
# Lasso semantics
# --------------------------------------------------------------------------

Letter = Mapping[str, str]


def holds_atom(atom: Atom, letter: Letter) -> bool:
    return (letter.get(atom.var) == atom.value) != atom.negated


def evaluate_lasso(f: LtlFormula, word: Sequence[Letter], loop: int) -> bool:
    """Truth of ``f`` at position 0 of the infinite word
    ``word[:loop] (word[loop:])^omega``, computed by fixpoints per subformula."""
    n = len(word)
    if n == 0 or not 0 <= loop < n:
        raise ValueError("lasso needs a non-empty word and a loop index inside it")
    succ = [i + 1 for i in range(n - 1)] + [loop]

    def fixpoint(step, init: bool) -> list[bool]:
        vals = [init] * n
        changed = True
        while changed:
            changed = False
            for i in reversed(range(n)):
                v = step(i, vals)
                if v != vals[i]:
                    vals[i] = v
                    changed = True
        return vals

    def ev(g: LtlFormula) -> list[bool]:
        match g:
            case Prop(atom):
                return [holds_atom(atom, letter) for letter in word]
            case LConst(value):
                return [value] * n
            case LNot(a):
                return [not x for x in ev(a)]
            case LAnd(a, b):
                return [x and y for x, y in zip(ev(a), ev(b))]
            case LOr(a, b):
                return [x or y for x, y in zip(ev(a), ev(b))]
            case Implies(a, b):
                return [(not x) or y for x, y in zip(ev(a), ev(b))]
            case Iff(a, b):
                return [x == y for x, y in zip(ev(a), ev(b))]
            case Next(a):
                va = ev(a)
                return [va[succ[i]] for i in range(n)]
            case Globally(a):
                va = ev(a)
                return fixpoint(lambda i, v: va[i] and v[succ[i]], True)
            case Finally(a):
                va = ev(a)
                return fixpoint(lambda i, v: va[i] or v[succ[i]], False)
            case Until(a, b):
                va, vb = ev(a), ev(b)
                return fixpoint(lambda i, v: vb[i] or (va[i] and v[succ[i]]), False)
            case Release(a, b):
                va, vb = ev(a), ev(b)
                return fixpoint(lambda i, v: vb[i] and (va[i] or v[succ[i]]), True)
        raise TypeError(f"not an LTL formula: {g!r}")

    return ev(f)[0]


__all__ = [
    "LtlFormula", "Prop", "LConst", "LNot", "LAnd", "LOr", "Implies", "Iff", "Next",
    "Globally", "Finally", "Until", "Release", "LTRUE", "LFALSE", "ParseError",
    "parse_ltl", "render_ltl", "nnf", "evaluate_lasso", "propositions", "from_bool",
    "to_bool", "invariant_body", "is_propositional", "holds_atom",
]
