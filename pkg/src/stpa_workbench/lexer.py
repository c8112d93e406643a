"""Tokenizer shared by the project DSL, the guard grammar and the LTL parser."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Sequence


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int = 1

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


class ParseError(Exception):
    def __init__(self, span: SourceSpan, message: str, expected: Optional[Sequence[str]] = None):
        super().__init__(f"{span}: {message}")
        self.span = span
        self.message = message
        self.expected = tuple(expected) if expected else None


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT NUMBER STRING LABEL PUNCT EOF
    value: str
    span: SourceSpan

    def is_punct(self, *values: str) -> bool:
        return self.kind == "PUNCT" and self.value in values

    def is_word(self, *values: str) -> bool:
        return self.kind == "IDENT" and self.value in values


HYPHENATED_WORDS = frozenset({"hazard-rule"})

_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*(?:-[A-Za-z_][A-Za-z0-9_.]*)*")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")
_PUNCT = ("<->", ":=", "->", "==", "!=", "&&", "||", "{", "}", "[", "]", "(", ")",
          ",", ":", "!", "=", "/")
_STRING = re.compile(r'"(?:[^"\\\n]|\\.)*"')


def tokenize(source: str, file: str = "<string>") -> tuple[list[Token], list[ParseError]]:
    """Split ``source`` into tokens; lexical errors are collected, not raised,
    and the offending characters skipped."""
    tokens: list[Token] = []
    errors: list[ParseError] = []
    line, line_start, pos, n = 1, 0, 0, len(source)

    def span(start: int, length: int) -> SourceSpan:
        return SourceSpan(file, line, start - line_start + 1, max(1, length))

    while pos < n:
        c = source[pos]
        if c == "\n":
            line += 1
            pos += 1
            line_start = pos
            continue
        if c in " \t\r\f":
            pos += 1
            continue
        if c == "#":
            while pos < n and source[pos] != "\n":
                pos += 1
            continue
        if c == '"':
            m = _STRING.match(source, pos)
            if m is None:
                end = source.find("\n", pos)
                end = n if end < 0 else end
                errors.append(ParseError(span(pos, end - pos), "unterminated string literal"))
                pos = end
                continue
            text = m.group()
            try:
                value = json.loads(text)
            except ValueError:
                errors.append(ParseError(span(pos, len(text)), "invalid escape in string literal"))
                value = text[1:-1]
            tokens.append(Token("STRING", value, span(pos, len(text))))
            pos = m.end()
            continue
        if c == "@":
            m = _WORD.match(source, pos + 1)
            if m is None or "-" in m.group():
                errors.append(ParseError(span(pos, 1), "expected requirement id after '@'"))
                pos += 1
                continue
            tokens.append(Token("LABEL", m.group(), span(pos, m.end() - pos)))
            pos = m.end()
            continue
        m = _WORD.match(source, pos)
        if m is not None:
            word = m.group()
            if "-" in word and word not in HYPHENATED_WORDS:
                # "a-b" is not an identifier; keep the leading part only
                word = word.split("-", 1)[0]
            tokens.append(Token("IDENT", word, span(pos, len(word))))
            pos += len(word)
            continue
        for p in _PUNCT:
            if source.startswith(p, pos):
                tokens.append(Token("PUNCT", p, span(pos, len(p))))
                pos += len(p)
                break
        else:
            m = _NUMBER.match(source, pos)
            if m is not None:
                tokens.append(Token("NUMBER", m.group(), span(pos, len(m.group()))))
                pos = m.end()
                continue
            errors.append(ParseError(span(pos, 1), f"unexpected character {c!r}"))
            pos += 1
            continue

    tokens.append(Token("EOF", "", _eof_span(source, file)))
    return tokens, errors


def _eof_span(source: str, file: str) -> SourceSpan:
    if not source:
        return SourceSpan(file, 1, 1, 1)
    last = len(source) - 1
    line = source.count("\n", 0, last) + 1
    col = last - (source.rfind("\n", 0, last) + 1) + 1
    return SourceSpan(file, line, col, 1)


class TokenStream:
    """Cursor over a token list with the helpers recursive-descent parsers need."""

    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def at_end(self) -> bool:
        return self.current.kind == "EOF"

    def accept(self, *puncts: str) -> Optional[Token]:
        if self.current.is_punct(*puncts):
            return self.advance()
        return None

    def expect(self, punct: str) -> Token:
        if not self.current.is_punct(punct):
            raise self.error(f"expected '{punct}'", [punct])
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.current.kind != "IDENT":
            raise self.error(f"expected {what}", [what])
        return self.advance()

    def expect_word(self, word: str) -> Token:
        if not self.current.is_word(word):
            raise self.error(f"expected '{word}'", [word])
        return self.advance()

    def error(self, message: str, expected: Optional[Sequence[str]] = None) -> ParseError:
        tok = self.current
        found = "end of input" if tok.kind == "EOF" else repr(tok.value)
        return ParseError(tok.span, f"{message}, found {found}", expected)
