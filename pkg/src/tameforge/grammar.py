"""Tokenizer and expression parser shared by the ring and polynomial grammars.

The parser is generic: an adapter supplies the meaning of integer literals,
names, and the arithmetic operators, so the same grammar serves both
ring-element literals and polynomials over a variable frame.
"""
from __future__ import annotations

from .errors import ParseError

_OPS = set("+-*/^()[],")


def tokenize(text: str) -> list[tuple[str, str]]:
    """Split ``text`` into (kind, value) tokens; kinds are INT, NAME, OP."""
    out = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            out.append(("INT", text[i:j]))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(("NAME", text[i:j]))
            i = j
            continue
        if c in _OPS:
            out.append(("OP", c))
            i += 1
            continue
        raise ParseError(f"unexpected character {c!r} at position {i}")
    return out


class TokenStream:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str]:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return ("END", "")

    def next(self) -> tuple[str, str]:
        tok = self.peek()
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, val = self.next()
        if kind != "OP" or val != op:
            raise ParseError(f"expected {op!r}, got {val!r}")

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)


class ExprAdapter:
    """Semantic actions for the expression grammar."""

    def from_int(self, value: int):
        raise NotImplementedError

    def from_name(self, name: str):
        raise NotImplementedError

    def add(self, a, b):
        raise NotImplementedError

    def sub(self, a, b):
        raise NotImplementedError

    def neg(self, a):
        raise NotImplementedError

    def mul(self, a, b):
        raise NotImplementedError

    def div(self, a, b):
        raise NotImplementedError

    def pow(self, a, k: int):
        raise NotImplementedError


def parse_expression(stream: TokenStream, adapter: ExprAdapter):
    """expr := term (('+'|'-') term)*"""
    value = _parse_term(stream, adapter)
    while True:
        kind, val = stream.peek()
        if kind == "OP" and val in "+-":
            stream.next()
            rhs = _parse_term(stream, adapter)
            value = adapter.add(value, rhs) if val == "+" else adapter.sub(value, rhs)
        else:
            return value


def _parse_term(stream, adapter):
    value = _parse_factor(stream, adapter)
    while True:
        kind, val = stream.peek()
        if kind == "OP" and val in "*/":
            stream.next()
            rhs = _parse_factor(stream, adapter)
            value = adapter.mul(value, rhs) if val == "*" else adapter.div(value, rhs)
        else:
            return value


def _parse_factor(stream, adapter):
    kind, val = stream.peek()
    if kind == "OP" and val == "-":
        stream.next()
        return adapter.neg(_parse_factor(stream, adapter))
    if kind == "OP" and val == "+":
        stream.next()
        return _parse_factor(stream, adapter)
    return _parse_power(stream, adapter)


def _parse_power(stream, adapter):
    base = _parse_atom(stream, adapter)
    kind, val = stream.peek()
    if kind == "OP" and val == "^":
        stream.next()
        k2, v2 = stream.next()
        if k2 != "INT":
            raise ParseError(f"exponent must be a nonnegative integer, got {v2!r}")
        return adapter.pow(base, int(v2))
    return base


def _parse_atom(stream, adapter):
    kind, val = stream.next()
    if kind == "INT":
        return adapter.from_int(int(val))
    if kind == "NAME":
        return adapter.from_name(val)
    if kind == "OP" and val == "(":
        value = parse_expression(stream, adapter)
        stream.expect_op(")")
        return value
    raise ParseError(f"unexpected token {val!r}")


def parse_full(text: str, adapter: ExprAdapter):
    stream = TokenStream(tokenize(text))
    value = parse_expression(stream, adapter)
    if not stream.at_end():
        raise ParseError(f"trailing input at token {stream.peek()[1]!r}")
    return value
