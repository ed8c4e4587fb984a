"""Arithmetic expressions for expert-declared node models.

Grammar (standard precedence; ``^`` is right-associative and binds
tighter than unary minus, so ``-2^2 == -4``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | IDENT | '(' expr ')'

Identifiers may be dotted (metric-group names such as ``sys.lat``).
Evaluation is pure and works elementwise over numpy arrays; division by
zero follows IEEE semantics and yields infinities, which downstream
candidate scoring discards.
"""

from __future__ import annotations

import re

import numpy as np

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z0-9_]+)*)"
    r"|(?P<op>[-+*/^()]))"
)


class ExprSyntaxError(ValueError):
    """Syntax error with the offending position in the source text."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip():
                raise ExprSyntaxError(f"unexpected character {text[pos:].strip()[0]!r}", pos)
            break
        for kind in ("num", "ident", "op"):
            val = m.group(kind)
            if val is not None:
                tokens.append((kind, val, m.start(kind)))
                break
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def advance(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op: str):
        tok = self.peek()
        if tok is None or tok[0] != "op" or tok[1] != op:
            pos = tok[2] if tok else len(self.text)
            raise ExprSyntaxError(f"expected {op!r}", pos)
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ExprSyntaxError(f"unexpected trailing input {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while (tok := self.peek()) and tok[0] == "op" and tok[1] in "+-":
            self.advance()
            node = ("bin", tok[1], node, self.term())
        return node

    def term(self):
        node = self.unary()
        while (tok := self.peek()) and tok[0] == "op" and tok[1] in "*/":
            self.advance()
            node = ("bin", tok[1], node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "-":
            self.advance()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "^":
            self.advance()
            # right-associative; exponent may itself carry a unary minus
            node = ("bin", "^", node, self.unary())
        return node

    def atom(self):
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of expression", len(self.text))
        kind, val, pos = tok
        if kind == "num":
            self.advance()
            return ("num", float(val))
        if kind == "ident":
            self.advance()
            return ("var", val)
        if kind == "op" and val == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"unexpected token {val!r}", pos)


def parse(text: str):
    """Parse ``text`` into an AST of nested tuples."""
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text).parse()


def identifiers(ast) -> list[str]:
    """Identifiers in first-occurrence order."""
    seen: list[str] = []

    def walk(node):
        tag = node[0]
        if tag == "var" and node[1] not in seen:
            seen.append(node[1])
        elif tag == "neg":
            walk(node[1])
        elif tag == "bin":
            walk(node[2])
            walk(node[3])

    walk(ast)
    return seen


def evaluate(ast, env: dict):
    """Evaluate an AST against scalar or array-valued identifiers."""
    tag = ast[0]
    if tag == "num":
        return ast[1]
    if tag == "var":
        try:
            return env[ast[1]]
        except KeyError:
            raise KeyError(f"unknown identifier {ast[1]!r}") from None
    if tag == "neg":
        return -evaluate(ast[1], env)
    _, op, a, b = ast
    x, y = evaluate(a, env), evaluate(b, env)
    with np.errstate(divide="ignore", invalid="ignore"):
        if op == "+":
            return x + y
        if op == "-":
            return x - y
        if op == "*":
            return x * y
        if op == "/":
            return np.divide(x, y)
        return np.power(x, y)
