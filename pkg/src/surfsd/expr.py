"""Tiny arithmetic expression language for inline analytic fields.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | "x" | "y" | "z" | "pi" | FUNC "(" expr ")" | "(" expr ")"
    FUNC   := sin | cos | exp | sqrt

``^`` is right-associative and binds tighter than unary minus on its left
(``-x^2 == -(x^2)``).
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ConfigError
from .geometry import AnalyticField

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(.))")
FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
VARS = {"x": 0, "y": 1, "z": 2}


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        num, name, op = m.groups()
        if num is not None:
            tokens.append(("num", float(num)))
        elif name is not None:
            tokens.append(("name", name))
        elif op.strip():
            tokens.append(("op", op))
        pos = m.end()
    tokens.append(("end", None))
    return tokens


class _Parser:
    def __init__(self, text, key):
        self.text = text
        self.key = key
        self.tokens = _tokenize(text)
        self.i = 0

    def fail(self, msg):
        raise ConfigError(self.key, f"{msg} in expression {self.text!r}")

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        tok = self.take()
        if tok != ("op", op):
            self.fail(f"expected {op!r}")

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            node = (lambda a, b: lambda p: a(p) + b(p))(node, rhs) if op == "+" else \
                (lambda a, b: lambda p: a(p) - b(p))(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.unary()
            node = (lambda a, b: lambda p: a(p) * b(p))(node, rhs) if op == "*" else \
                (lambda a, b: lambda p: a(p) / b(p))(node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            inner = self.unary()
            return lambda p: -inner(p)
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            exponent = self.unary()
            return lambda p: base(p) ** exponent(p)
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return lambda p: np.full(len(p), val)
        if kind == "name":
            if val in VARS:
                k = VARS[val]
                return lambda p: p[:, k]
            if val == "pi":
                return lambda p: np.full(len(p), np.pi)
            if val in FUNCS:
                fn = FUNCS[val]
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return lambda p: fn(arg(p))
            self.fail(f"unknown identifier {val!r}")
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        self.fail("unexpected end" if kind == "end" else f"unexpected token {val!r}")


def parse_scalar(text: str, key: str = "expression"):
    """Compile ``text`` into a function of a point stack ``(N, 3)``."""
    return _Parser(str(text), key).parse()


def scalar_field(text: str, key: str = "expression") -> AnalyticField:
    fn = parse_scalar(text, key)
    return AnalyticField(fn, name=str(text))


def vector_field(texts, key: str = "expression", tangential: bool = True) -> AnalyticField:
    if len(texts) != 3:
        raise ConfigError(key, "vector fields need three component expressions")
    comps = [parse_scalar(t, key) for t in texts]
    return AnalyticField(lambda p: np.column_stack([c(p) for c in comps]), vector=True,
                         tangential=tangential, name="(" + ", ".join(texts) + ")")
