"""Tiny arithmetic expression language for manifest-declared objectives.

Grammar: numeric literals, named variables, + - * / ** and parentheses.
Expressions are parsed once and evaluated against a variable environment,
with no access to anything else — lab manifests are instructor-authored
but still never reach eval().
"""
from __future__ import annotations

import math
import re

from .errors import ExpressionError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[+\-*/()]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise ExpressionError(f"unexpected character {text[pos:].strip()[0]!r} in expression")
        pos = m.end()
        if m.group("num") is not None:
            tokens.append(("num", m.group("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("op", m.group("op")))
    return tokens


class Expression:
    """Compiled expression; evaluate() binds variables by name."""

    def __init__(self, text: str):
        self.text = text
        self._tokens = _tokenize(text)
        self._pos = 0
        if not self._tokens:
            raise ExpressionError("empty expression")
        self._ast = self._parse_sum()
        if self._pos != len(self._tokens):
            raise ExpressionError(f"trailing tokens in expression {text!r}")
        self.variables = frozenset(self._free_vars(self._ast))

    # recursive descent: sum -> term -> unary -> power -> atom
    def _peek(self):
        return self._tokens[self._pos] if self._pos < len(self._tokens) else (None, None)

    def _take(self):
        tok = self._peek()
        self._pos += 1
        return tok

    def _parse_sum(self):
        node = self._parse_term()
        while self._peek() == ("op", "+") or self._peek() == ("op", "-"):
            _, op = self._take()
            node = (op, node, self._parse_term())
        return node

    def _parse_term(self):
        node = self._parse_unary()
        while self._peek() == ("op", "*") or self._peek() == ("op", "/"):
            _, op = self._take()
            node = (op, node, self._parse_unary())
        return node

    def _parse_unary(self):
        if self._peek() == ("op", "-"):
            self._take()
            return ("neg", self._parse_unary())
        if self._peek() == ("op", "+"):
            self._take()
            return self._parse_unary()
        return self._parse_power()

    def _parse_power(self):
        base = self._parse_atom()
        if self._peek() == ("op", "**"):
            self._take()
            # right-associative; exponent may carry a sign
            return ("**", base, self._parse_unary())
        return base

    def _parse_atom(self):
        kind, val = self._take()
        if kind == "num":
            return ("num", float(val))
        if kind == "name":
            return ("var", val)
        if (kind, val) == ("op", "("):
            node = self._parse_sum()
            if self._take() != ("op", ")"):
                raise ExpressionError("unbalanced parenthesis")
            return node
        raise ExpressionError(f"unexpected token {val!r}")

    def _free_vars(self, node):
        tag = node[0]
        if tag == "num":
            return set()
        if tag == "var":
            return {node[1]}
        if tag == "neg":
            return self._free_vars(node[1])
        return self._free_vars(node[1]) | self._free_vars(node[2])

    def evaluate(self, env: dict[str, float]) -> float:
        try:
            out = self._eval(self._ast, env)
        except ZeroDivisionError:
            raise ExpressionError(f"division by zero in {self.text!r}") from None
        except OverflowError:
            raise ExpressionError(f"overflow evaluating {self.text!r}") from None
        if not math.isfinite(out):
            raise ExpressionError(f"non-finite value from {self.text!r}")
        return out

    def _eval(self, node, env):
        tag = node[0]
        if tag == "num":
            return node[1]
        if tag == "var":
            name = node[1]
            if name not in env:
                raise ExpressionError(f"unknown variable {name!r}")
            v = env[name]
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ExpressionError(f"variable {name!r} is not numeric")
            return float(v)
        if tag == "neg":
            return -self._eval(node[1], env)
        a = self._eval(node[1], env)
        b = self._eval(node[2], env)
        if tag == "+":
            return a + b
        if tag == "-":
            return a - b
        if tag == "*":
            return a * b
        if tag == "/":
            return a / b
        return a**b


def compile_expression(text: str) -> Expression:
    if not isinstance(text, str):
        raise ExpressionError("expression must be a string")
    return Expression(text)
