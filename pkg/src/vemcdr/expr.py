"""Arithmetic expressions in x and y for coefficient fields.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?          # right-associative
    atom    := NUMBER | NAME | NAME '(' args ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

VARIABLES = ("x", "y")
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1,
    "tanh": 1, "abs": 1, "min": 2, "max": 2,
}


class ParseError(ValueError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


class EvalError(ArithmeticError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (expression offset {offset})")


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float
    pos: int = 0


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = 0


@dataclass(frozen=True)
class Const:
    name: str
    pos: int = 0


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: int = 0


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    pos: int = 0


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    pos: int = 0


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(src: str) -> list[Token]:
    out = []
    i = 0
    while i < len(src):
        m = _TOKEN.match(src, i)
        if m is None:
            raise ParseError(f"unexpected character {src[i]!r}", _byte_offset(src, i))
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), _byte_offset(src, i)))
        i = m.end()
    out.append(Token("end", "", _byte_offset(src, len(src))))
    return out


def _byte_offset(src, i):
    return len(src[:i].encode("utf-8"))


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, src):
        self.toks = tokenize(src)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.tok
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.pos)
        return self.take()

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-"):
            t = self.take()
            node = BinOp(t.text, node, self.term(), t.pos)
        return node

    def term(self):
        node = self.unary()
        while self.tok.text in ("*", "/"):
            t = self.take()
            node = BinOp(t.text, node, self.unary(), t.pos)
        return node

    def unary(self):
        if self.tok.text == "-":
            t = self.take()
            return Neg(self.unary(), t.pos)
        if self.tok.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        node = self.atom()
        if self.tok.text == "^":
            t = self.take()
            node = BinOp("^", node, self.unary(), t.pos)
        return node

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.take()
            return Num(float(t.text), t.pos)
        if t.kind == "name":
            self.take()
            if self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise ParseError(f"unknown function {t.text!r}", t.pos)
                self.take()
                args = [self.expr()]
                while self.tok.text == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[t.text]:
                    raise ParseError(f"{t.text} takes {FUNCTIONS[t.text]} argument(s), "
                                     f"got {len(args)}", t.pos)
                return Call(t.text, tuple(args), t.pos)
            if t.text in VARIABLES:
                return Var(t.text, t.pos)
            if t.text in CONSTANTS:
                return Const(t.text, t.pos)
            if t.text in FUNCTIONS:
                raise ParseError(f"function {t.text!r} needs arguments", t.pos)
            raise ParseError(f"unknown name {t.text!r}", t.pos)
        if t.text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"unexpected {what}", t.pos)


def parse(src: str):
    """Parse ``src`` into an immutable AST; raises ParseError with a byte offset."""
    if not isinstance(src, str):
        raise TypeError("expression must be a string")
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# evaluation

def _check(bad, msg, node):
    if np.any(bad):
        raise EvalError(msg, node.pos)


def evaluate(node, x, y):
    """Evaluate elementwise on broadcastable arrays ``x``, ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    with np.errstate(all="ignore"):
        out = _ev(node, x, y)
    out = np.broadcast_to(out, shape).astype(float, copy=True)
    return out if shape else float(out)


def _ev(node, x, y):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return x if node.name == "x" else y
    if isinstance(node, Const):
        return np.float64(CONSTANTS[node.name])
    if isinstance(node, Neg):
        return -_ev(node.operand, x, y)
    if isinstance(node, BinOp):
        a = _ev(node.left, x, y)
        b = _ev(node.right, x, y)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            _check(b == 0, "division by zero", node)
            return a / b
        r = np.power(a, b)
        _check(~np.isfinite(r) & np.isfinite(a) & np.isfinite(b),
               "power outside its domain", node)
        return r
    if isinstance(node, Call):
        args = [_ev(a, x, y) for a in node.args]
        name = node.name
        if name == "log":
            _check(args[0] <= 0, "log of a non-positive value", node)
            return np.log(args[0])
        if name == "sqrt":
            _check(args[0] < 0, "sqrt of a negative value", node)
            return np.sqrt(args[0])
        if name == "min":
            return np.minimum(*args)
        if name == "max":
            return np.maximum(*args)
        r = getattr(np, "abs" if name == "abs" else name)(args[0])
        _check(~np.isfinite(r) & np.isfinite(args[0]), f"{name} overflow", node)
        return r
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    return 5


def pretty(node) -> str:
    """Minimal-parenthesis text that parses back to an equal AST."""
    if isinstance(node, Num):
        return repr(node.value) if node.value != int(node.value) or abs(node.value) >= 1e16 \
            else str(int(node.value))
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        inner = pretty(node.operand)
        if _prec(node.operand) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(pretty(a) for a in node.args)})"
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left, right = pretty(node.left), pretty(node.right)
        if node.op == "^":
            # left operand must be an atom; the right binds as a unary
            if _prec(node.left) <= p:
                left = f"({left})"
            if _prec(node.right) < _NEG_PREC:
                right = f"({right})"
        else:
            if _prec(node.left) < p:
                left = f"({left})"
            if _prec(node.right) <= p:
                right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def strip_positions(node):
    """Copy of ``node`` with all source positions zeroed (for structural equality)."""
    if isinstance(node, (Num, Var, Const)):
        return type(node)(node.value if isinstance(node, Num) else node.name)
    if isinstance(node, Neg):
        return Neg(strip_positions(node.operand))
    if isinstance(node, BinOp):
        return BinOp(node.op, strip_positions(node.left), strip_positions(node.right))
    if isinstance(node, Call):
        return Call(node.name, tuple(strip_positions(a) for a in node.args))
    raise TypeError(f"not an expression node: {node!r}")


class Expression:
    """Parsed expression usable as a vectorized field ``f(x, y)``."""

    def __init__(self, src: str):
        self.source = src
        self.ast = parse(src)
        self.constant = None
        if not _uses_variables(self.ast):
            self.constant = evaluate(self.ast, 0.0, 0.0)

    def __call__(self, x, y):
        return evaluate(self.ast, x, y)

    def __repr__(self):
        return f"Expression({self.source!r})"


def _uses_variables(node):
    if isinstance(node, Var):
        return True
    if isinstance(node, Neg):
        return _uses_variables(node.operand)
    if isinstance(node, BinOp):
        return _uses_variables(node.left) or _uses_variables(node.right)
    if isinstance(node, Call):
        return any(_uses_variables(a) for a in node.args)
    return False


def compile_field(src: str):
    """Field callable for ``src``; constants become constant fields."""
    e = Expression(src)
    if e.constant is not None:
        from .forms import constant_field
        return constant_field(e.constant)
    return e
