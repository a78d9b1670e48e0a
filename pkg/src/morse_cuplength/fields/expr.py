"""Tokenizer, recursive-descent parser and evaluator for scalar field expressions.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ('^' integer)?
    atom   := number | ident | '(' expr ')' | ('sin'|'cos'|'exp') '(' expr ')' | '-' atom

Identifiers are the coordinates ``x0, x1, ...`` and the constant ``pi``.
Note that unary minus binds tighter than ``^`` in this grammar, so ``-x0^2``
means ``(-x0)^2``; write ``0 - x0^2`` or ``-(x0^2)`` for the other reading.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import dual
from .dual import Dual2, DomainError

FUNCTIONS = ("sin", "cos", "exp")


class ExpressionError(ValueError):
    """Base class for parse errors; ``position`` is a character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


class ArityError(ExpressionError):
    pass


# AST ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


def max_variable(node: Node) -> int:
    """Largest coordinate index referenced, or -1 for constant expressions."""
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Num):
        return -1
    if isinstance(node, BinOp):
        return max(max_variable(node.left), max_variable(node.right))
    if isinstance(node, Pow):
        return max_variable(node.base)
    return max_variable(node.arg)


def to_source(node: Node) -> str:
    """Fully parenthesized source text that reparses to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"-({to_source(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Pow):
        return f"({to_source(node.base)})^{node.exponent}"
    return f"{node.func}({to_source(node.arg)})"


# tokenizer ---------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {src[pos]!r}", pos)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def _expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "end":
            found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            raise ExpressionSyntaxError(f"expected {text!r}, found {found}", self.tok.pos)
        return self._advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        node = self.atom()
        if self.tok.text == "^" and self.tok.kind == "op":
            self._advance()
            t = self.tok
            if t.kind != "number" or not t.text.isdigit():
                raise ExpressionSyntaxError("exponent must be a nonnegative integer", t.pos)
            self._advance()
            node = Pow(node, int(t.text))
            if self.tok.text == "^" and self.tok.kind == "op":
                raise ExpressionSyntaxError("chained '^' needs parentheses", self.tok.pos)
        return node

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "number":
            self._advance()
            return Num(float(t.text))
        if t.kind == "op" and t.text == "-":
            self._advance()
            return Neg(self.atom())
        if t.kind == "op" and t.text == "(":
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        if t.kind == "ident":
            self._advance()
            if t.text in FUNCTIONS:
                return self._call(t)
            if t.text == "pi":
                return Num(float(np.pi))
            m = re.fullmatch(r"x(\d+)", t.text)
            if m is None:
                raise UnknownIdentifierError(f"unknown identifier {t.text!r}", t.pos)
            return Var(int(m.group(1)))
        if t.kind == "end":
            raise ExpressionSyntaxError("unexpected end of input", t.pos)
        raise ExpressionSyntaxError(f"unexpected {t.text!r}", t.pos)

    def _call(self, name: _Tok) -> Node:
        if self.tok.text != "(":
            raise ExpressionSyntaxError(f"{name.text} requires '('", self.tok.pos)
        self._advance()
        if self.tok.text == ")":
            raise ArityError(f"{name.text} takes exactly one argument, got 0", self.tok.pos)
        arg = self.expr()
        if self.tok.text == ",":
            raise ArityError(f"{name.text} takes exactly one argument", self.tok.pos)
        self._expect(")")
        return Call(name.text, arg)


def parse(src: str) -> Node:
    """Parse ``src`` into an expression tree."""
    if not src or not src.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(src).parse()


# evaluation --------------------------------------------------------------------

Value = Union[np.ndarray, Dual2]


def _safe_div(a, b):
    if isinstance(b, Dual2):
        return b.__rtruediv__(a) if not isinstance(a, Dual2) else a / b
    if isinstance(a, Dual2):
        return a / b
    b = np.asarray(b, dtype=float)
    if np.any(b == 0.0):
        raise DomainError("division by zero")
    return a / b


_UNARY = {"sin": dual.sin, "cos": dual.cos, "exp": dual.exp}


def compile_node(node: Node) -> Callable[[list], Value]:
    """Turn a tree into a closure over a list of per-coordinate inputs.

    The inputs may be float arrays (value only) or :class:`Dual2` numbers.
    """
    if isinstance(node, Num):
        c = float(node.value)
        return lambda env: c * np.ones_like(_values(env[0])) if env else np.float64(c)
    if isinstance(node, Var):
        i = node.index
        return lambda env: env[i]
    if isinstance(node, Neg):
        f = compile_node(node.arg)
        return lambda env: -f(env)
    if isinstance(node, Pow):
        f, n = compile_node(node.base), node.exponent
        return lambda env: _power(f(env), n)
    if isinstance(node, Call):
        f, u = compile_node(node.arg), _UNARY[node.func]
        return lambda env: u(f(env))
    fl, fr = compile_node(node.left), compile_node(node.right)
    if node.op == "+":
        return lambda env: _add(fl(env), fr(env))
    if node.op == "-":
        return lambda env: _sub(fl(env), fr(env))
    if node.op == "*":
        return lambda env: _mul(fl(env), fr(env))
    return lambda env: _safe_div(fl(env), fr(env))


def _values(x):
    return x.v if isinstance(x, Dual2) else x


# numpy scalars on the left would swallow Dual2 operands via __array_priority__
# rules, so keep the Dual2 on the left when mixing.
def _add(a, b):
    return b + a if isinstance(b, Dual2) and not isinstance(a, Dual2) else a + b


def _sub(a, b):
    return (-b) + a if isinstance(b, Dual2) and not isinstance(a, Dual2) else a - b


def _mul(a, b):
    return b * a if isinstance(b, Dual2) and not isinstance(a, Dual2) else a * b


def _power(a, n: int):
    if isinstance(a, Dual2):
        return a ** n
    return np.asarray(a, dtype=float) ** n
