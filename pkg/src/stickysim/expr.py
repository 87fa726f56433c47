"""Coefficient expressions: a small recursive-descent parser, printer and
symbolic differentiator.

Grammar (highest precedence last)::

    piecewise := expr ( '|' number ':' expr )*
    expr      := term ( ('+' | '-') term )*
    term      := unary ( ('*' | '/') unary )*
    unary     := '-' unary | power
    power     := primary ( '^' unary )?          # right associative
    primary   := number | 'x' | func '(' expr ')' | '(' expr ')'
    func      := exp | log | sqrt | sin | cos | abs

A piecewise block ``"x | 0: 3*x"`` means ``x`` for x < 0 and ``3*x`` from 0
on; every piece is right-continuous at its breakpoint.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ExpressionError

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "abs")

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    arg: "Node"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Node"
    pos: int = field(default=0, compare=False)


Node = Union[Num, Var, Neg, Bin, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, text: str, base: int = 0):
        self.text = text
        self.base = base
        self.tokens: list[tuple[str, str, int]] = []
        i = 0
        while i < len(text):
            if text[i:].strip() == "":
                break
            m = _TOKEN.match(text, i)
            if m is None or m.end() == i:
                j = i
                while j < len(text) and text[j].isspace():
                    j += 1
                raise ExpressionError(f"unexpected character {text[j]!r}", base + j, text)
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), base + start))
            i = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def end_pos(self) -> int:
        return self.base + len(self.text)

    def expect(self, value: str):
        tok = self.take()
        if tok is None or tok[1] != value:
            pos = self.end_pos() if tok is None else tok[2]
            found = "end of input" if tok is None else repr(tok[1])
            raise ExpressionError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Node:
        if not self.tokens:
            raise ExpressionError("empty expression", self.base, self.text)
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ExpressionError(f"unexpected token {tok[1]!r}", tok[2], self.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while (tok := self.peek()) is not None and tok[1] in "+-" and tok[0] == "op":
            self.take()
            node = Bin(tok[1], node, self.term(), tok[2])
        return node

    def term(self) -> Node:
        node = self.unary()
        while (tok := self.peek()) is not None and tok[1] in ("*", "/"):
            self.take()
            node = Bin(tok[1], node, self.unary(), tok[2])
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok is not None and tok[1] == "-":
            self.take()
            return Neg(self.unary(), tok[2])
        return self.power()

    def power(self) -> Node:
        node = self.primary()
        tok = self.peek()
        if tok is not None and tok[1] == "^":
            self.take()
            node = Bin("^", node, self.unary(), tok[2])
        return node

    def primary(self) -> Node:
        tok = self.take()
        if tok is None:
            raise ExpressionError("unexpected end of input", self.end_pos(), self.text)
        kind, value, pos = tok
        if kind == "num":
            return Num(float(value), pos)
        if kind == "name":
            if value == "x":
                return Var(pos)
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(value, arg, pos)
            raise ExpressionError(f"unknown identifier {value!r}", pos, self.text)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected token {value!r}", pos, self.text)


def _prec(node: Node) -> int:
    if isinstance(node, Bin):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def _fmt_num(v: float) -> str:
    text = repr(float(v))
    return text[:-2] if text.endswith(".0") else text


def to_text(node: Node) -> str:
    """Print ``node`` with the minimum parentheses needed to re-parse it."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Call):
        return f"{node.name}({to_text(node.arg)})"
    if isinstance(node, Neg):
        inner = to_text(node.arg)
        return f"-({inner})" if _prec(node.arg) < _PREC["neg"] else f"-{inner}"
    p = _PREC[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def has_var(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Num):
        return False
    if isinstance(node, (Neg, Call)):
        return has_var(node.arg)
    return has_var(node.left) or has_var(node.right)


_NP_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
}


def _check(result, node: Node, x, text):
    result = np.asarray(result, dtype=float)
    bad = ~np.isfinite(result)
    if bad.any():
        xs = np.broadcast_to(np.asarray(x, dtype=float), result.shape)
        where = float(xs[bad].flat[0]) if xs.size else float("nan")
        what = node.op if isinstance(node, Bin) else getattr(node, "name", "expression")
        raise ExpressionError(f"non-finite result of {what!r} at x={where:g}", node.pos, text)
    return result


def evaluate(node: Node, x, text: str | None = None):
    """Evaluate ``node`` at scalar or array ``x``; raises a located error on non-finite output."""
    with np.errstate(all="ignore"):
        if isinstance(node, Num):
            return np.full(np.shape(x), node.value, dtype=float)
        if isinstance(node, Var):
            return np.asarray(x, dtype=float).copy()
        if isinstance(node, Neg):
            return -evaluate(node.arg, x, text)
        if isinstance(node, Call):
            return _check(_NP_FUNCS[node.name](evaluate(node.arg, x, text)), node, x, text)
        a = evaluate(node.left, x, text)
        b = evaluate(node.right, x, text)
        if node.op == "+":
            out = a + b
        elif node.op == "-":
            out = a - b
        elif node.op == "*":
            out = a * b
        elif node.op == "/":
            out = a / b
        else:
            out = np.power(a, b)
        return _check(out, node, x, text)


def _const(v: float) -> Node:
    v = float(v) + 0.0
    return Num(v) if v >= 0 or v != v else Neg(Num(-v))


def _const_value(node: Node) -> float | None:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg) and isinstance(node.arg, Num):
        return -node.arg.value
    return None


def simplify(node: Node) -> Node:
    """Constant folding plus the usual 0/1 identities; never changes the value."""
    if isinstance(node, (Num, Var)):
        return node
    if isinstance(node, Neg):
        arg = simplify(node.arg)
        c = _const_value(arg)
        if c is not None:
            return _const(-c)
        if isinstance(arg, Neg):
            return arg.arg
        return Neg(arg)
    if isinstance(node, Call):
        arg = simplify(node.arg)
        c = _const_value(arg)
        if c is not None:
            with np.errstate(all="ignore"):
                v = float(_NP_FUNCS[node.name](c))
            if np.isfinite(v):
                return _const(v)
        return Call(node.name, arg)
    left, right = simplify(node.left), simplify(node.right)
    a, b = _const_value(left), _const_value(right)
    op = node.op
    if a is not None and b is not None:
        with np.errstate(all="ignore"):
            v = {"+": a + b, "-": a - b, "*": a * b}.get(op)
            if v is None:
                v = a / b if op == "/" else float(np.power(a, b))
        if np.isfinite(v):
            return _const(float(v))
    if op == "+":
        if a == 0:
            return right
        if b == 0:
            return left
    elif op == "-":
        if b == 0:
            return left
        if a == 0:
            return simplify(Neg(right))
    elif op == "*":
        if a == 0 or b == 0:
            return Num(0.0)
        if a == 1:
            return right
        if b == 1:
            return left
    elif op == "/":
        if a == 0 and b != 0:
            return Num(0.0)
        if b == 1:
            return left
    elif op == "^":
        if b == 1:
            return left
        if b == 0:
            return Num(1.0)
    return Bin(op, left, right)


def differentiate(node: Node) -> Node:
    """Symbolic d/dx, simplified."""
    return simplify(_d(node))


def _d(node: Node) -> Node:
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0)
    if isinstance(node, Neg):
        return Neg(_d(node.arg))
    if isinstance(node, Call):
        a, da = node.arg, _d(node.arg)
        outer = {
            "exp": lambda: Call("exp", a),
            "log": lambda: Bin("/", Num(1.0), a),
            "sqrt": lambda: Bin("/", Num(1.0), Bin("*", Num(2.0), Call("sqrt", a))),
            "sin": lambda: Call("cos", a),
            "cos": lambda: Neg(Call("sin", a)),
            "abs": lambda: Bin("/", a, Call("abs", a)),
        }[node.name]()
        return Bin("*", outer, da)
    a, b = node.left, node.right
    da, db = _d(a), _d(b)
    if node.op in "+-":
        return Bin(node.op, da, db)
    if node.op == "*":
        return Bin("+", Bin("*", da, b), Bin("*", a, db))
    if node.op == "/":
        return Bin("/", Bin("-", Bin("*", da, b), Bin("*", a, db)), Bin("^", b, Num(2.0)))
    if not has_var(b):
        return Bin("*", Bin("*", b, Bin("^", a, Bin("-", b, Num(1.0)))), da)
    return Bin(
        "*",
        Bin("^", a, b),
        Bin("+", Bin("*", db, Call("log", a)), Bin("/", Bin("*", b, da), a)),
    )


@dataclass(frozen=True)
class Expression:
    """Parsed, possibly piecewise, expression in the single variable ``x``.

    ``pieces[0]`` applies left of ``breakpoints[0]``, ``pieces[i]`` on
    ``[breakpoints[i-1], breakpoints[i])`` and the last piece to the right.
    """

    breakpoints: tuple[float, ...]
    pieces: tuple[Node, ...]
    text: str = field(default="", compare=False)

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if not self.breakpoints:
            return evaluate(self.pieces[0], x, self.text)
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right")
        out = np.empty(x.shape, dtype=float)
        for k, piece in enumerate(self.pieces):
            mask = idx == k
            if mask.any():
                out[mask] = evaluate(piece, x[mask], self.text)
        return out if out.ndim else float(out)

    def to_text(self) -> str:
        parts = [to_text(self.pieces[0])]
        for bp, piece in zip(self.breakpoints, self.pieces[1:]):
            parts.append(f"{_fmt_num(bp)}: {to_text(piece)}")
        return " | ".join(parts)

    def derivative(self) -> "Expression":
        return Expression(self.breakpoints, tuple(differentiate(p) for p in self.pieces))

    def simplified(self) -> "Expression":
        return Expression(self.breakpoints, tuple(simplify(p) for p in self.pieces))

    def is_constant(self, piece: int | None = None) -> bool:
        pieces = self.pieces if piece is None else (self.pieces[piece],)
        return not any(has_var(p) for p in pieces)

    def __str__(self) -> str:
        return self.to_text()


def parse_node(text: str, base: int = 0) -> Node:
    return _Parser(text, base).parse()


def parse_expression(text: str) -> Expression:
    """Parse a single or piecewise expression; errors carry byte offsets into ``text``."""
    chunks, starts, depth, start = [], [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "|" and depth == 0:
            chunks.append(text[start:i])
            starts.append(start)
            start = i + 1
    chunks.append(text[start:])
    starts.append(start)

    pieces = [parse_node(chunks[0], starts[0])]
    breakpoints: list[float] = []
    for chunk, base in zip(chunks[1:], starts[1:]):
        head, sep, body = chunk.partition(":")
        if not sep:
            raise ExpressionError("piecewise block needs 'breakpoint: expression'", base, text)
        try:
            bp = float(head)
        except ValueError:
            bp = float("nan")
        if not np.isfinite(bp):
            raise ExpressionError(f"bad breakpoint {head.strip()!r}", base, text)
        if breakpoints and bp <= breakpoints[-1]:
            raise ExpressionError("breakpoints must be strictly increasing", base, text)
        breakpoints.append(bp)
        pieces.append(parse_node(body, base + len(head) + 1))
    return Expression(tuple(breakpoints), tuple(pieces), text)
