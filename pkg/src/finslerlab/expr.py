"""A small expression language for scalar functions of (x, y).

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right-associative
    primary := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are ``x1..xn`` and ``y1..yn`` (bounded by the declared dimension)
plus any extra symbols the caller allows, e.g. ``Lt`` and ``beta`` for
the function f of a metric change.  The functions are ``sqrt``, ``exp``
and ``ln``.  Absolute value and conditionals are deliberately absent so
every expression stays jet-differentiable on its domain.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import DomainError, ParseError
from .jets import Jet, JetConfig, lift_variable

FUNCTIONS = {"sqrt": jets.sqrt, "exp": jets.exp, "ln": jets.log}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)
_COORD = re.compile(r"^([xy])([1-9][0-9]*)$")


class Expr:
    """Base class of immutable AST nodes."""

    __slots__ = ()

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children()), default=0)

    def children(self):
        return ()

    def names(self):
        out = set()
        for c in self.children():
            out |= c.names()
        return out


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def evaluate(self, env):
        return self.value


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def evaluate(self, env):
        return env[self.name]

    def names(self):
        return {self.name}


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def children(self):
        return (self.operand,)

    def evaluate(self, env):
        return -self.operand.evaluate(env)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if not isinstance(b, Jet) and b == 0:
                raise DomainError("division by zero")
            return a / b
        return _power(a, b)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def children(self):
        return (self.arg,)

    def evaluate(self, env):
        return FUNCTIONS[self.func](self.arg.evaluate(env))


def _power(a, b):
    if isinstance(a, Jet) or isinstance(b, Jet):
        return a**b
    try:
        return math.pow(a, b)
    except (ValueError, OverflowError, ZeroDivisionError) as exc:
        raise DomainError(f"{a}^{b}: {exc}") from None


class _Parser:
    def __init__(self, source, allowed):
        self.source = source
        self.allowed = allowed
        self.tokens = []
        pos = 0
        while pos < len(source):
            if source[pos:].strip() == "":
                break
            m = _TOKEN.match(source, pos)
            if not m or m.end() == pos:
                bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
                raise ParseError(f"unexpected character {source[bad]!r}", bad)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.tokens.append(("end", "", len(source)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, val, off = self.take()
        if val != text or kind != "op":
            raise ParseError(f"expected {text!r}, found {val or 'end of input'!r}", off)

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {val!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val not in self.allowed:
                m = _COORD.match(val)
                if m:
                    raise ParseError(f"variable {val} exceeds the declared dimension", off)
                raise ParseError(f"unknown identifier {val!r}", off)
            return Var(val)
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected {val or 'end of input'!r}", off)


def allowed_names(dim: int, extra=()) -> frozenset:
    names = {f"x{i}" for i in range(1, dim + 1)} | {f"y{i}" for i in range(1, dim + 1)}
    return frozenset(names | set(extra))


def parse(source: str, dim: int, extra=()) -> Expr:
    """Parse ``source``; raises :class:`ParseError` with the byte offset."""
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    return _Parser(source, allowed_names(dim, extra)).parse()


def to_source(e: Expr) -> str:
    """Fully parenthesized source text that re-parses to an equivalent tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    return f"({to_source(e.left)} {e.op} {to_source(e.right)})"


def coordinate_env(x, y):
    env = {f"x{i + 1}": v for i, v in enumerate(x)}
    env.update({f"y{i + 1}": v for i, v in enumerate(y)})
    return env


def evaluate(e: Expr, x=(), y=(), **extra):
    """Evaluate over floats or jets; ``extra`` binds non-coordinate names."""
    env = coordinate_env(x, y)
    env.update(extra)
    return e.evaluate(env)


def eval_jet(e: Expr, x, y, config: JetConfig) -> Jet:
    """Jet of ``e`` with every x and y variable seeded at the given point."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xs = [lift_variable(f"x{i + 1}", v, config) for i, v in enumerate(x[: config.n_x])]
    xs += [float(v) for v in x[config.n_x :]]
    ys = [lift_variable(f"y{i + 1}", v, config) for i, v in enumerate(y)]
    out = evaluate(e, xs, ys)
    if not isinstance(out, Jet):
        out = jets.constant(float(out), config)
    return out


@dataclass(frozen=True)
class HomogeneityReport:
    passed: bool
    degree: float
    samples: int
    worst: float
    skipped: int = 0


def check_homogeneity(e, degree, samples=20, seed=0, dim=None, domain=None, tol=1e-9):
    """Sample ``|e(x, t y) - t^degree e(x, y)| <= tol (1 + |e(x, y)|)``.

    ``e`` may be an :class:`Expr` or a plain callable ``(x, y) -> float``.
    Points where evaluation fails or ``domain`` rejects are skipped.
    """
    if isinstance(e, Expr):
        if dim is None:
            idx = [int(n[1:]) for n in e.names() if _COORD.match(n)]
            dim = max(idx, default=1)
        func = lambda x, y: evaluate(e, x, y)  # noqa: E731
    else:
        func = e
        if dim is None:
            raise ValueError("dim is required for callables")
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = skipped = 0
    for _ in range(samples):
        x = rng.uniform(-1.0, 1.0, dim)
        y = rng.normal(size=dim)
        t = float(rng.uniform(0.25, 4.0))
        if domain is not None and not (domain(x, y) and domain(x, t * y)):
            skipped += 1
            continue
        try:
            v = float(func(x, y))
            vt = float(func(x, t * y))
        except (DomainError, ZeroDivisionError, OverflowError, ValueError):
            skipped += 1
            continue
        worst = max(worst, abs(vt - t**degree * v) / (1.0 + abs(v)))
        done += 1
    return HomogeneityReport(done > 0 and worst <= tol, degree, done, worst, skipped)
