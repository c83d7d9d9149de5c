"""Closed-form coefficient expressions: parsing, printing and jet evaluation.

Grammar (highest precedence first)::

    primary  := number | symbol | 'pi' | func '(' args ')' | '(' expr ')'
    power    := primary [ '^' integer ]          # no chaining
    unary    := '-' unary | '+' unary | power
    term     := unary { ('*' | '/') unary }
    expr     := term { ('+' | '-') term }

Exponents are integer literals, optionally negated or parenthesized, which
keeps every expression free of branch cuts.  ``-x^2`` parses as ``-(x^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .jet import Jet, JetDomainError, atan2 as jet_atan2

DEFAULT_CHART = ("x", "y", "z")

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "sqrt": 1, "log": 1, "atan": 1, "atan2": 2}


class ExpressionError(ValueError):
    """Base class for expression parse failures."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message, offset, source):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset} in {source!r}")


class UnknownSymbolError(ExpressionError):
    def __init__(self, symbol, chart):
        self.symbol = symbol
        super().__init__(f"unknown symbol {symbol!r} (chart symbols: {', '.join(chart)})")


# --- AST ------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Symbol:
    name: str
    index: int


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Const | Symbol | Neg | BinOp | Pow | Call

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_number(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_source(node, parent_prec=0, right_side=False):
    """Pretty-print an AST with the minimal parentheses needed to re-parse."""
    if isinstance(node, Const):
        text = "pi" if node.value == math.pi else _fmt_number(node.value)
        if node.value < 0:
            return f"({text})" if parent_prec else text
        return text
    if isinstance(node, Symbol):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Pow):
        base = to_source(node.base, 4)
        exp = str(node.exponent) if node.exponent >= 0 else f"({node.exponent})"
        text = f"{base}^{exp}"
        return f"({text})" if parent_prec > 3 else text
    if isinstance(node, Neg):
        text = "-" + to_source(node.operand, 3)
        return f"({text})" if parent_prec > 2 or (parent_prec and right_side) else text
    prec = _PREC[node.op]
    text = f"{to_source(node.left, prec)} {node.op} {to_source(node.right, prec, True)}"
    if parent_prec > prec or (parent_prec == prec and right_side):
        return f"({text})"
    return text


# --- parser ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    stripped_end = len(src.rstrip())
    while pos < stripped_end:
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            offset = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {src[offset]!r}", offset, src)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, chart):
        self.src = src
        self.chart = tuple(chart)
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        if tok[0] == "end":
            message = "unexpected end of input"
        raise ExpressionSyntaxError(message, tok[2], self.src)

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] != "op":
            self.fail(f"expected {value!r}")
        return self.take()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return Neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            exponent = self.integer_exponent()
            if self.peek()[0] == "op" and self.peek()[1] == "^":
                self.fail("chained '^' is ambiguous; add parentheses")
            return Pow(base, exponent)
        return base

    def integer_exponent(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "(":
            self.take()
            value = self.integer_exponent()
            self.expect(")")
            return value
        sign = 1
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            sign = -1
            tok = self.peek()
        if tok[0] != "num" or not re.fullmatch(r"\d+", tok[1]):
            self.fail("exponent must be an integer literal")
        self.take()
        return sign * int(tok[1])

    def primary(self):
        tok = self.take()
        kind, text, offset = tok
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownSymbolError(text, self.chart)
                self.take()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    self.fail(f"{text} takes {FUNCTIONS[text]} argument(s)", tok)
                return Call(text, tuple(args))
            if text in self.chart:
                return Symbol(text, self.chart.index(text))
            if text == "pi":
                return Const(math.pi)
            raise UnknownSymbolError(text, self.chart)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        self.fail(f"unexpected token {text!r}" if kind != "end" else "", tok)


def parse_expression(src: str, chart: Sequence[str] = DEFAULT_CHART) -> Node:
    """Parse ``src`` into an immutable AST over the coordinate names in ``chart``."""
    if not isinstance(src, str) or not src.strip():
        raise ExpressionSyntaxError("empty expression", 0, src if isinstance(src, str) else "")
    if len(set(chart)) != len(chart) or not chart:
        raise ValueError(f"chart symbols must be distinct and nonempty: {chart!r}")
    return _Parser(src, chart).parse()


# --- evaluation --------------------------------------------------------------


def _check_array(cond, message, where, args):
    if np.any(cond):
        point = None
        if args:
            coords = list(np.broadcast_arrays(*args, cond))
            mask = coords.pop().ravel()
            point = np.stack([a.ravel() for a in coords], axis=-1)[mask][0]
        raise JetDomainError(message, point=point, subexpression=where)


def _compile(node, array_mode):
    """Turn an AST into a closure of the coordinate list.

    With ``array_mode`` the closure works on plain float arrays (value only),
    otherwise on :class:`Jet` inputs.
    """
    where = to_source(node)
    if isinstance(node, Const):
        v = node.value
        # constants stay plain floats; Jet arithmetic accepts them directly
        return lambda c: v
    if isinstance(node, Symbol):
        k = node.index
        return lambda c: c[k]
    if isinstance(node, Neg):
        f = _compile(node.operand, array_mode)
        return lambda c: -f(c)
    if isinstance(node, Pow):
        f, n = _compile(node.base, array_mode), node.exponent
        if array_mode:
            def power(c):
                b = np.asarray(f(c), dtype=float)
                if n < 0:
                    _check_array(b == 0.0, "division by zero", where, c)
                return b**n if n >= 0 else 1.0 / b ** (-n)
            return power

        def jet_power(c):
            b = f(c)
            if not isinstance(b, Jet):
                if n < 0 and b == 0.0:
                    raise JetDomainError("division by zero", subexpression=where, point=_point(c))
                return b**n
            if n < 0 and np.any(b.value == 0.0):
                raise JetDomainError("division by zero", subexpression=where, point=_point(c))
            return b**n
        return jet_power
    if isinstance(node, BinOp):
        lf, rf = _compile(node.left, array_mode), _compile(node.right, array_mode)
        if node.op == "+":
            return lambda c: lf(c) + rf(c)
        if node.op == "-":
            return lambda c: lf(c) - rf(c)
        if node.op == "*":
            return lambda c: lf(c) * rf(c)

        def divide(c):
            den = rf(c)
            dv = den if array_mode else den.value if isinstance(den, Jet) else den
            if np.any(np.asarray(dv) == 0.0):
                raise JetDomainError("division by zero", subexpression=where, point=_point(c))
            return lf(c) / den
        return divide
    # Call
    fs = [_compile(a, array_mode) for a in node.args]
    name = node.func
    if array_mode:
        def call(c):
            args = [np.asarray(f(c), dtype=float) for f in fs]
            x = args[0]
            if name == "sqrt":
                _check_array(x < 0, "sqrt of negative value", where, c)
                return np.sqrt(x)
            if name == "log":
                _check_array(x <= 0, "log of non-positive value", where, c)
                return np.log(x)
            if name == "atan2":
                _check_array((x == 0) & (args[1] == 0), "atan2 at the origin", where, c)
                return np.arctan2(x, args[1])
            return {"sin": np.sin, "cos": np.cos, "exp": np.exp, "atan": np.arctan}[name](x)
        return call

    array_call = _compile(node, True)

    def jet_call(c):
        args = [f(c) for f in fs]
        if not any(isinstance(a, Jet) for a in args):
            # constant subexpression: evaluate once in value mode
            return float(np.ravel(array_call([x.value for x in c]))[0])
        if len(args) == 2 and not all(isinstance(a, Jet) for a in args):
            ref = args[0] if isinstance(args[0], Jet) else args[1]
            args = [a if isinstance(a, Jet) else Jet.constant(np.full(ref.shape, a), ref.dim, ref.order) for a in args]
        try:
            if name == "sqrt":
                return args[0].sqrt(where)
            if name == "log":
                return args[0].log(where)
            if name == "atan2":
                return jet_atan2(args[0], args[1], where)
        except JetDomainError as err:
            raise JetDomainError(str(err).split(" in '")[0], point=_point(c), subexpression=where) from None
        return getattr(args[0], name)()
    return jet_call


def _point(coords):
    if not coords:
        return None
    values = [c.value if isinstance(c, Jet) else np.asarray(c) for c in coords]
    return np.stack(np.broadcast_arrays(*values), axis=-1).reshape(-1, len(values))[0]


@dataclass(frozen=True)
class ScalarField:
    """A coefficient expression bound to a coordinate chart."""

    ast: Node
    chart: tuple = DEFAULT_CHART

    @classmethod
    def parse(cls, src, chart=DEFAULT_CHART):
        chart = tuple(chart)
        return cls(parse_expression(src, chart), chart)

    @classmethod
    def constant(cls, value, chart=DEFAULT_CHART):
        return cls(Const(float(value)), tuple(chart))

    def __post_init__(self):
        object.__setattr__(self, "_jet_fn", _compile(self.ast, False))
        object.__setattr__(self, "_array_fn", _compile(self.ast, True))

    @property
    def source(self):
        return to_source(self.ast)

    @property
    def is_constant(self):
        return isinstance(self.ast, Const)

    def values(self, points):
        """Plain values at ``points`` (shape ``S + (len(chart),)``)."""
        points = np.asarray(points, dtype=float)
        coords = [points[..., k] for k in range(len(self.chart))]
        return np.broadcast_to(np.asarray(self._array_fn(coords), dtype=float), points.shape[:-1]).copy()

    def jet(self, points, order):
        """Jet of the field at ``points`` (shape ``S + (d,)``) up to ``order``."""
        if not 0 <= order <= 3:
            raise ValueError("jet order must be between 0 and 3")
        points = np.asarray(points, dtype=float)
        d = len(self.chart)
        coords = [Jet.variable(points[..., k], k, d, order) for k in range(d)]
        out = self._jet_fn(coords)
        shape = points.shape[:-1]
        if not isinstance(out, Jet):
            return Jet.constant(np.full(shape, out), d, order)
        return out if out.shape == shape else out.broadcast_to(shape)

    def __str__(self):
        return self.source


def evaluate_scalar_field(field: ScalarField, point, order: int) -> Jet:
    """Jet of ``field`` at a single point."""
    return field.jet(np.asarray(point, dtype=float), order)


def as_field(value, chart=DEFAULT_CHART) -> ScalarField:
    """Accept a ScalarField, an expression string, or a number."""
    if isinstance(value, ScalarField):
        return value
    if isinstance(value, (int, float)):
        return ScalarField.constant(value, chart)
    return ScalarField.parse(str(value), chart)


