"""Arithmetic expressions in ``x`` and ``t``.

Coefficients, sources and initial fields are given as short formulas such as
``"1 + 0.5*cos(2*pi*t)"``.  This module parses them into an immutable tree,
evaluates the tree on scalars or numpy arrays, and differentiates it
symbolically (used to build manufactured solutions).

Grammar, loosest binding first::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := primary ('^' unary)?          # right associative
    primary := number | name | name '(' expr ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^-x`` is ``2^(-x)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

VARIABLES = ("x", "t")
CONSTANTS = {"pi": math.pi, "e": math.e}
# log and sign are needed to close the derivative rules of ^ and abs
FUNCTIONS = ("sin", "cos", "exp", "sqrt", "tanh", "abs", "log", "sign")


class ExpressionError(ValueError):
    """Base class for parse errors."""


class ExprSyntaxError(ExpressionError):
    """Malformed expression text; ``offset`` is the byte offset of the fault."""

    def __init__(self, message: str, source: str, pos: int):
        self.offset = len(source[:pos].encode("utf-8"))
        self.source = source
        super().__init__(f"{message} at byte offset {self.offset} in {source!r}")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class UnknownFunctionError(ExprSyntaxError):
    pass


class EvaluationError(ArithmeticError):
    """Domain error during evaluation (pole, negative sqrt, invalid power)."""


# --------------------------------------------------------------------------
# Tree


class Expression:
    """Base class of all expression nodes.  Nodes are frozen dataclasses."""

    __slots__ = ()

    def __call__(self, x=0.0, t=0.0):
        return evaluate(self, x, t)

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Num(Expression):
    value: float


@dataclass(frozen=True)
class Var(Expression):
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise ValueError(f"variable must be one of {VARIABLES}, got {self.name!r}")


@dataclass(frozen=True)
class Const(Expression):
    name: str


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Call(Expression):
    func: str
    arg: Expression


ExpressionLike = Union[Expression, str, float, int]


def as_expression(value: ExpressionLike) -> Expression:
    """Coerce a number or formula string to an :class:`Expression`."""
    if isinstance(value, Expression):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(value, (int, float)):
        return Num(float(value))
    if isinstance(value, str):
        return parse(value)
    raise TypeError(f"cannot build an expression from {type(value).__name__}")


# --------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", source, pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", self.source, pos)

    def parse(self) -> Expression:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", self.source, pos)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expression:
        base = self.primary()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expression:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(f"unknown function {text!r}", self.source, pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in VARIABLES:
                return Var(text)
            if text in CONSTANTS:
                return Const(text)
            raise UnknownIdentifierError(f"unknown identifier {text!r}", self.source, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", self.source, pos)


def parse(source: str) -> Expression:
    """Parse ``source`` into an expression tree.

    Raises
    ------
    ExprSyntaxError
        On malformed input; :class:`UnknownIdentifierError` and
        :class:`UnknownFunctionError` are subclasses.
    """
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", source if isinstance(source, str) else "", 0)
    return _Parser(source).parse()


# --------------------------------------------------------------------------
# Evaluation


def _check(cond, message: str):
    if np.any(cond):
        raise EvaluationError(message)


def _power(base, expo):
    base = np.asarray(base, dtype=float)
    expo = np.asarray(expo, dtype=float)
    b, p = np.broadcast_arrays(base, expo)
    integral = p == np.round(p)
    _check((b < 0) & ~integral, "negative base with non-integer exponent")
    _check((b == 0) & (p < 0), "division by zero (zero base, negative exponent)")
    with np.errstate(over="ignore"):
        return np.power(b, p)


def _sign(u):
    return np.sign(u)


def _apply(func: str, u):
    if func == "sqrt":
        _check(np.asarray(u) < 0, "sqrt of a negative number")
        return np.sqrt(u)
    if func == "log":
        _check(np.asarray(u) <= 0, "log of a non-positive number")
        return np.log(u)
    if func == "sign":
        return _sign(u)
    return getattr(np, func if func != "abs" else "abs")(u)


def _eval(node: Expression, x, t):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else t
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, x, t)
    if isinstance(node, Call):
        return _apply(node.func, _eval(node.arg, x, t))
    if isinstance(node, BinOp):
        a = _eval(node.left, x, t)
        b = _eval(node.right, x, t)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            _check(np.asarray(b) == 0, "division by zero")
            return np.divide(a, b)
        if node.op == "^":
            return _power(a, b)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(expr: Expression, x=0.0, t=0.0):
    """Evaluate ``expr`` at ``(x, t)``.

    ``x`` and ``t`` may be scalars or broadcastable arrays.  Scalars in give a
    float out; otherwise an array of the broadcast shape is returned.

    Raises
    ------
    EvaluationError
        If any point hits a pole, a negative ``sqrt`` argument or an invalid
        power.
    """
    x_arr = np.asarray(x, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(x_arr.shape, t_arr.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = _eval(expr, x_arr, t_arr)
    value = np.broadcast_to(np.asarray(value, dtype=float), shape)
    if shape == ():
        return float(value)
    return np.array(value)


# --------------------------------------------------------------------------
# Differentiation

_ZERO = Num(0.0)
_ONE = Num(1.0)


def _is_num(node, value=None):
    return isinstance(node, Num) and (value is None or node.value == value)


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return _ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0):
        return _ZERO
    if _is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def depends_on(expr: Expression, var: str) -> bool:
    """True if ``var`` occurs anywhere in ``expr``."""
    if isinstance(expr, Var):
        return expr.name == var
    if isinstance(expr, (Num, Const)):
        return False
    if isinstance(expr, (Neg, Call)):
        return depends_on(expr.arg, var)
    return depends_on(expr.left, var) or depends_on(expr.right, var)


def differentiate(expr: Expression, var: str) -> Expression:
    """Exact symbolic derivative of ``expr`` with respect to ``var``.

    Only trivial zero/one folding is done, so results can be verbose.  The
    derivative of ``abs(u)`` is ``sign(u)*u'``, which is 0 at the kink.
    """
    if var not in VARIABLES:
        raise ValueError(f"can only differentiate with respect to {VARIABLES}")
    return _d(expr, var)


def _d(node: Expression, v: str) -> Expression:
    if not depends_on(node, v):
        return _ZERO
    if isinstance(node, Var):
        return _ONE
    if isinstance(node, Neg):
        return _neg(_d(node.arg, v))
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        if node.op == "+":
            return _add(_d(a, v), _d(b, v))
        if node.op == "-":
            return _sub(_d(a, v), _d(b, v))
        if node.op == "*":
            return _add(_mul(_d(a, v), b), _mul(a, _d(b, v)))
        if node.op == "/":
            # (a'b - ab') / b^2
            return _div(_sub(_mul(_d(a, v), b), _mul(a, _d(b, v))), BinOp("^", b, Num(2.0)))
        if node.op == "^":
            if not depends_on(b, v):
                # b * a^(b-1) * a'
                lowered = Num(b.value - 1.0) if isinstance(b, Num) else BinOp("-", b, _ONE)
                return _mul(_mul(b, BinOp("^", a, lowered)), _d(a, v))
            # a^b * (b' log a + b a'/a)
            inner = _add(_mul(_d(b, v), Call("log", a)), _div(_mul(b, _d(a, v)), a))
            return _mul(node, inner)
    if isinstance(node, Call):
        u = node.arg
        du = _d(u, v)
        f = node.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = _neg(Call("sin", u))
        elif f == "exp":
            outer = node
        elif f == "sqrt":
            outer = _div(_ONE, _mul(Num(2.0), node))
        elif f == "tanh":
            outer = _sub(_ONE, BinOp("^", node, Num(2.0)))
        elif f == "abs":
            outer = Call("sign", u)
        elif f == "log":
            outer = _div(_ONE, u)
        elif f == "sign":
            return _ZERO
        else:  # pragma: no cover - guarded by the parser
            raise ValueError(f"no derivative rule for {f}")
        return _mul(outer, du)
    raise TypeError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------------
# Printing

def to_string(expr: Expression) -> str:
    """Fully parenthesised text that :func:`parse` maps back to ``expr``."""
    if isinstance(expr, Num):
        text = repr(float(expr.value))
        return f"({text})" if expr.value < 0 or text.startswith("-") else text
    if isinstance(expr, (Var, Const)):
        return expr.name
    if isinstance(expr, Neg):
        return f"(-{to_string(expr.arg)})"
    if isinstance(expr, Call):
        return f"{expr.func}({to_string(expr.arg)})"
    if isinstance(expr, BinOp):
        return f"({to_string(expr.left)} {expr.op} {to_string(expr.right)})"
    raise TypeError(f"not an expression node: {expr!r}")


def substitute(expr: Expression, var: str, value: float) -> Expression:
    """Replace every occurrence of ``var`` by the number ``value``."""
    if isinstance(expr, Var):
        return Num(float(value)) if expr.name == var else expr
    if isinstance(expr, (Num, Const)):
        return expr
    if isinstance(expr, Neg):
        return Neg(substitute(expr.arg, var, value))
    if isinstance(expr, Call):
        return Call(expr.func, substitute(expr.arg, var, value))
    return BinOp(expr.op, substitute(expr.left, var, value), substitute(expr.right, var, value))
