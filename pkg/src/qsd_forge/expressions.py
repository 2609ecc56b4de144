#!/usr/bin/env python3
# 🌀 Eidosian Expression Forge
"""
Coefficient expression language.

Model coefficients are written as arithmetic over a single variable ``x``::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | "x" | "pi" | NAME "(" expr ("," expr)* ")" | "(" expr ")"

with the functions exp, log, sin, cos, sqrt, abs (one argument) and min,
max (two or more). Parsing yields a sympy expression, so derivatives are
exact; :class:`Coefficient` wraps an expression as a fast vectorised and
scalar callable.
"""

import logging
import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import sympy

from .errors import ConfigError

logger = logging.getLogger("qsd_forge.expressions")

X = sympy.Symbol("x", real=True)
Y = sympy.Symbol("y", real=True)

_TOKEN_SPEC = [
    ("NUMBER", r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"),
    ("NAME", r"[A-Za-z_][A-Za-z_0-9]*"),
    ("OP", r"[-+*/^(),]"),
    ("SKIP", r"[ \t]+"),
    ("ERROR", r"."),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))

_UNARY_FUNCTIONS: Dict[str, Callable[[sympy.Expr], sympy.Expr]] = {
    "exp": sympy.exp,
    "log": sympy.log,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "sqrt": sympy.sqrt,
    "abs": sympy.Abs,
}
_VARIADIC_FUNCTIONS: Dict[str, Callable[..., sympy.Expr]] = {"min": sympy.Min, "max": sympy.Max}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int  # 1-based, relative to the start of the expression


def tokenize(text: str, line: Optional[int] = None, column_offset: int = 0) -> List[Token]:
    """Split ``text`` into tokens, rejecting characters outside the grammar."""
    tokens: List[Token] = []
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup or "ERROR"
        column = match.start() + 1 + column_offset
        if kind == "SKIP":
            continue
        if kind == "ERROR":
            raise ConfigError(f"unexpected character {match.group()!r}", line, column)
        tokens.append(Token(kind, match.group(), column))
    tokens.append(Token("END", "", len(text) + 1 + column_offset))
    return tokens


class _Parser:
    """Recursive-descent parser producing sympy expressions."""

    def __init__(self, text: str, line: Optional[int], column_offset: int):
        self.tokens = tokenize(text, line, column_offset)
        self.position = 0
        self.line = line

    @property
    def current(self) -> Token:
        return self.tokens[self.position]

    def error(self, message: str, token: Optional[Token] = None) -> ConfigError:
        token = token or self.current
        found = "end of expression" if token.kind == "END" else repr(token.text)
        return ConfigError(f"{message}, found {found}", self.line, token.column)

    def advance(self) -> Token:
        token = self.current
        self.position += 1
        return token

    def expect(self, text: str) -> Token:
        if self.current.text != text:
            raise self.error(f"expected {text!r}")
        return self.advance()

    def parse(self) -> sympy.Expr:
        if self.current.kind == "END":
            raise self.error("empty expression")
        expr = self.expression()
        if self.current.kind != "END":
            raise self.error("unexpected trailing input")
        return expr

    def expression(self) -> sympy.Expr:
        left = self.term()
        while self.current.text in ("+", "-"):
            op = self.advance().text
            right = self.term()
            left = left + right if op == "+" else left - right
        return left

    def term(self) -> sympy.Expr:
        left = self.unary()
        while self.current.text in ("*", "/"):
            op = self.advance().text
            right = self.unary()
            left = left * right if op == "*" else left / right
        return left

    def unary(self) -> sympy.Expr:
        if self.current.text == "-":
            self.advance()
            return -self.unary()
        if self.current.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> sympy.Expr:
        base = self.atom()
        if self.current.text == "^":
            self.advance()
            return sympy.Pow(base, self.unary())
        return base

    def atom(self) -> sympy.Expr:
        token = self.current
        if token.kind == "NUMBER":
            self.advance()
            if re.fullmatch(r"\d+", token.text):
                return sympy.Integer(token.text)
            return sympy.Float(token.text)
        if token.text == "(":
            self.advance()
            inner = self.expression()
            self.expect(")")
            return inner
        if token.kind == "NAME":
            self.advance()
            if token.text == "x":
                return X
            if token.text == "pi":
                return sympy.pi
            if token.text in _UNARY_FUNCTIONS or token.text in _VARIADIC_FUNCTIONS:
                return self.call(token)
            raise ConfigError(f"unknown name {token.text!r}", self.line, token.column)
        raise self.error("expected a number, 'x', a function call or '('")

    def call(self, name: Token) -> sympy.Expr:
        self.expect("(")
        args = [self.expression()]
        while self.current.text == ",":
            self.advance()
            args.append(self.expression())
        self.expect(")")
        if name.text in _UNARY_FUNCTIONS:
            if len(args) != 1:
                raise ConfigError(f"{name.text} takes one argument, got {len(args)}", self.line, name.column)
            return _UNARY_FUNCTIONS[name.text](args[0])
        if len(args) < 2:
            raise ConfigError(f"{name.text} takes at least two arguments", self.line, name.column)
        return _VARIADIC_FUNCTIONS[name.text](*args)


def parse_expression(text: str, line: Optional[int] = None, column_offset: int = 0) -> sympy.Expr:
    """
    Parse a coefficient expression over ``x``.

    Args:
        text: Expression source
        line: Line number reported in errors
        column_offset: Offset added to reported columns (position of the
            expression inside its line, minus one)

    Returns:
        The sympy expression
    """
    return _Parser(text, line, column_offset).parse()


def unparse(expr: sympy.Expr) -> str:
    """
    Render a sympy expression back into the coefficient language.

    Every operand is parenthesised; parsing the result rebuilds the same
    expression tree.
    """
    if expr == X:
        return "x"
    if expr is sympy.pi:
        return "pi"
    if expr is sympy.E:
        return "exp(1)"
    if isinstance(expr, sympy.Integer):
        return str(int(expr)) if expr >= 0 else f"(-{abs(int(expr))})"
    if isinstance(expr, sympy.Rational):
        sign = "-" if expr < 0 else ""
        return f"({sign}{abs(expr.p)}/{expr.q})"
    if isinstance(expr, sympy.Float):
        text = str(expr)
        return f"({text})" if text.startswith("-") else text
    if isinstance(expr, sympy.Add):
        return " + ".join(f"({unparse(a)})" for a in expr.args)
    if isinstance(expr, sympy.Mul):
        return "*".join(f"({unparse(a)})" for a in expr.args)
    if isinstance(expr, sympy.Pow):
        base, exponent = expr.args
        return f"({unparse(base)})^({unparse(exponent)})"
    for name, func in (("exp", sympy.exp), ("log", sympy.log), ("sin", sympy.sin), ("cos", sympy.cos)):
        if isinstance(expr, func):
            return f"{name}({unparse(expr.args[0])})"
    if isinstance(expr, sympy.Abs):
        return f"abs({unparse(expr.args[0])})"
    if isinstance(expr, (sympy.Min, sympy.Max)):
        name = "min" if isinstance(expr, sympy.Min) else "max"
        return f"{name}({', '.join(unparse(a) for a in expr.args)})"
    raise ValueError(f"expression {expr} is outside the coefficient language")


def is_literal_zero(expr: sympy.Expr) -> bool:
    """True when the expression tree is the literal zero."""
    return bool(expr.is_zero) and not expr.free_symbols


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🧮 Callable coefficients
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def _scalar_heaviside(value: float, at_zero: float = 0.5) -> float:
    if value > 0:
        return 1.0
    return at_zero if value == 0 else 0.0


def _scalar_sign(value: float) -> float:
    return float((value > 0) - (value < 0))


_SCALAR_MODULES: Sequence[Union[str, Dict[str, Callable[..., float]]]] = (
    {"Heaviside": _scalar_heaviside, "sign": _scalar_sign},
    "math",
)


class Coefficient:
    """
    A coefficient function of one real variable.

    Wraps either a sympy expression in ``variable`` (evaluated through
    lambdify, with exact symbolic derivatives) or a tabulated spline.
    Array evaluation goes through :meth:`__call__`; :meth:`scalar` is the
    cheap path used inside ODE right-hand sides.
    """

    def __init__(
        self,
        expr: Optional[sympy.Expr] = None,
        variable: sympy.Symbol = X,
        spline: Optional[Callable[..., np.ndarray]] = None,
        label: str = "",
    ):
        if (expr is None) == (spline is None):
            raise ValueError("a Coefficient needs exactly one of expr or spline")
        self.expr = expr
        self.variable = variable
        self.spline = spline
        self.label = label
        if expr is not None:
            self._vector = sympy.lambdify(variable, expr, modules="numpy")
            self._scalar = sympy.lambdify(variable, expr, modules=list(_SCALAR_MODULES))
            self.is_constant = not (expr.free_symbols & {variable})
        else:
            self.is_constant = False

    @property
    def symbolic(self) -> bool:
        return self.expr is not None

    def __call__(self, values: Union[float, np.ndarray]) -> np.ndarray:
        points = np.asarray(values, dtype=float)
        if self.spline is not None:
            return np.asarray(self.spline(points), dtype=float)
        with np.errstate(all="ignore"):
            result = np.asarray(self._vector(points), dtype=float)
        return np.broadcast_to(result, points.shape).copy() if result.shape != points.shape else result

    def scalar(self, value: float) -> float:
        if self.spline is not None:
            return float(self.spline(value))
        try:
            return float(self._scalar(value))
        except (OverflowError, ValueError, ZeroDivisionError):
            with np.errstate(all="ignore"):
                return float(self._vector(np.float64(value)))

    def derivative(self) -> "Coefficient":
        """Exact derivative (symbolic) or the spline's derivative."""
        if self.expr is not None:
            return Coefficient(sympy.diff(self.expr, self.variable), self.variable, label=f"d({self.label})")
        derivative = getattr(self.spline, "derivative", None)
        if derivative is None:
            raise ValueError(f"tabulated coefficient {self.label!r} has no derivative")
        return Coefficient(spline=derivative(), variable=self.variable, label=f"d({self.label})")

    def right_limit(self, point: float) -> float:
        """Value at ``point``, or the right limit when the value is not finite."""
        value = self.scalar(point)
        if math.isfinite(value) or self.expr is None:
            return value
        try:
            limit = sympy.limit(self.expr, self.variable, point, dir="+")
            return float(limit)
        except (TypeError, ValueError, NotImplementedError):
            return float("nan")

    def __repr__(self) -> str:
        body = str(self.expr) if self.expr is not None else "<tabulated>"
        return f"Coefficient({self.label}: {body})"
