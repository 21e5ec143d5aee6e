"""A small arithmetic expression language for model functions.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' INTEGER)*
    primary := NUMBER | VAR | NAME '(' expr ')' | '(' expr ')'

Variables are ``x1..xn`` (state) and ``u1..um`` (input).  The exponent of
``^`` must be an integer literal in ``[0, 8]``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

from .errors import EvaluationError, NlgmpError

FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
    "abs": abs,
}

MAX_EXPONENT = 8


class ExprSyntaxError(NlgmpError, ValueError):
    def __init__(self, message: str, offset: int, expected: frozenset = frozenset()):
        self.offset = offset
        self.expected = expected
        detail = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "u"
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


_VAR = re.compile(r"([xu])([1-9]\d*)$")
_PRIMARY_START = frozenset({"number", "variable", "function", "'('", "'-'"})


class _Parser:
    def __init__(self, text: str, n: int, m: int):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.dims = {"x": n, "u": m}

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, text: str):
        if self.tok.text != text or self.tok.kind != "op":
            raise ExprSyntaxError(f"unexpected {self._describe()}", self.tok.offset, frozenset({repr(text)}))
        return self.advance()

    def _describe(self) -> str:
        return "end of input" if self.tok.kind == "end" else f"token {self.tok.text!r}"

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(
                f"unexpected {self._describe()}",
                self.tok.offset,
                frozenset({"operator", "end of input"}),
            )
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        e = self.primary()
        while self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            tok = self.tok
            if tok.kind != "num":
                raise ExprSyntaxError(f"unexpected {self._describe()}", tok.offset, frozenset({"integer"}))
            value = float(tok.text)
            if value != int(value) or not 0 <= value <= MAX_EXPONENT:
                raise ExprSyntaxError(
                    f"exponent must be an integer in [0, {MAX_EXPONENT}], got {tok.text}", tok.offset
                )
            self.advance()
            e = Pow(e, int(value))
        return e

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            vm = _VAR.match(tok.text)
            if vm:
                kind, index = vm.group(1), int(vm.group(2))
                if index > self.dims[kind]:
                    raise ExprSyntaxError(
                        f"variable {tok.text} out of range ({kind}1..{kind}{self.dims[kind]})"
                        if self.dims[kind]
                        else f"variable {tok.text} out of range (no {kind} variables declared)",
                        tok.offset,
                    )
                return Var(kind, index)
            if tok.text not in FUNCTIONS:
                raise ExprSyntaxError(f"unknown function or variable {tok.text!r}", tok.offset)
            self.expect_op("(")
            arg = self.expr()
            self.expect_op(")")
            return Call(tok.text, arg)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"unexpected {self._describe()}", tok.offset, _PRIMARY_START)


def parse_expr(text: str, n: int, m: int = 0) -> Expr:
    """Parse ``text`` with ``n`` state and ``m`` input variables in scope."""
    return _Parser(text, n, m).parse()


def to_string(e: Expr) -> str:
    """Render ``e`` so that :func:`parse_expr` rebuilds the same tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"{e.kind}{e.index}"
    if isinstance(e, Neg):
        return f"(-{to_string(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Pow):
        return f"({to_string(e.base)}^{e.exponent})"
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


def _finite(value: float, e: Expr) -> float:
    if not math.isfinite(value):
        raise EvaluationError(f"non-finite result {value} in {to_string(e)}")
    return value


def eval_expr(e: Expr, x, u=()) -> float:
    """Evaluate ``e`` at state ``x`` and input ``u``.

    Division by zero, domain errors and overflow raise
    :class:`EvaluationError` naming the offending subexpression.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return float((x if e.kind == "x" else u)[e.index - 1])
    if isinstance(e, Neg):
        return -eval_expr(e.operand, x, u)
    if isinstance(e, BinOp):
        a = eval_expr(e.left, x, u)
        b = eval_expr(e.right, x, u)
        try:
            if e.op == "+":
                r = a + b
            elif e.op == "-":
                r = a - b
            elif e.op == "*":
                r = a * b
            else:
                r = a / b
        except ZeroDivisionError:
            raise EvaluationError(f"division by zero in {to_string(e)}") from None
        return _finite(r, e)
    if isinstance(e, Pow):
        base = eval_expr(e.base, x, u)
        try:
            return _finite(base**e.exponent, e)
        except OverflowError:
            raise EvaluationError(f"overflow in {to_string(e)}") from None
    if isinstance(e, Call):
        a = eval_expr(e.arg, x, u)
        try:
            return _finite(FUNCTIONS[e.func](a), e)
        except (ValueError, OverflowError) as exc:
            raise EvaluationError(f"{exc} in {to_string(e)}") from None
    raise TypeError(f"not an expression: {e!r}")


def variables(e: Expr) -> set[tuple[str, int]]:
    if isinstance(e, Var):
        return {(e.kind, e.index)}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Neg,)):
        return variables(e.operand)
    if isinstance(e, Pow):
        return variables(e.base)
    if isinstance(e, Call):
        return variables(e.arg)
    return variables(e.left) | variables(e.right)
