"""Symbolic expressions produced by the symbolic executor.

Expressions are immutable, hashable trees. ``render`` produces the display
form used in reports (``[VAR6-0x48]``, ``ITER(VAR0)``); ``lexemes`` exposes
the same layout piece by piece so tokenization never re-parses text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Literal, Union

from typing_extensions import TypeAlias


@dataclass(frozen=True, slots=True)
class Var:
    index: int


@dataclass(frozen=True, slots=True)
class Num:
    value: int
    # Display hint only: displacements read from operands print as hex.
    hex: bool = field(default=False, compare=False)


@dataclass(frozen=True, slots=True)
class Str:
    text: str


@dataclass(frozen=True, slots=True)
class Mem:
    addr: "SymExpr"


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str
    left: "SymExpr"
    right: "SymExpr"


@dataclass(frozen=True, slots=True)
class UnOp:
    op: str
    operand: "SymExpr"


@dataclass(frozen=True, slots=True)
class Iter:
    initial: "SymExpr"


FlagKind: TypeAlias = Literal["CF", "ZF", "SF", "OF"]


@dataclass(frozen=True, slots=True)
class Flag:
    kind: FlagKind
    lhs: "SymExpr"
    rhs: "SymExpr"


SymExpr: TypeAlias = Union[Var, Num, Str, Mem, BinOp, UnOp, Iter, Flag]

BINARY_OPS = ("+", "-", "*", "&", "|", "^", "<<", ">>")
UNARY_OPS = ("-", "~")

PRECEDENCE = {"|": 1, "^": 2, "&": 3, "<<": 4, ">>": 4, "+": 5, "-": 5, "*": 6}
_UNARY_PREC = 7
_ATOM_PREC = 8

_RANK = {Num: 0, Str: 1, Var: 2, Mem: 3, UnOp: 4, BinOp: 5, Iter: 6, Flag: 7}


def iterate(expr: SymExpr) -> SymExpr:
    """Mark expr as a loop counter; an ITER is never wrapped twice."""
    return expr if isinstance(expr, Iter) else Iter(expr)


def sort_key(expr: SymExpr) -> tuple:
    """Total order Num < Str < Var < Mem < UnOp < BinOp < Iter < Flag, then structure."""
    rank = _RANK[type(expr)]
    if isinstance(expr, Num):
        return (rank, expr.value)
    if isinstance(expr, Str):
        return (rank, expr.text)
    if isinstance(expr, Var):
        return (rank, expr.index)
    if isinstance(expr, Mem):
        return (rank, sort_key(expr.addr))
    if isinstance(expr, UnOp):
        return (rank, expr.op, sort_key(expr.operand))
    if isinstance(expr, BinOp):
        return (rank, expr.op, sort_key(expr.left), sort_key(expr.right))
    if isinstance(expr, Iter):
        return (rank, sort_key(expr.initial))
    return (rank, expr.kind, sort_key(expr.lhs), sort_key(expr.rhs))


LexemeKind: TypeAlias = Literal["atom", "op", "open", "close", "sep"]
Lexeme: TypeAlias = tuple[LexemeKind, str]


def precedence(expr: SymExpr) -> int:
    if isinstance(expr, BinOp):
        return PRECEDENCE.get(expr.op, 0)
    if isinstance(expr, UnOp) or (isinstance(expr, Num) and expr.value < 0):
        return _UNARY_PREC
    return _ATOM_PREC


def _number(value: int, as_hex: bool) -> str:
    return f"{value:#x}" if as_hex else str(value)


def lexemes(expr: SymExpr, *, hints: bool = True) -> Iterator[Lexeme]:
    """Yield the display layout of expr as (kind, text) pieces."""
    if isinstance(expr, Var):
        yield ("atom", f"VAR{expr.index}")
    elif isinstance(expr, Num):
        if expr.value < 0:
            yield ("op", "-")
        yield ("atom", _number(abs(expr.value), hints and expr.hex))
    elif isinstance(expr, Str):
        yield ("atom", json.dumps(expr.text))
    elif isinstance(expr, Mem):
        yield ("open", "[")
        yield from lexemes(expr.addr, hints=hints)
        yield ("close", "]")
    elif isinstance(expr, Iter):
        yield ("open", "ITER(")
        yield from lexemes(expr.initial, hints=hints)
        yield ("close", ")")
    elif isinstance(expr, Flag):
        yield ("open", f"{expr.kind}(")
        yield from lexemes(expr.lhs, hints=hints)
        yield ("sep", ",")
        yield from lexemes(expr.rhs, hints=hints)
        yield ("close", ")")
    elif isinstance(expr, UnOp):
        yield ("op", expr.op)
        yield from _wrapped(expr.operand, precedence(expr.operand) < _UNARY_PREC, hints)
    else:
        yield from _binary(expr, hints)


def _binary(expr: BinOp, hints: bool) -> Iterator[Lexeme]:
    own = PRECEDENCE.get(expr.op, 0)
    yield from _wrapped(expr.left, precedence(expr.left) < own, hints)
    right = expr.right
    if expr.op == "+" and isinstance(right, Num) and right.value < 0:
        # x + (-c) is displayed as a displacement: x-c
        yield ("op", "-")
        yield ("atom", _number(-right.value, hints and right.hex))
        return
    yield ("op", expr.op)
    yield from _wrapped(right, precedence(right) <= own, hints)


def _wrapped(expr: SymExpr, parenthesize: bool, hints: bool) -> Iterator[Lexeme]:
    if parenthesize:
        yield ("open", "(")
        yield from lexemes(expr, hints=hints)
        yield ("close", ")")
    else:
        yield from lexemes(expr, hints=hints)


def render(expr: SymExpr, *, hints: bool = True) -> str:
    """Display form: ``VAR0``, ``[VAR6-0x48]``, ``(VAR1+10)*3``, ``ITER(VAR0)``."""
    parts = []
    for kind, text in lexemes(expr, hints=hints):
        parts.append(", " if kind == "sep" else text)
    return "".join(parts)


def canonical_key(expr: SymExpr) -> str:
    """Stable serialization used to key symbolic memory; ignores display hints."""
    return render(expr, hints=False)


def walk(expr: SymExpr) -> Iterator[SymExpr]:
    """Pre-order traversal of expr and all its sub-expressions."""
    yield expr
    if isinstance(expr, Mem):
        yield from walk(expr.addr)
    elif isinstance(expr, Iter):
        yield from walk(expr.initial)
    elif isinstance(expr, UnOp):
        yield from walk(expr.operand)
    elif isinstance(expr, BinOp):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Flag):
        yield from walk(expr.lhs)
        yield from walk(expr.rhs)
