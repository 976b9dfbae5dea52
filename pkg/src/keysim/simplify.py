"""Bounded rewrite system that normalizes symbolic expressions.

Arithmetic is two's complement on 64 bits. Every rule is an identity modulo
2**n for any n, so a simplified expression evaluates like the original at any
machine width (right shifts of constants excepted, they fold at 64 bits).

Normal form:

* sums are flattened into ``coefficient * monomial`` terms, like terms are
  merged, positive terms come first and the folded constant comes last;
* products, ``&``, ``|`` and ``^`` chains are flattened, operands sorted by
  :func:`keysim.expr.sort_key`, constants folded into one trailing operand;
* ``x << c`` becomes ``x * 2**c`` and ``~x`` inside a sum becomes ``-x-1``.
"""

from __future__ import annotations

import logging
from collections import Counter
from typing import Optional

from .expr import BinOp, Flag, Iter, Mem, Num, Str, SymExpr, UnOp, Var, iterate, render, sort_key

logger = logging.getLogger(__name__)

DEFAULT_RULE_BUDGET = 1000

_MASK = (1 << 64) - 1
_IDENTITY = {"&": -1, "|": 0, "^": 0}


def wrap(value: int) -> int:
    """Reduce value to a signed 64-bit integer."""
    value &= _MASK
    return value - (1 << 64) if value >= 1 << 63 else value


class _BudgetExhausted(Exception):
    pass


def _is_additive(expr: SymExpr) -> bool:
    return (isinstance(expr, BinOp) and expr.op in ("+", "-")) or (isinstance(expr, UnOp) and expr.op == "-")


class Simplifier:
    """Applies the rewrite rules to a fixpoint within a rule budget.

    ``exhausted`` counts calls that ran out of budget; their result is the last
    fully rewritten form.
    """

    def __init__(self, budget: int = DEFAULT_RULE_BUDGET) -> None:
        if budget < 1:
            raise ValueError("rule budget must be positive")
        self.budget = budget
        self.exhausted = 0
        self._applied = 0

    def __call__(self, expr: SymExpr) -> SymExpr:
        return self.simplify(expr)

    def simplify(self, expr: SymExpr) -> SymExpr:
        self._applied = 0
        current = expr
        try:
            while True:
                rewritten = self._rewrite(current)
                if rewritten == current:
                    return rewritten
                current = rewritten
        except _BudgetExhausted:
            self.exhausted += 1
            logger.warning("rule budget of %d exhausted while simplifying %s", self.budget, render(expr)[:200])
            return current

    def _tick(self) -> None:
        self._applied += 1
        if self._applied > self.budget:
            raise _BudgetExhausted

    def _rewrite(self, expr: SymExpr) -> SymExpr:
        if isinstance(expr, (Var, Num, Str)):
            return expr
        if isinstance(expr, Mem):
            return Mem(self._rewrite(expr.addr))
        if isinstance(expr, Iter):
            return iterate(self._rewrite(expr.initial))
        if isinstance(expr, Flag):
            return Flag(expr.kind, self._rewrite(expr.lhs), self._rewrite(expr.rhs))
        if isinstance(expr, UnOp):
            node: SymExpr = UnOp(expr.op, self._rewrite(expr.operand))
        else:
            node = BinOp(expr.op, self._rewrite(expr.left), self._rewrite(expr.right))
        result = self._canonicalize(node)
        if result != node:
            self._tick()
        return result

    def _canonicalize(self, node: SymExpr) -> SymExpr:
        if _is_additive(node):
            return self._additive(node)
        if isinstance(node, UnOp):
            return self._not(node) if node.op == "~" else node
        assert isinstance(node, BinOp)
        if node.op == "*":
            return self._multiplicative(node)
        if node.op in _IDENTITY:
            return self._bitwise(node)
        if node.op in ("<<", ">>"):
            return self._shift(node)
        return node

    # -- sums -----------------------------------------------------------

    def _additive(self, node: SymExpr) -> SymExpr:
        terms: dict[SymExpr, int] = {}
        constant = _Constant()
        self._collect(node, 1, terms, constant)
        self._combine_bitwise_terms(terms, constant)
        return _build_sum(terms, constant)

    def _collect(self, expr: SymExpr, factor: int, terms: dict[SymExpr, int], constant: "_Constant") -> None:
        if isinstance(expr, BinOp) and expr.op in ("+", "-"):
            self._collect(expr.left, factor, terms, constant)
            self._collect(expr.right, factor if expr.op == "+" else wrap(-factor), terms, constant)
        elif isinstance(expr, UnOp) and expr.op == "-":
            self._collect(expr.operand, wrap(-factor), terms, constant)
        elif isinstance(expr, UnOp) and expr.op == "~":
            self._collect(expr.operand, wrap(-factor), terms, constant)
            constant.add(-factor)
        elif isinstance(expr, Num):
            constant.add(factor * expr.value, expr.hex)
        else:
            coefficient, monomial = _split_coefficient(expr)
            scaled = wrap(factor * coefficient)
            if monomial is None:
                constant.add(scaled)
            elif _is_additive(monomial):
                self._collect(monomial, scaled, terms, constant)
            else:
                terms[monomial] = wrap(terms.get(monomial, 0) + scaled)

    def _combine_bitwise_terms(self, terms: dict[SymExpr, int], constant: "_Constant") -> None:
        """Mixed boolean-arithmetic identities over pairs of terms on x and y.

        (x|y)-(x&y) = x^y, (x&y)+(x|y) = x+y, (x^y)+2(x&y) = x+y, (x^y)+(x&y) = x|y
        """
        changed = True
        while changed:
            changed = False
            for monomial, c_and in list(terms.items()):
                if not c_and or not isinstance(monomial, BinOp) or monomial.op != "&":
                    continue
                x, y = monomial.left, monomial.right
                if isinstance(x, BinOp) and x.op == "&":
                    continue
                either, exclusive = BinOp("|", x, y), BinOp("^", x, y)
                c_or, c_xor = terms.get(either, 0), terms.get(exclusive, 0)
                if c_or and c_or == wrap(-c_and):
                    terms[monomial] = terms[either] = 0
                    terms[exclusive] = wrap(c_xor + c_or)
                elif c_or and c_or == c_and:
                    terms[monomial] = terms[either] = 0
                    self._collect(x, c_and, terms, constant)
                    self._collect(y, c_and, terms, constant)
                elif c_xor and c_and == wrap(2 * c_xor):
                    terms[monomial] = terms[exclusive] = 0
                    self._collect(x, c_xor, terms, constant)
                    self._collect(y, c_xor, terms, constant)
                elif c_xor and c_xor == c_and:
                    terms[monomial] = terms[exclusive] = 0
                    terms[either] = wrap(c_or + c_and)
                else:
                    continue
                self._tick()
                changed = True
                break

    # -- products ---------------------------------------------------------

    def _multiplicative(self, node: BinOp) -> SymExpr:
        coefficient, factors = _factors(node)
        if coefficient == 0:
            return Num(0)
        if len(factors) == 1 and _is_additive(factors[0]) and coefficient != 1:
            terms: dict[SymExpr, int] = {}
            constant = _Constant()
            self._collect(factors[0], coefficient, terms, constant)
            return _build_sum(terms, constant)
        return _build_scaled(_build_product(factors), coefficient)

    # -- bitwise ------------------------------------------------------------

    def _bitwise(self, node: BinOp) -> SymExpr:
        op = node.op
        identity = _IDENTITY[op]
        folded = identity
        hex_hint = False
        operands: list[SymExpr] = []
        for operand in _flatten(node, op):
            if isinstance(operand, Num):
                folded = _fold(op, folded, operand.value)
                hex_hint = hex_hint or operand.hex
            else:
                operands.append(operand)

        if op == "^":
            counts = Counter(operands)
            operands = [operand for operand, count in counts.items() if count % 2]
            for operand in list(operands):
                complement = UnOp("~", operand)
                if operand in operands and complement in operands:
                    operands.remove(operand)
                    operands.remove(complement)
                    folded = wrap(folded ^ -1)
        else:
            absorbing = 0 if op == "&" else -1
            if folded == absorbing:
                return Num(absorbing)
            operands = list(dict.fromkeys(operands))
            if any(UnOp("~", operand) in operands for operand in operands):
                return Num(absorbing)

        if not operands:
            return Num(folded, hex_hint)
        operands.sort(key=sort_key)
        result = operands[0]
        for operand in operands[1:]:
            result = BinOp(op, result, operand)
        if folded != identity:
            result = BinOp(op, result, Num(folded, hex_hint))
        return result

    def _not(self, node: UnOp) -> SymExpr:
        operand = node.operand
        if isinstance(operand, Num):
            return Num(wrap(~operand.value))
        if isinstance(operand, UnOp) and operand.op == "~":
            return operand.operand
        return node

    # -- shifts ---------------------------------------------------------------

    def _shift(self, node: BinOp) -> SymExpr:
        left, right = node.left, node.right
        if isinstance(right, Num):
            amount = right.value & 63
            if isinstance(left, Num):
                if node.op == "<<":
                    return Num(wrap(left.value << amount))
                return Num(wrap((left.value & _MASK) >> amount))
            if right.value == 0:
                return left
            if node.op == "<<" and 0 < right.value < 64:
                return self._multiplicative(BinOp("*", left, Num(wrap(1 << right.value))))
        if isinstance(left, Num) and left.value == 0:
            return Num(0)
        return node


class _Constant:
    __slots__ = ("value", "hex")

    def __init__(self) -> None:
        self.value = 0
        self.hex = False

    def add(self, amount: int, hex_hint: bool = False) -> None:
        self.value = wrap(self.value + amount)
        self.hex = self.hex or hex_hint


def _fold(op: str, left: int, right: int) -> int:
    if op == "&":
        return wrap(left & right)
    if op == "|":
        return wrap(left | right)
    return wrap(left ^ right)


def _flatten(expr: SymExpr, op: str) -> list[SymExpr]:
    if isinstance(expr, BinOp) and expr.op == op:
        return _flatten(expr.left, op) + _flatten(expr.right, op)
    return [expr]


def _factors(expr: SymExpr) -> tuple[int, list[SymExpr]]:
    """Split a product into its folded constant and its sorted other factors."""
    coefficient = 1
    factors: list[SymExpr] = []
    pending = [expr]
    while pending:
        item = pending.pop()
        if isinstance(item, BinOp) and item.op == "*":
            pending.extend((item.right, item.left))
        elif isinstance(item, UnOp) and item.op == "-":
            coefficient = wrap(-coefficient)
            pending.append(item.operand)
        elif isinstance(item, Num):
            coefficient = wrap(coefficient * item.value)
        else:
            factors.append(item)
    factors.sort(key=sort_key)
    return coefficient, factors


def _split_coefficient(expr: SymExpr) -> tuple[int, Optional[SymExpr]]:
    if isinstance(expr, BinOp) and expr.op == "*":
        coefficient, factors = _factors(expr)
        return coefficient, (_build_product(factors) if factors else None)
    return 1, expr


def _build_product(factors: list[SymExpr]) -> Optional[SymExpr]:
    if not factors:
        return None
    result = factors[0]
    for factor in factors[1:]:
        result = BinOp("*", result, factor)
    return result


def _build_scaled(product: Optional[SymExpr], coefficient: int) -> SymExpr:
    if product is None:
        return Num(coefficient)
    if coefficient == 1:
        return product
    if coefficient == -1:
        return UnOp("-", product)
    if coefficient > 0:
        return BinOp("*", product, Num(coefficient))
    return UnOp("-", BinOp("*", product, Num(wrap(-coefficient))))


def _build_sum(terms: dict[SymExpr, int], constant: _Constant) -> SymExpr:
    ordered = sorted(
        ((monomial, coefficient) for monomial, coefficient in terms.items() if coefficient),
        key=lambda item: (item[1] < 0, sort_key(item[0])),
    )
    result: Optional[SymExpr] = None
    for monomial, coefficient in ordered:
        magnitude = coefficient if coefficient > 0 else wrap(-coefficient)
        term = monomial if magnitude == 1 else BinOp("*", monomial, Num(magnitude))
        if result is None:
            result = term if coefficient > 0 else UnOp("-", term)
        else:
            result = BinOp("+" if coefficient > 0 else "-", result, term)
    if result is None:
        return Num(constant.value, constant.hex)
    if constant.value > 0:
        return BinOp("+", result, Num(constant.value, constant.hex))
    if constant.value < 0:
        return BinOp("-", result, Num(wrap(-constant.value), constant.hex))
    return result


def simplify(expr: SymExpr, *, budget: int = DEFAULT_RULE_BUDGET) -> SymExpr:
    """Rewrite expr to its normal form; ``simplify(simplify(e)) == simplify(e)``."""
    return Simplifier(budget).simplify(expr)
