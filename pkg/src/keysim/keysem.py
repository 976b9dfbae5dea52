"""Key instructions and their key expressions.

Four behaviours make a key instruction: a call, a comparison, an indirect
branch and a store to memory. Each translates to one key expression built
from the traversal's operand values::

    RET_<callee>(e1, ..., en)   e1 cmp e2   branch e   [e1] = e2
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .errors import TraversalError
from .expr import SymExpr, render
from .models import Function, Instruction
from .simplify import Simplifier
from .symexec import TraversalRecord

STORE_MNEMONICS = frozenset(
    {"mov", "movabs", "add", "sub", "and", "or", "xor", "inc", "dec", "shl", "sal", "shr", "sar", "neg", "not", "adc", "sbb"}
)
INDIRECT_CALLEE = "INDIRECT"


class KeyKind(str, Enum):
    CALL = "CallingBehavior"
    COMPARE = "ComparingManner"
    BRANCH = "IndirectBranch"
    STORE = "MemoryStore"


@dataclass(frozen=True, slots=True)
class KeyExpr:
    """A key expression.

    ``operands`` holds the call arguments, the two compared values, the branch
    destination, or the store address followed by the stored value. ``callee``
    is only used for display.
    """

    kind: KeyKind
    operands: tuple[SymExpr, ...] = ()
    callee: Optional[str] = None

    def __str__(self) -> str:
        parts = [render(operand) for operand in self.operands]
        if self.kind is KeyKind.CALL:
            return f"RET_{self.callee or INDIRECT_CALLEE}({', '.join(parts)})"
        if self.kind is KeyKind.COMPARE:
            return f"{parts[0]} cmp {parts[1]}"
        if self.kind is KeyKind.BRANCH:
            return f"branch {parts[0]}"
        return f"[{parts[0]}] = {parts[1]}"


def classify(instr: Instruction) -> Optional[KeyKind]:
    """Return the key kind of instr, or None for ordinary instructions."""
    mnemonic = instr.mnemonic
    operands = instr.operands
    if mnemonic == "call":
        return KeyKind.CALL
    if mnemonic in ("cmp", "test"):
        # operands dropped by the front end leave nothing to compare
        return KeyKind.COMPARE if len(operands) >= 2 else None
    if mnemonic == "jmp" and operands and (operands[0].is_register or operands[0].is_memory):
        return KeyKind.BRANCH
    if operands and operands[0].is_memory and mnemonic in STORE_MNEMONICS:
        return KeyKind.STORE
    return None


def callee_label(instr: Instruction) -> str:
    if instr.operands and instr.operands[0].is_label:
        target = instr.operands[0]
        if target.symbol:
            return target.symbol
        if target.target is not None:
            return f"{target.target:#x}"
    return INDIRECT_CALLEE


def translate(
    instr: Instruction,
    kind: KeyKind,
    record: TraversalRecord,
    *,
    simplifier: Optional[Simplifier] = None,
) -> KeyExpr:
    if instr.address not in record:
        raise TraversalError(f"no operand record for key instruction at {instr.address:#x}")
    simplify = simplifier or Simplifier()
    entry = record[instr.address]
    values = [simplify(value) for value in entry.final]

    if kind is KeyKind.CALL:
        return KeyExpr(kind, tuple(values[1:]), callee=callee_label(instr))
    if kind is KeyKind.COMPARE:
        return KeyExpr(kind, tuple(values[:2]))
    if kind is KeyKind.BRANCH:
        return KeyExpr(kind, tuple(values[:1]))
    address = entry.addresses[0]
    if address is None:
        raise TraversalError(f"store at {instr.address:#x} has no recorded address")
    return KeyExpr(kind, (simplify(address), values[0]))


def key_expressions(
    function: Function,
    record: TraversalRecord,
    *,
    simplifier: Optional[Simplifier] = None,
) -> list[tuple[int, KeyExpr]]:
    """Translate every executed key instruction, in address order."""
    simplifier = simplifier or Simplifier()
    keys = []
    for instr in function.instructions:
        kind = classify(instr)
        if kind is None or instr.address not in record:
            continue
        keys.append((instr.address, translate(instr, kind, record, simplifier=simplifier)))
    return keys
