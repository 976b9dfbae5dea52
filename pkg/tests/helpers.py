"""Builders shared by the test modules."""

from __future__ import annotations

import json
import random
import re
from typing import Optional

import numpy as np

from keysim.expr import BinOp, Num, SymExpr, UnOp, Var, walk
from keysim.listing import parse_listing
from keysim.models import Function, Program
from keysim.operands import CONTROL_TRANSFER

_LABEL_LINE = re.compile(r"^([.\w]+):$")


def asm(name: Optional[str], source: str, *, entry: int = 0x1000, step: int = 4) -> dict:
    """Listing payload for one function written as assembly text.

    ``label:`` lines name branch targets and ``; "text"`` attaches a resolved
    string to an instruction.
    """
    labels: dict[str, int] = {}
    lines: list[tuple[int, str]] = []
    address = entry
    for raw in source.strip().splitlines():
        line = raw.strip()
        if not line:
            continue
        label = _LABEL_LINE.match(line)
        if label:
            labels[label.group(1)] = address
            continue
        lines.append((address, line))
        address += step

    instructions = []
    for address, line in lines:
        text, _, string = line.partition(";")
        mnemonic, _, rest = text.strip().partition(" ")
        ops = [op.strip() for op in rest.split(",")] if rest.strip() else []
        if CONTROL_TRANSFER.match(mnemonic):
            ops = [f"{labels[op]:x} <{op}>" if op in labels else op for op in ops]
        item: dict = {"addr": address, "mnemonic": mnemonic, "ops": ops}
        if string.strip():
            item["string"] = json.loads(string.strip())
        instructions.append(item)
    return {"name": name, "entry": entry, "instructions": instructions}


def listing_text(*functions: dict, binary: str = "test.bin") -> str:
    return json.dumps({"binary": binary, "functions": list(functions)})


def program(*functions: dict, binary: str = "test.bin") -> Program:
    return parse_listing(listing_text(*functions, binary=binary))


def function(source: str, *, name: Optional[str] = "f", entry: int = 0x1000) -> Function:
    return program(asm(name, source, entry=entry)).functions[0]


# A counted loop: header .L1 compares the counter, the body increments it.
LOOP_SOURCE = """
    mov eax, edi
    mov ecx, 3
.L1:
    cmp eax, ecx
    jge .L4
.L3:
    mov dword ptr [rsi+0x8], ecx
    add eax, 1
    jmp .L1
.L4:
    mov edi, eax
    call report
    ret
"""


# -- expression oracle --------------------------------------------------------------


def evaluate(expr: SymExpr, env: dict[int, np.ndarray]) -> np.ndarray:
    """Evaluate expr over uint8 arrays of variable values; arithmetic wraps modulo 256."""
    if isinstance(expr, Var):
        return env[expr.index]
    if isinstance(expr, Num):
        return np.array([expr.value & 0xFF], dtype=np.uint8)
    if isinstance(expr, UnOp):
        operand = evaluate(expr.operand, env)
        return -operand if expr.op == "-" else ~operand
    assert isinstance(expr, BinOp)
    left = evaluate(expr.left, env)
    if expr.op == "<<":
        assert isinstance(expr.right, Num), "only constant shifts are generated"
        return left << np.uint8(expr.right.value)
    right = evaluate(expr.right, env)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    if expr.op == "&":
        return left & right
    if expr.op == "|":
        return left | right
    if expr.op == "^":
        return left ^ right
    raise AssertionError(f"operator {expr.op} is not generated")


def agree(first: SymExpr, second: SymExpr, env: dict[int, np.ndarray], bits: int = 8) -> bool:
    """True when both expressions match in their low ``bits`` bits on every assignment."""
    mask = np.uint8((1 << bits) - 1)
    return bool(np.all((evaluate(first, env) ^ evaluate(second, env)) & mask == 0))


def assignments(variables: int, bits: int = 8) -> dict[int, np.ndarray]:
    """Every assignment of ``bits``-bit values to VAR0..VAR<variables-1>."""
    values = np.arange(1 << bits, dtype=np.uint8)
    grids = np.meshgrid(*([values] * variables), indexing="ij")
    return {index: grid.ravel() for index, grid in enumerate(grids)}


_OPS = ("+", "-", "*", "&", "|", "^")


def random_expression(rng: random.Random, depth: int, variables: int = 3) -> SymExpr:
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.7:
            return Var(rng.randrange(variables))
        return Num(rng.randint(-8, 16))
    roll = rng.random()
    if roll < 0.08:
        return UnOp(rng.choice(("-", "~")), random_expression(rng, depth - 1, variables))
    if roll < 0.14:
        return BinOp("<<", random_expression(rng, depth - 1, variables), Num(rng.randint(0, 3)))
    return BinOp(
        rng.choice(_OPS),
        random_expression(rng, depth - 1, variables),
        random_expression(rng, depth - 1, variables),
    )


def variables_of(expr: SymExpr) -> set[int]:
    return {node.index for node in walk(expr) if isinstance(node, Var)}
