"""Front end for ``objdump -d -M intel`` text."""

from __future__ import annotations

import logging
import re
from typing import Optional

from .errors import OperandSyntaxError
from .models import Function, Instruction, Program
from .operands import parse_operand

logger = logging.getLogger(__name__)

LABEL_RE = re.compile(r"^([0-9a-fA-F]+)\s+<([^>]+)>:\s*$")
INSTR_RE = re.compile(r"^\s*([0-9a-fA-F]+):\s*((?:[0-9a-fA-F]{2}(?:\s|$))+)\s*(.*)$")
FORMAT_RE = re.compile(r"^(\S+):\s+file format", re.MULTILINE)

# Prefixes objdump prints in front of the mnemonic that do not change semantics.
_IGNORED_PREFIXES = frozenset({"bnd", "notrack", "ds", "cs"})
_REP_PREFIXES = frozenset({"rep", "repz", "repe", "repnz", "repne", "lock"})
# ``repz ret`` is a plain return padded for branch predictors.
_PREFIXED_RETURNS = frozenset({"ret", "retn", "retq"})


def parse_objdump(text: str, *, binary: str = "") -> Program:
    """Split disassembly text into functions at ``<symbol>:`` labels."""
    functions: list[Function] = []
    current_name: Optional[str] = None
    current: list[Instruction] = []
    # address right after the bytes shown on the previous line
    line_end: Optional[int] = None

    def flush() -> None:
        if current_name is None:
            return
        if not current:
            logger.warning("function %s has no instructions; skipped", current_name)
            return
        functions.append(Function(entry=current[0].address, instructions=tuple(current), name=current_name))

    for line_number, line in enumerate(text.splitlines(), start=1):
        label = LABEL_RE.match(line)
        if label:
            flush()
            current_name = label.group(2)
            current = []
            continue
        match = INSTR_RE.match(line)
        if not match or current_name is None:
            continue
        address = int(match.group(1), 16)
        body = match.group(3).strip()
        continuation = address == line_end
        line_end = address + len(match.group(2).split())
        if not body:
            if continuation:
                continue
            logger.warning("line %d: data bytes at %#x without a mnemonic; skipped", line_number, address)
            continue
        current.append(_parse_instruction(address, body, line))

    flush()
    if not functions:
        logger.warning("no function labels found in disassembly")
    else:
        logger.debug("parsed %d functions from objdump text", len(functions))
    if not binary:
        header = FORMAT_RE.search(text)
        binary = header.group(1) if header else ""
    return Program(functions=tuple(functions), binary=binary)


def _parse_instruction(address: int, body: str, raw: str) -> Instruction:
    body = body.split("#", 1)[0].strip()
    words = body.split(None, 1)
    while len(words) > 1 and words[0] in _IGNORED_PREFIXES:
        words = words[1].split(None, 1)
    mnemonic = words[0].lower()
    rest = words[1].strip() if len(words) > 1 else ""
    if mnemonic in _REP_PREFIXES and rest:
        inner = rest.split(None, 1)
        mnemonic = inner[0].lower() if inner[0].lower() in _PREFIXED_RETURNS else f"{mnemonic} {inner[0].lower()}"
        rest = inner[1].strip() if len(inner) > 1 else ""

    operand_texts = [part.strip() for part in _split_operands(rest)] if rest else []
    try:
        operands = tuple(parse_operand(op, mnemonic=mnemonic) for op in operand_texts)
    except OperandSyntaxError as exc:
        logger.warning("%#x: %s; operands dropped", address, exc)
        return Instruction(address, mnemonic, (), unsupported=True, raw_text=raw.strip())
    return Instruction(address, mnemonic, operands, raw_text=raw.strip())


def _split_operands(text: str) -> list[str]:
    parts: list[str] = []
    depth = 0
    start = 0
    for position, char in enumerate(text):
        if char in "[<":
            depth += 1
        elif char in "]>":
            depth -= 1
        elif char == "," and depth == 0:
            parts.append(text[start:position])
            start = position + 1
    parts.append(text[start:])
    return parts
