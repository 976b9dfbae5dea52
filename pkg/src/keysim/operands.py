"""Intel-syntax operand parsing and formatting."""

from __future__ import annotations

import re
from typing import Optional

from .errors import OperandSyntaxError
from .models import Operand, OperandKind

_LEGACY = {
    "rax": ("eax", "ax", "al", "ah"),
    "rbx": ("ebx", "bx", "bl", "bh"),
    "rcx": ("ecx", "cx", "cl", "ch"),
    "rdx": ("edx", "dx", "dl", "dh"),
    "rsi": ("esi", "si", "sil", None),
    "rdi": ("edi", "di", "dil", None),
    "rbp": ("ebp", "bp", "bpl", None),
    "rsp": ("esp", "sp", "spl", None),
}

REGISTERS: dict[str, tuple[str, int]] = {}
for _family, (_r32, _r16, _r8, _r8h) in _LEGACY.items():
    REGISTERS[_family] = (_family, 64)
    REGISTERS[_r32] = (_family, 32)
    REGISTERS[_r16] = (_family, 16)
    REGISTERS[_r8] = (_family, 8)
    if _r8h:
        REGISTERS[_r8h] = (_family, 8)
for _n in range(8, 16):
    REGISTERS[f"r{_n}"] = (f"r{_n}", 64)
    REGISTERS[f"r{_n}d"] = (f"r{_n}", 32)
    REGISTERS[f"r{_n}w"] = (f"r{_n}", 16)
    REGISTERS[f"r{_n}b"] = (f"r{_n}", 8)
REGISTERS["rip"] = ("rip", 64)
REGISTERS["eip"] = ("rip", 32)

_SPELLING = {(family, width): name for name, (family, width) in REGISTERS.items() if name not in {"ah", "bh", "ch", "dh"}}

SEGMENTS = frozenset({"cs", "ds", "es", "fs", "gs", "ss"})

_SIZES = {"byte": 8, "word": 16, "dword": 32, "qword": 64}
_SIZE_NAMES = {width: name for name, width in _SIZES.items()}

CONTROL_TRANSFER = re.compile(r"^(call|jmp|j[a-z]{1,4}|loop[a-z]*)$")

_PTR_RE = re.compile(r"^(byte|word|dword|qword)\s+ptr\s+(.*)$")
_LABEL_RE = re.compile(r"^(?:0x)?([0-9a-f]+)\s*<([^>]+)>$", re.IGNORECASE)
_NUMBER_RE = re.compile(r"^[-+]?(0x[0-9a-f]+|\d+)$")
_SYMBOL_RE = re.compile(r"^[A-Za-z_.$@?][\w.$@?]*$")
_TERM_RE = re.compile(r"\s*([+-])?\s*([^+-]+)")

_INT64 = 1 << 64


def to_signed(value: int) -> int:
    """Interpret value as a two's-complement 64-bit integer."""
    value &= _INT64 - 1
    return value - _INT64 if value >= 1 << 63 else value


def parse_number(text: str) -> int:
    text = text.strip().lower()
    negative = text.startswith("-")
    text = text.lstrip("+-")
    value = int(text, 16) if text.startswith("0x") else int(text, 10)
    return to_signed(-value if negative else value)


def parse_operand(text: str, *, mnemonic: str = "") -> Operand:
    """Parse one operand such as ``rax``, ``0x1f``, ``qword ptr [rbp-0x48]``."""
    original = text
    text = text.strip()
    lowered = text.lower()
    if not text:
        raise OperandSyntaxError(f"empty operand in {mnemonic or 'instruction'}")
    branch = bool(CONTROL_TRANSFER.match(mnemonic))

    width = None
    match = _PTR_RE.match(lowered)
    if match:
        width = _SIZES[match.group(1)]
        text = text[match.start(2):]
        lowered = match.group(2)

    if lowered in REGISTERS:
        family, reg_width = REGISTERS[lowered]
        return Operand(OperandKind.REGISTER, register=family, width=reg_width)

    label = _LABEL_RE.match(text)
    if label:
        return Operand(OperandKind.LABEL, target=int(label.group(1), 16), symbol=label.group(2))

    if _NUMBER_RE.match(lowered):
        value = parse_number(lowered)
        if branch:
            return Operand(OperandKind.LABEL, target=value & (_INT64 - 1))
        return Operand(OperandKind.IMMEDIATE, value=value)

    if "[" in lowered or _looks_segmented(lowered):
        return _parse_memory(lowered, width, original)

    if branch and _SYMBOL_RE.match(text):
        return Operand(OperandKind.LABEL, symbol=text)

    raise OperandSyntaxError(f"cannot parse operand {original!r}")


def _looks_segmented(text: str) -> bool:
    prefix, _, rest = text.partition(":")
    return prefix in SEGMENTS and bool(rest) and bool(_NUMBER_RE.match(rest.strip()))


def _parse_memory(text: str, width: Optional[int], original: str) -> Operand:
    segment = None
    prefix, sep, rest = text.partition(":")
    if sep and prefix.strip() in SEGMENTS:
        segment = prefix.strip()
        text = rest.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
    elif "[" not in text and "]" not in text and segment is not None:
        inner = text
    else:
        raise OperandSyntaxError(f"malformed memory operand {original!r}")

    base = index = None
    scale = 1
    displacement = 0
    consumed = 0
    for match in _TERM_RE.finditer(inner):
        sign, term = match.group(1) or "+", match.group(2).strip()
        consumed = match.end()
        if "*" in term:
            left, _, right = (part.strip() for part in term.partition("*"))
            if left in REGISTERS and _NUMBER_RE.match(right):
                reg, factor = left, parse_number(right)
            elif right in REGISTERS and _NUMBER_RE.match(left):
                reg, factor = right, parse_number(left)
            else:
                raise OperandSyntaxError(f"bad scaled index in {original!r}")
            if factor not in (1, 2, 4, 8):
                raise OperandSyntaxError(f"invalid scale {factor} in {original!r}")
            if index is not None or sign == "-":
                raise OperandSyntaxError(f"bad index term in {original!r}")
            index, scale = REGISTERS[reg][0], factor
        elif term in REGISTERS:
            if sign == "-":
                raise OperandSyntaxError(f"negated register in {original!r}")
            if base is None:
                base = REGISTERS[term][0]
            elif index is None:
                index = REGISTERS[term][0]
            else:
                raise OperandSyntaxError(f"too many registers in {original!r}")
        elif _NUMBER_RE.match(term):
            value = parse_number(term)
            displacement = to_signed(displacement + (-value if sign == "-" else value))
        else:
            raise OperandSyntaxError(f"cannot parse address term {term!r} in {original!r}")
    if consumed != len(inner) or not inner:
        raise OperandSyntaxError(f"cannot parse address {original!r}")
    return Operand(
        OperandKind.MEMORY,
        width=width,
        base=base,
        index=index,
        scale=scale,
        displacement=displacement,
        segment=segment,
    )


def format_operand(op: Operand) -> str:
    """Render an operand back to the Intel syntax accepted by parse_operand."""
    if op.kind is OperandKind.REGISTER:
        return _SPELLING.get((op.register, op.width), op.register or "")
    if op.kind is OperandKind.IMMEDIATE:
        value = op.value or 0
        return f"-{-value:#x}" if value < 0 else f"{value:#x}"
    if op.kind is OperandKind.LABEL:
        if op.target is None:
            return op.symbol or ""
        if op.symbol:
            return f"{op.target:x} <{op.symbol}>"
        return f"{op.target:#x}"
    parts = []
    if op.base:
        parts.append(op.base)
    if op.index:
        parts.append(f"{op.index}*{op.scale}")
    text = "+".join(parts)
    if op.displacement or not parts:
        if op.displacement < 0:
            text += f"-{-op.displacement:#x}"
        else:
            text += f"+{op.displacement:#x}" if text else f"{op.displacement:#x}"
    text = f"[{text}]"
    if op.segment:
        text = f"{op.segment}:{text}"
    if op.width:
        text = f"{_SIZE_NAMES[op.width]} ptr {text}"
    return text
