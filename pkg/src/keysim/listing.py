"""JSON listing front end.

A listing document describes one binary::

    {"binary": "ls", "functions": [{"name": "main", "entry": 4198400,
      "instructions": [{"addr": 4198400, "mnemonic": "push", "ops": ["rbp"]}]}]}

Unknown keys are ignored so richer exporters can share the format.
"""

from __future__ import annotations

import json
import logging
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ListingParseError, OperandSyntaxError
from .models import Function, Instruction, Program
from .operands import format_operand, parse_operand

logger = logging.getLogger(__name__)

_UINT64_MAX = (1 << 64) - 1


class InstructionPayload(BaseModel):
    model_config = ConfigDict(extra="ignore")

    addr: int = Field(ge=0, le=_UINT64_MAX)
    mnemonic: str = Field(min_length=1)
    ops: list[str] = Field(default_factory=list)
    string: Optional[str] = None
    unsupported: bool = False


class FunctionPayload(BaseModel):
    model_config = ConfigDict(extra="ignore")

    name: Optional[str] = None
    entry: int = Field(ge=0, le=_UINT64_MAX)
    instructions: list[InstructionPayload] = Field(min_length=1)


class ListingDocument(BaseModel):
    model_config = ConfigDict(extra="ignore")

    binary: str = ""
    functions: list[FunctionPayload] = Field(default_factory=list)


def parse_listing(text: str | bytes) -> Program:
    """Validate a listing document and build the structured Program."""
    try:
        document = ListingDocument.model_validate_json(text)
    except ValidationError as exc:
        raise _schema_error(text, exc) from exc
    program = Program(
        functions=tuple(_build_function(payload) for payload in document.functions),
        binary=document.binary,
    )
    logger.debug("parsed listing %r with %d functions", program.binary, len(program))
    return program


def serialize_listing(program: Program) -> str:
    """Write the canonical listing document for a Program."""
    document = ListingDocument(
        binary=program.binary,
        functions=[
            FunctionPayload(
                name=function.name,
                entry=function.entry,
                instructions=[_instruction_payload(instr) for instr in function.instructions],
            )
            for function in program.functions
        ],
    )
    return document.model_dump_json(indent=2, exclude_defaults=True) + "\n"


def _instruction_payload(instr: Instruction) -> InstructionPayload:
    return InstructionPayload(
        addr=instr.address,
        mnemonic=instr.mnemonic,
        ops=[format_operand(op) for op in instr.operands],
        string=instr.resolved_string,
        unsupported=instr.unsupported,
    )


def _build_function(payload: FunctionPayload) -> Function:
    label = payload.name or f"{payload.entry:#x}"
    instructions: list[Instruction] = []
    seen: set[int] = set()
    for item in sorted(payload.instructions, key=lambda entry: entry.addr):
        if item.addr in seen:
            raise ListingParseError("duplicate instruction address", function=label, address=item.addr)
        seen.add(item.addr)
        mnemonic = item.mnemonic.strip().lower()
        try:
            operands = tuple(parse_operand(op, mnemonic=mnemonic) for op in item.ops)
        except OperandSyntaxError as exc:
            raise OperandSyntaxError(str(exc), function=label, address=item.addr) from exc
        instructions.append(
            Instruction(
                address=item.addr,
                mnemonic=mnemonic,
                operands=operands,
                resolved_string=item.string,
                unsupported=item.unsupported,
                raw_text=f"{mnemonic} {', '.join(item.ops)}".strip(),
            )
        )
    if instructions[0].address != payload.entry:
        raise ListingParseError(
            "entry does not match the first instruction",
            function=label,
            address=payload.entry,
        )
    return Function(entry=payload.entry, instructions=tuple(instructions), name=payload.name)


def _schema_error(text: str | bytes, exc: ValidationError) -> ListingParseError:
    first = exc.errors()[0]
    location = first.get("loc", ())
    function = address = None
    if len(location) >= 2 and location[0] == "functions" and isinstance(location[1], int):
        function, address = _locate(text, location)
    where = ".".join(str(part) for part in location)
    return ListingParseError(f"listing schema violation at {where}: {first.get('msg')}", function=function, address=address)


def _locate(text: str | bytes, location: tuple) -> tuple[Optional[str], Optional[int]]:
    """Name the offending function by re-reading the raw JSON; best effort."""
    try:
        raw = json.loads(text)
        function = raw["functions"][location[1]]
    except (ValueError, LookupError, TypeError):
        return None, None
    name = function.get("name") if isinstance(function, dict) else None
    address = None
    if len(location) >= 4 and location[2] == "instructions" and isinstance(location[3], int):
        try:
            address = int(function["instructions"][location[3]]["addr"])
        except (LookupError, TypeError, ValueError):
            address = None
    return name, address
