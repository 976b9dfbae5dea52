"""Basic-block discovery and control-flow edges for a single function."""

from __future__ import annotations

import logging
from typing import Optional

from .models import BasicBlock, Cfg, Diagnostic, Function, Instruction, Program

logger = logging.getLogger(__name__)

DEFAULT_MIN_BLOCKS = 5

RETURNS = frozenset({"ret", "retn", "retq", "retf", "iret", "iretq", "hlt", "ud2"})
CONDITIONAL_EXTRA = frozenset({"loop", "loope", "loopne", "loopz", "loopnz", "jrcxz", "jecxz"})


def is_return(mnemonic: str) -> bool:
    return mnemonic in RETURNS


def is_unconditional_jump(mnemonic: str) -> bool:
    return mnemonic == "jmp"


def is_conditional_jump(mnemonic: str) -> bool:
    return mnemonic in CONDITIONAL_EXTRA or (mnemonic.startswith("j") and mnemonic != "jmp")


def ends_block(mnemonic: str) -> bool:
    return is_return(mnemonic) or is_unconditional_jump(mnemonic) or is_conditional_jump(mnemonic)


def direct_target(instr: Instruction) -> Optional[int]:
    """Return the label address of a direct jump, or None when indirect."""
    if instr.operands and instr.operands[0].is_label:
        return instr.operands[0].target
    return None


def build_cfg(function: Function) -> Cfg:
    """Split a function into basic blocks and connect them.

    Calls fall through; branch targets outside the function are exits.
    """
    instrs = function.instructions
    if not instrs:
        return Cfg(blocks=(), edges=())
    index_of = {instr.address: position for position, instr in enumerate(instrs)}
    first, last = instrs[0].address, instrs[-1].address
    diagnostics: list[Diagnostic] = []

    leaders = {0}
    for position, instr in enumerate(instrs):
        if not ends_block(instr.mnemonic):
            continue
        if position + 1 < len(instrs):
            leaders.add(position + 1)
        target = direct_target(instr)
        if target is None:
            continue
        if target in index_of:
            leaders.add(index_of[target])
        elif first <= target <= last:
            diagnostics.append(
                Diagnostic("branch-target", f"{target:#x} is not an instruction boundary", instr.address)
            )
            logger.info("%s: branch at %#x into the middle of an instruction", function.label, instr.address)

    starts = sorted(leaders)
    blocks = tuple(
        BasicBlock(id=block_id, start=start, end=starts[block_id + 1] if block_id + 1 < len(starts) else len(instrs))
        for block_id, start in enumerate(starts)
    )
    block_at = {block.start: block.id for block in blocks}

    edges: set[tuple[int, int]] = set()
    for block in blocks:
        tail = instrs[block.end - 1]
        fall_through = block_at.get(block.end)
        mnemonic = tail.mnemonic
        if is_return(mnemonic):
            continue
        target = direct_target(tail) if ends_block(mnemonic) else None
        if target is not None and target in index_of:
            edges.add((block.id, block_at[index_of[target]]))
        if is_unconditional_jump(mnemonic):
            continue
        if fall_through is not None:
            edges.add((block.id, fall_through))

    return Cfg(blocks=blocks, edges=tuple(sorted(edges)), entry=0, diagnostics=tuple(diagnostics))


def filter_functions(program: Program, min_blocks: int = DEFAULT_MIN_BLOCKS) -> Program:
    """Keep the functions whose CFG has at least ``min_blocks`` blocks."""
    if min_blocks < 1:
        raise ValueError("min_blocks must be at least 1")
    kept = tuple(function for function in program if len(build_cfg(function).blocks) >= min_blocks)
    logger.info("kept %d of %d functions with >= %d blocks", len(kept), len(program), min_blocks)
    return Program(functions=kept, binary=program.binary)
