"""Program model shared by the front ends, the CFG builder and the analyses."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import networkx as nx


class OperandKind(str, Enum):
    REGISTER = "register"
    IMMEDIATE = "immediate"
    MEMORY = "memory"
    LABEL = "label"


@dataclass(frozen=True, slots=True)
class Operand:
    """One Intel-syntax operand.

    Registers are stored by their 64-bit family (``eax`` -> ``rax``) with the
    access width kept alongside. Memory operands carry an optional access
    width taken from ``byte/word/dword/qword ptr``.
    """

    kind: OperandKind
    register: Optional[str] = None
    width: Optional[int] = None
    value: Optional[int] = None
    base: Optional[str] = None
    index: Optional[str] = None
    scale: int = 1
    displacement: int = 0
    segment: Optional[str] = None
    target: Optional[int] = None
    symbol: Optional[str] = None

    @property
    def is_register(self) -> bool:
        return self.kind is OperandKind.REGISTER

    @property
    def is_memory(self) -> bool:
        return self.kind is OperandKind.MEMORY

    @property
    def is_immediate(self) -> bool:
        return self.kind is OperandKind.IMMEDIATE

    @property
    def is_label(self) -> bool:
        return self.kind is OperandKind.LABEL


@dataclass(frozen=True, slots=True)
class Instruction:
    address: int
    mnemonic: str
    operands: tuple[Operand, ...] = ()
    resolved_string: Optional[str] = None
    unsupported: bool = False
    raw_text: str = field(default="", compare=False)

    def __str__(self) -> str:
        return self.raw_text or f"{self.address:#x}: {self.mnemonic}"


@dataclass(frozen=True, slots=True)
class Function:
    """A disassembled function. ``name`` is only ever used for evaluation."""

    entry: int
    instructions: tuple[Instruction, ...]
    name: Optional[str] = None

    @property
    def label(self) -> str:
        return self.name or f"sub_{self.entry:x}"


@dataclass(frozen=True, slots=True)
class Program:
    functions: tuple[Function, ...] = ()
    binary: str = ""

    def __iter__(self) -> Iterator[Function]:
        return iter(self.functions)

    def __len__(self) -> int:
        return len(self.functions)


@dataclass(frozen=True, slots=True)
class Diagnostic:
    """A recoverable problem found while ingesting or analysing code."""

    kind: str
    message: str
    address: Optional[int] = None

    def __str__(self) -> str:
        where = f"{self.address:#x}: " if self.address is not None else ""
        return f"[{self.kind}] {where}{self.message}"


@dataclass(frozen=True, slots=True)
class BasicBlock:
    """Instructions ``start`` (inclusive) to ``end`` (exclusive) of a function."""

    id: int
    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start

    def indices(self) -> range:
        return range(self.start, self.end)


@dataclass(frozen=True, slots=True)
class Cfg:
    blocks: tuple[BasicBlock, ...]
    edges: tuple[tuple[int, int], ...]
    entry: int = 0
    diagnostics: tuple[Diagnostic, ...] = ()

    def successors(self, block_id: int) -> list[int]:
        return sorted({dst for src, dst in self.edges if src == block_id})

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(block.id for block in self.blocks)
        graph.add_edges_from(self.edges)
        return graph

    def reachable_blocks(self) -> set[int]:
        if not self.blocks:
            return set()
        return {self.entry} | nx.descendants(self.to_networkx(), self.entry)
