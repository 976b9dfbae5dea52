"""Lightweight symbolic execution over a function's control-flow graph.

The traversal executes every reachable basic block once, depth first with the
lowest-address successor first. A successor that is still on the DFS stack
closes a loop: the path from the loop header to the latch is executed a second
time and every operand whose value changed between the two passes becomes a
loop counter, ``ITER(first value)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import networkx as nx

from .cfg import is_conditional_jump
from .expr import BinOp, Flag, Mem, Num, Str, SymExpr, UnOp, Var, canonical_key, iterate, render
from .models import Cfg, Diagnostic, Function, Instruction, Operand
from .operands import format_operand
from .simplify import Simplifier

logger = logging.getLogger(__name__)

ARGUMENT_REGISTERS = ("rdi", "rsi", "rdx", "rcx", "r8", "r9")
FLAG_KINDS = ("CF", "ZF", "SF", "OF")

_BINARY = {
    "add": "+",
    "sub": "-",
    "and": "&",
    "or": "|",
    "xor": "^",
    "shl": "<<",
    "sal": "<<",
    "shr": ">>",
    "sar": ">>",
}
_SHIFTS = frozenset({"shl", "sal", "shr", "sar"})
_NOPS = frozenset({"nop", "endbr64", "endbr32", "pause", "int3"})
_SIGN_EXTEND_RDX = frozenset({"cdq", "cqo", "cwd"})

# Conservative def-table for mnemonics without modelled semantics.
_IMPLICIT_DEFS: dict[str, tuple[str, ...]] = {
    "cdqe": ("rax",),
    "cwde": ("rax",),
    "cbw": ("rax",),
    "div": ("rax", "rdx"),
    "idiv": ("rax", "rdx"),
    "leave": ("rsp", "rbp"),
    "cpuid": ("rax", "rbx", "rcx", "rdx"),
    "rdtsc": ("rax", "rdx"),
    "syscall": ("rax", "rcx", "r11"),
    "cmpxchg": ("rax",),
}
_FIRST_OPERAND_DEFS = frozenset(
    {"movzx", "movsx", "movsxd", "bswap", "popcnt", "lzcnt", "tzcnt", "bsf", "bsr", "rol", "ror", "rcl", "rcr", "cmpxchg"}
)
_BOTH_OPERAND_DEFS = frozenset({"xchg", "xadd"})
_NO_DEFS = frozenset({"bt", "ucomiss", "ucomisd", "comiss", "comisd", "prefetcht0", "prefetchnta", "clflush"})


class VarAllocator:
    """Hands out Var indices for one function; shared by every copy of its state."""

    def __init__(self) -> None:
        self.next_index = 0
        self._entry_values: dict[str, Var] = {}

    def fresh(self) -> Var:
        var = Var(self.next_index)
        self.next_index += 1
        return var

    def entry_value(self, register: str) -> Var:
        """The value a register held on function entry, allocated on first use."""
        if register not in self._entry_values:
            self._entry_values[register] = self.fresh()
        return self._entry_values[register]


@dataclass
class MachineState:
    registers: dict[str, SymExpr] = field(default_factory=dict)
    memory: dict[str, SymExpr] = field(default_factory=dict)
    # canonical key -> the address expression it was derived from
    locations: dict[str, SymExpr] = field(default_factory=dict)
    last_compare: Optional[tuple[SymExpr, SymExpr]] = None
    flags: dict[str, SymExpr] = field(default_factory=dict)
    written_args: frozenset[str] = frozenset()
    allocator: VarAllocator = field(default_factory=VarAllocator)

    @property
    def next_var(self) -> int:
        return self.allocator.next_index

    def copy(self) -> "MachineState":
        return replace(
            self,
            registers=dict(self.registers),
            memory=dict(self.memory),
            locations=dict(self.locations),
            flags=dict(self.flags),
        )

    def read_register(self, register: str) -> SymExpr:
        value = self.registers.get(register)
        if value is None:
            value = self.allocator.entry_value(register)
            self.registers[register] = value
        return value

    def write_register(self, register: str, value: SymExpr) -> None:
        self.registers[register] = value
        if register in ARGUMENT_REGISTERS:
            self.written_args = self.written_args | {register}

    def load(self, address: SymExpr) -> SymExpr:
        return self.memory.get(canonical_key(address), Mem(address))

    def store(self, address: SymExpr, value: SymExpr) -> None:
        key = canonical_key(address)
        self.memory[key] = value
        self.locations[key] = address

    def initial_value(self, key: str) -> Optional[SymExpr]:
        """Value of a register or memory key as seen by a read in this state."""
        if key in self.registers:
            return self.registers[key]
        if key in self.memory:
            return self.memory[key]
        return None


def seed_arguments(state: MachineState) -> MachineState:
    """Bind the System V argument registers to VAR0..VAR5."""
    seeded = state.copy()
    for register in ARGUMENT_REGISTERS:
        seeded.registers[register] = seeded.allocator.entry_value(register)
    return seeded


@dataclass(frozen=True, slots=True)
class StepResult:
    state: MachineState
    values: tuple[SymExpr, ...]
    # simplified address expression per operand, None for non-memory operands
    addresses: tuple[Optional[SymExpr], ...]
    diagnostics: tuple[Diagnostic, ...] = ()


class _Operands:
    """Operand access for one instruction; addresses are resolved before any write."""

    def __init__(self, executor: "SymbolicExecutor", instr: Instruction, state: MachineState) -> None:
        self.executor = executor
        self.instr = instr
        self.state = state
        self.addresses: list[Optional[SymExpr]] = [
            executor.address_of(op, state) if op.is_memory else None for op in instr.operands
        ]

    def __len__(self) -> int:
        return len(self.instr.operands)

    def load(self, position: int) -> SymExpr:
        op = self.instr.operands[position]
        text = self.instr.resolved_string
        if op.is_immediate:
            return Str(text) if text is not None else Num(op.value or 0)
        if op.is_register:
            return self.state.read_register(op.register or "")
        if op.is_label:
            return Num(op.target, hex=True) if op.target is not None else Str(op.symbol or "")
        if text is not None and position > 0:
            return Str(text)
        address = self.addresses[position]
        assert address is not None
        return self.state.load(address)

    def store(self, position: int, value: SymExpr) -> None:
        op = self.instr.operands[position]
        if op.is_register:
            self.state.write_register(op.register or "", value)
        elif op.is_memory:
            address = self.addresses[position]
            assert address is not None
            self.state.store(address, value)


Handler = Callable[["SymbolicExecutor", _Operands], list[SymExpr]]


class SymbolicExecutor:
    """Instruction semantics over a MachineState, with one simplifier per function."""

    def __init__(self, simplifier: Optional[Simplifier] = None) -> None:
        self.simplifier = simplifier or Simplifier()

    def simplify(self, expr: SymExpr) -> SymExpr:
        return self.simplifier.simplify(expr)

    def address_of(self, op: Operand, state: MachineState) -> SymExpr:
        terms: list[SymExpr] = []
        if op.segment in ("fs", "gs"):
            terms.append(Str(op.segment))
        if op.base == "rip":
            terms.append(Str("rip"))
        elif op.base:
            terms.append(state.read_register(op.base))
        if op.index:
            index = state.read_register(op.index)
            terms.append(index if op.scale == 1 else BinOp("*", index, Num(op.scale)))
        if op.displacement or not terms:
            terms.append(Num(op.displacement, hex=True))
        address = terms[0]
        for term in terms[1:]:
            address = BinOp("+", address, term)
        return self.simplify(address)

    def step(self, instr: Instruction, state: MachineState) -> StepResult:
        """Execute instr on a copy of state."""
        state = state.copy()
        operands = _Operands(self, instr, state)
        handler = None if instr.unsupported else _handler_for(instr.mnemonic, len(operands))
        diagnostics: tuple[Diagnostic, ...] = ()
        if handler is None:
            values = self._unsupported(operands)
            diagnostics = (
                Diagnostic("unsupported", f"{instr.mnemonic} is not modelled; destinations made fresh", instr.address),
            )
        else:
            values = handler(self, operands)
        return StepResult(state, tuple(values), tuple(operands.addresses), diagnostics)

    # -- handlers -------------------------------------------------------------

    def _mov(self, ops: _Operands) -> list[SymExpr]:
        value = ops.load(1)
        ops.store(0, value)
        return [value, value]

    def _lea(self, ops: _Operands) -> list[SymExpr]:
        text = ops.instr.resolved_string
        address = ops.addresses[1]
        value = Str(text) if text is not None else (address if address is not None else ops.load(1))
        ops.store(0, value)
        return [value, value]

    def _binary(self, ops: _Operands) -> list[SymExpr]:
        mnemonic = ops.instr.mnemonic
        target = ops.load(0)
        source = ops.load(1) if len(ops) > 1 else Num(1)
        result = self.simplify(BinOp(_BINARY[mnemonic], target, source))
        ops.store(0, result)
        return [result, source] if len(ops) > 1 else [result]

    def _imul(self, ops: _Operands) -> list[SymExpr]:
        state = ops.state
        if len(ops) == 1:
            source = ops.load(0)
            state.write_register("rax", self.simplify(BinOp("*", state.read_register("rax"), source)))
            state.write_register("rdx", state.allocator.fresh())
            return [source]
        if len(ops) == 2:
            source = ops.load(1)
            result = self.simplify(BinOp("*", ops.load(0), source))
            ops.store(0, result)
            return [result, source]
        left, right = ops.load(1), ops.load(2)
        result = self.simplify(BinOp("*", left, right))
        ops.store(0, result)
        return [result, left, right]

    def _mul(self, ops: _Operands) -> list[SymExpr]:
        state = ops.state
        source = ops.load(0)
        state.write_register("rax", self.simplify(BinOp("*", state.read_register("rax"), source)))
        state.write_register("rdx", state.allocator.fresh())
        return [source]

    def _unary(self, ops: _Operands) -> list[SymExpr]:
        mnemonic = ops.instr.mnemonic
        value = ops.load(0)
        if mnemonic == "inc":
            result = BinOp("+", value, Num(1))
        elif mnemonic == "dec":
            result = BinOp("-", value, Num(1))
        else:
            result = UnOp("-" if mnemonic == "neg" else "~", value)
        result = self.simplify(result)
        ops.store(0, result)
        return [result]

    def _push(self, ops: _Operands) -> list[SymExpr]:
        state = ops.state
        value = ops.load(0)
        rsp = self.simplify(BinOp("-", state.read_register("rsp"), Num(8)))
        state.write_register("rsp", rsp)
        state.store(rsp, value)
        return [value]

    def _pop(self, ops: _Operands) -> list[SymExpr]:
        state = ops.state
        rsp = state.read_register("rsp")
        value = state.load(rsp)
        state.write_register("rsp", self.simplify(BinOp("+", rsp, Num(8))))
        ops.store(0, value)
        return [value]

    def _compare(self, ops: _Operands) -> list[SymExpr]:
        state = ops.state
        lhs, rhs = ops.load(0), ops.load(1)
        state.last_compare = (lhs, rhs)
        state.flags = {kind: Flag(kind, lhs, rhs) for kind in FLAG_KINDS}
        return [lhs, rhs]

    def _carry(self, ops: _Operands) -> list[SymExpr]:
        state = ops.state
        if state.last_compare is not None:
            carry: SymExpr = Flag("CF", *state.last_compare)
        else:
            carry = state.flags.get("CF") or state.allocator.fresh()
        if ops.instr.mnemonic == "sbb" and ops.instr.operands[0] == ops.instr.operands[1]:
            result = self.simplify(BinOp("-", Num(0), carry))
            ops.store(0, result)
            return [result, result]
        target, source = ops.load(0), ops.load(1)
        if ops.instr.mnemonic == "sbb":
            result = BinOp("-", BinOp("-", target, source), carry)
        else:
            result = BinOp("+", BinOp("+", target, source), carry)
        result = self.simplify(result)
        ops.store(0, result)
        return [result, source]

    def _call(self, ops: _Operands) -> list[SymExpr]:
        """Record the callee and the argument registers written since entry or the last call."""
        state = ops.state
        callee = ops.load(0)
        arguments: list[SymExpr] = []
        for register in ARGUMENT_REGISTERS:
            if register not in state.written_args:
                break
            arguments.append(state.read_register(register))
        state.registers["rax"] = state.allocator.fresh()
        state.written_args = frozenset()
        return [callee, *arguments]

    def _transfer(self, ops: _Operands) -> list[SymExpr]:
        return [ops.load(position) for position in range(len(ops))]

    def _sign_extend(self, ops: _Operands) -> list[SymExpr]:
        ops.state.write_register("rdx", ops.state.allocator.fresh())
        return []

    def _unsupported(self, ops: _Operands) -> list[SymExpr]:
        state = ops.state
        mnemonic = ops.instr.mnemonic
        operands = ops.instr.operands
        if mnemonic in _IMPLICIT_DEFS:
            for register in _IMPLICIT_DEFS[mnemonic]:
                state.write_register(register, state.allocator.fresh())
        if mnemonic in _BOTH_OPERAND_DEFS:
            written = set(range(len(operands)))
        elif mnemonic in _FIRST_OPERAND_DEFS or mnemonic.startswith(("cmov", "set")):
            written = {0} if operands else set()
        elif mnemonic in _IMPLICIT_DEFS or mnemonic in _NO_DEFS:
            written = set()
        else:
            written = {position for position, op in enumerate(operands) if op.is_register}
        for position in sorted(written):
            if operands[position].is_register or operands[position].is_memory:
                ops.store(position, state.allocator.fresh())
        values = []
        for position in range(len(operands)):
            values.append(ops.load(position))
        return values


_HANDLERS: dict[str, tuple[Handler, tuple[int, ...]]] = {
    "mov": (SymbolicExecutor._mov, (2,)),
    "movabs": (SymbolicExecutor._mov, (2,)),
    "lea": (SymbolicExecutor._lea, (2,)),
    "imul": (SymbolicExecutor._imul, (1, 2, 3)),
    "mul": (SymbolicExecutor._mul, (1,)),
    "inc": (SymbolicExecutor._unary, (1,)),
    "dec": (SymbolicExecutor._unary, (1,)),
    "neg": (SymbolicExecutor._unary, (1,)),
    "not": (SymbolicExecutor._unary, (1,)),
    "push": (SymbolicExecutor._push, (1,)),
    "pop": (SymbolicExecutor._pop, (1,)),
    "cmp": (SymbolicExecutor._compare, (2,)),
    "test": (SymbolicExecutor._compare, (2,)),
    "sbb": (SymbolicExecutor._carry, (2,)),
    "adc": (SymbolicExecutor._carry, (2,)),
    "call": (SymbolicExecutor._call, (1,)),
    "ret": (SymbolicExecutor._transfer, (0, 1)),
    "jmp": (SymbolicExecutor._transfer, (1,)),
}
for _mnemonic in _BINARY:
    _HANDLERS[_mnemonic] = (SymbolicExecutor._binary, (1, 2) if _mnemonic in _SHIFTS else (2,))
for _mnemonic in _SIGN_EXTEND_RDX:
    _HANDLERS[_mnemonic] = (SymbolicExecutor._sign_extend, (0,))


def _handler_for(mnemonic: str, arity: int) -> Optional[Handler]:
    if mnemonic in _NOPS:
        return SymbolicExecutor._transfer
    if is_conditional_jump(mnemonic):
        return SymbolicExecutor._transfer if arity == 1 else None
    entry = _HANDLERS.get(mnemonic)
    if entry is None or arity not in entry[1]:
        return None
    return entry[0]


def symbolic_step(instr: Instruction, state: MachineState) -> tuple[MachineState, list[SymExpr]]:
    """Execute one instruction; returns the post-state and one value per operand.

    Source operands are recorded as read, the destination after the write. A
    call records ``[callee, arg1, ..., argN]``.
    """
    result = SymbolicExecutor().step(instr, state)
    return result.state, list(result.values)


# -- traversal ------------------------------------------------------------------


def _merge(first: tuple, second: Optional[tuple]) -> tuple:
    if second is None:
        return first
    return tuple(
        iterate(value) if position < len(second) and value is not None and value != second[position] else value
        for position, value in enumerate(first)
    )


@dataclass(frozen=True, slots=True)
class OperandRecord:
    """Operand values of one instruction for the first and the optional second pass."""

    pass1: tuple[SymExpr, ...]
    addresses1: tuple[Optional[SymExpr], ...] = ()
    pass2: Optional[tuple[SymExpr, ...]] = None
    addresses2: Optional[tuple[Optional[SymExpr], ...]] = None

    @property
    def final(self) -> tuple[SymExpr, ...]:
        """Pass-1 values, with loop counters wrapped in ITER."""
        return _merge(self.pass1, self.pass2)

    @property
    def addresses(self) -> tuple[Optional[SymExpr], ...]:
        return _merge(self.addresses1, self.addresses2)


@dataclass
class TraversalRecord:
    entries: dict[int, OperandRecord] = field(default_factory=dict)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    steps: int = 0
    back_edges: list[tuple[int, int]] = field(default_factory=list)
    # (header block, natural loop body) per processed back edge
    loops: list[tuple[int, frozenset[int]]] = field(default_factory=list)

    def __contains__(self, address: int) -> bool:
        return address in self.entries

    def __getitem__(self, address: int) -> OperandRecord:
        return self.entries[address]

    def dump(self, function: Function) -> str:
        """One line per recorded instruction: ``addr: mnemonic ops ; 1st: e1,e2 ; 2nd: e1,e2``."""
        lines = []
        for instr in function.instructions:
            entry = self.entries.get(instr.address)
            if entry is None:
                continue
            operands = ", ".join(format_operand(op) for op in instr.operands)
            line = f"{instr.address:#x}: {instr.mnemonic} {operands}".rstrip()
            line += " ; 1st: " + ",".join(render(value) for value in entry.pass1)
            if entry.pass2 is not None:
                line += " ; 2nd: " + ",".join(render(value) for value in entry.pass2)
            lines.append(line)
        return "\n".join(lines)


@dataclass
class _Frame:
    block: int
    entry: MachineState
    exit: MachineState
    pending: list[int]


class Traversal:
    """Complete instruction traversal of one function."""

    def __init__(self, function: Function, cfg: Cfg, *, executor: Optional[SymbolicExecutor] = None) -> None:
        self.function = function
        self.cfg = cfg
        self.executor = executor or SymbolicExecutor()
        self.record = TraversalRecord()
        self._graph = cfg.to_networkx()
        self._dominators: Optional[dict[int, int]] = None

    def run(self) -> TraversalRecord:
        if not self.cfg.blocks:
            return self.record
        executed: set[int] = set()
        stack: list[_Frame] = []
        position: dict[int, int] = {}

        def enter(block: int, state: MachineState) -> None:
            executed.add(block)
            position[block] = len(stack)
            stack.append(_Frame(block, state, self._run_block(block, state, 1), list(self.cfg.successors(block))))

        enter(self.cfg.entry, seed_arguments(MachineState()))
        while stack:
            frame = stack[-1]
            if not frame.pending:
                stack.pop()
                del position[frame.block]
                continue
            child = frame.pending.pop(0)
            if child not in executed:
                enter(child, frame.exit.copy())
            elif child in position:
                self.lightweight_loop_processing(child, stack[position[child]:])

        self._report_coverage(executed)
        if self.executor.simplifier.exhausted:
            self.record.diagnostics.append(
                Diagnostic("budget", f"simplifier budget exhausted {self.executor.simplifier.exhausted} times")
            )
        return self.record

    def lightweight_loop_processing(self, header: int, path: list[_Frame]) -> None:
        """Run the header..latch path a second time and mark loop-carried values."""
        latch = path[-1].block
        self.record.back_edges.append((latch, header))
        if not self._dominates(header, latch):
            start = self.function.instructions[self.cfg.blocks[header].start].address
            self.record.diagnostics.append(
                Diagnostic("irreducible-loop", f"block {latch} re-enters block {header} from outside its loop", start)
            )
            logger.info("%s: irreducible loop at %#x processed as a plain revisit", self.function.label, start)
            return

        body = natural_loop(self.cfg, header, latch)
        self.record.loops.append((header, frozenset(body)))

        before = path[0].entry
        first = path[-1].exit
        second = first.copy()
        for frame in path:
            second = self._run_block(frame.block, second, 2)

        changed: dict[str, SymExpr] = {}
        for key in sorted(set(first.registers) | set(first.memory)):
            if first.initial_value(key) == second.initial_value(key):
                continue
            initial = before.initial_value(key)
            if initial is None and key in first.memory:
                initial = Mem(first.locations[key])
            changed[key] = iterate(initial if initial is not None else first.registers[key])
        for frame in path:
            for key, value in changed.items():
                if key in first.memory:
                    frame.exit.memory[key] = value
                    frame.exit.locations.setdefault(key, first.locations[key])
                else:
                    frame.exit.registers[key] = value
        logger.debug("%s: loop at block %d carries %s", self.function.label, header, sorted(changed))

    def _run_block(self, block_id: int, state: MachineState, run: int) -> MachineState:
        block = self.cfg.blocks[block_id]
        for index in block.indices():
            instr = self.function.instructions[index]
            result = self.executor.step(instr, state)
            state = result.state
            self.record.steps += 1
            entry = self.record.entries.get(instr.address)
            if run == 1 or entry is None:
                self.record.entries[instr.address] = OperandRecord(result.values, result.addresses)
                self.record.diagnostics.extend(result.diagnostics)
                for diagnostic in result.diagnostics:
                    logger.info("%s: %s", self.function.label, diagnostic)
            elif entry.pass2 is None:
                self.record.entries[instr.address] = replace(entry, pass2=result.values, addresses2=result.addresses)
        return state

    def _dominates(self, header: int, node: int) -> bool:
        if self._dominators is None:
            self._dominators = nx.immediate_dominators(self._graph, self.cfg.entry)
        while True:
            if node == header:
                return True
            parent = self._dominators.get(node)
            if parent is None or parent == node:
                return False
            node = parent

    def _report_coverage(self, executed: set[int]) -> None:
        dead = [block for block in self.cfg.blocks if block.id not in executed]
        if not dead:
            return
        count = sum(len(block) for block in dead)
        first = self.function.instructions[dead[0].start].address
        self.record.diagnostics.append(Diagnostic("coverage", f"{count} unreachable instructions not executed", first))
        logger.info("%s: %d unreachable instructions", self.function.label, count)


def natural_loop(cfg: Cfg, header: int, latch: int) -> set[int]:
    """Blocks of the natural loop closed by the back edge latch -> header."""
    graph = cfg.to_networkx()
    graph.remove_node(header)
    body = {header, latch}
    if latch != header:
        body |= nx.ancestors(graph, latch)
    return body


def traverse(function: Function, cfg: Cfg, *, simplifier: Optional[Simplifier] = None) -> TraversalRecord:
    return Traversal(function, cfg, executor=SymbolicExecutor(simplifier)).run()
