"""Per-function pipeline from instructions to a MinHash signature."""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .cfg import DEFAULT_MIN_BLOCKS, build_cfg, filter_functions
from .config import KeysimSettings
from .diffing import DEFAULT_K, DEFAULT_SHINGLE, FunctionSignature, MinHashSignature, signature, tokenize_all
from .errors import FunctionNotFoundError, KeysimError
from .graph import KeyNode, KeySemGraph, break_loops, build_key_semantics_graph, topo_serialize
from .keysem import KeyExpr, key_expressions
from .models import Cfg, Diagnostic, Function, Program
from .simplify import DEFAULT_RULE_BUDGET, Simplifier
from .symexec import SymbolicExecutor, Traversal, TraversalRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class AnalysisParams:
    """The settings a worker process needs, detached from the environment."""

    min_blocks: int = DEFAULT_MIN_BLOCKS
    k: int = DEFAULT_K
    seed: int = 0
    w: int = DEFAULT_SHINGLE
    rule_budget: int = DEFAULT_RULE_BUDGET

    @classmethod
    def from_settings(cls, settings: KeysimSettings) -> "AnalysisParams":
        return cls(
            min_blocks=settings.min_blocks,
            k=settings.minhash_k,
            seed=settings.master_seed,
            w=settings.shingle_w,
            rule_budget=settings.rule_budget,
        )


@dataclass(frozen=True, slots=True)
class FunctionAnalysis:
    function: Function
    cfg: Cfg
    record: TraversalRecord
    keys: tuple[tuple[int, KeyExpr], ...]
    graph: KeySemGraph
    serialized: tuple[KeyNode, ...]
    tokens: tuple[str, ...]
    signature: MinHashSignature

    @property
    def diagnostics(self) -> tuple[Diagnostic, ...]:
        return self.cfg.diagnostics + tuple(self.record.diagnostics)


def analyze_function(function: Function, params: AnalysisParams = AnalysisParams()) -> FunctionAnalysis:
    simplifier = Simplifier(params.rule_budget)
    cfg = build_cfg(function)
    record = Traversal(function, cfg, executor=SymbolicExecutor(simplifier)).run()
    keys = tuple(key_expressions(function, record, simplifier=simplifier))
    graph = break_loops(build_key_semantics_graph(function, cfg, keys))
    serialized = tuple(topo_serialize(graph))
    tokens = tuple(tokenize_all(serialized))
    return FunctionAnalysis(
        function=function,
        cfg=cfg,
        record=record,
        keys=keys,
        graph=graph,
        serialized=serialized,
        tokens=tokens,
        signature=signature(tokens, k=params.k, seed=params.seed, w=params.w),
    )


@dataclass(frozen=True, slots=True)
class _Outcome:
    signature: Optional[FunctionSignature]
    diagnostics: tuple[Diagnostic, ...] = ()
    empty_graph: bool = False
    error: Optional[str] = None


def _analyze_for_signature(function: Function, params: AnalysisParams) -> _Outcome:
    try:
        analysis = analyze_function(function, params)
    except KeysimError as exc:
        return _Outcome(signature=None, error=str(exc))
    return _Outcome(
        signature=FunctionSignature(entry=function.entry, name=function.name, signature=analysis.signature),
        diagnostics=analysis.diagnostics,
        empty_graph=not analysis.graph.nodes,
    )


@dataclass(frozen=True)
class ProgramAnalysis:
    binary: str
    total_functions: int
    # None where the analysis of that function failed
    signatures: tuple[Optional[FunctionSignature], ...]
    skipped: tuple[str, ...] = ()
    empty_graphs: tuple[str, ...] = ()
    diagnostic_counts: dict[str, int] = field(default_factory=dict)

    @property
    def analyzed(self) -> list[FunctionSignature]:
        return [item for item in self.signatures if item is not None]

    def stats(self) -> dict[str, object]:
        return {
            "total_functions": self.total_functions,
            "eligible_functions": len(self.signatures),
            "filtered_functions": self.total_functions - len(self.signatures),
            "empty_graphs": len(self.empty_graphs),
            "skipped": list(self.skipped),
            "diagnostics": dict(sorted(self.diagnostic_counts.items())),
        }


def analyze_program(program: Program, params: AnalysisParams = AnalysisParams(), *, workers: int = 1) -> ProgramAnalysis:
    """Signatures of every function with at least ``params.min_blocks`` blocks, in program order."""
    functions = list(filter_functions(program, params.min_blocks))
    logger.info(
        "%s: %d of %d functions have >= %d blocks",
        program.binary or "program",
        len(functions),
        len(program),
        params.min_blocks,
    )
    if workers > 1 and len(functions) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_analyze_for_signature, functions, [params] * len(functions)))
    else:
        outcomes = [_analyze_for_signature(function, params) for function in functions]

    counts: Counter[str] = Counter()
    skipped = []
    for function, outcome in zip(functions, outcomes):
        counts.update(diagnostic.kind for diagnostic in outcome.diagnostics)
        if outcome.error is not None:
            logger.warning("%s: analysis failed: %s", function.label, outcome.error)
            skipped.append(function.label)
    return ProgramAnalysis(
        binary=program.binary,
        total_functions=len(program),
        signatures=tuple(outcome.signature for outcome in outcomes),
        skipped=tuple(skipped),
        empty_graphs=tuple(function.label for function, outcome in zip(functions, outcomes) if outcome.empty_graph),
        diagnostic_counts=dict(counts),
    )


def select_function(program: Program, selector: str) -> Function:
    """Find a function by name, ``sub_<hex>`` label or entry address."""
    for function in program:
        if selector in (function.name, function.label):
            return function
    try:
        entry = int(selector, 0)
    except ValueError:
        entry = None
    for function in program:
        if function.entry == entry:
            return function
    raise FunctionNotFoundError(selector, [f"{function.label} ({function.entry:#x})" for function in program])

