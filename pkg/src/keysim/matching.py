"""1-to-n function matching and evaluation."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .diffing import FunctionSignature, check_compatible
from .errors import EmptyProgramError

logger = logging.getLogger(__name__)

DEFAULT_TOP_N = 10


@dataclass(frozen=True, slots=True)
class Candidate:
    target: FunctionSignature
    score: float


@dataclass(frozen=True, slots=True)
class QueryRanking:
    query: FunctionSignature
    candidates: tuple[Candidate, ...]

    @property
    def correct_rank(self) -> Optional[int]:
        """1-based position of the first same-named candidate, if retained."""
        if self.query.name is None:
            return None
        for rank, candidate in enumerate(self.candidates, start=1):
            if candidate.target.name == self.query.name:
                return rank
        return None


@dataclass(frozen=True, slots=True)
class MatchSummary:
    precision_at_1: Optional[float]
    recall_at_top_n: Optional[float]
    eligible: int
    correct: int
    query_functions: int
    target_functions: int
    skipped: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class MatchReport:
    rankings: tuple[QueryRanking, ...]
    summary: MatchSummary
    top_n: int = DEFAULT_TOP_N


@dataclass
class _Matrix:
    slots: np.ndarray
    empty: np.ndarray
    k: int


def _matrix(signatures: Sequence[FunctionSignature]) -> _Matrix:
    k = signatures[0].signature.k if signatures else 0
    slots = np.array([item.signature.slots for item in signatures], dtype=np.uint64).reshape(len(signatures), k)
    empty = np.array([item.signature.empty for item in signatures], dtype=bool)
    return _Matrix(slots, empty, k)


def score_row(query: FunctionSignature, targets: _Matrix) -> np.ndarray:
    """Similarity of one query against every target, same values as ``diffing.similarity``."""
    if query.signature.empty:
        return targets.empty.astype(float)
    row = np.array(query.signature.slots, dtype=np.uint64)
    scores = np.count_nonzero(targets.slots == row, axis=1) / float(targets.k)
    scores[targets.empty] = 0.0
    return scores


def rank_all(
    queries: Sequence[Optional[FunctionSignature]],
    targets: Sequence[FunctionSignature],
    *,
    top_n: int = DEFAULT_TOP_N,
    skipped: Sequence[str] = (),
) -> MatchReport:
    """Rank every target for every query: score descending, then target entry ascending."""
    if not targets:
        raise EmptyProgramError("target program has no functions to compare against")
    if top_n < 1:
        raise ValueError("top_n must be at least 1")
    available = [query for query in queries if query is not None]
    for item in [*available, *targets]:
        check_compatible(targets[0].signature, item.signature)

    matrix = _matrix(targets)
    rankings = []
    for query in available:
        scores = score_row(query, matrix)
        order = sorted(range(len(targets)), key=lambda index: (-scores[index], targets[index].entry))
        rankings.append(
            QueryRanking(
                query=query,
                candidates=tuple(Candidate(targets[index], float(scores[index])) for index in order[:top_n]),
            )
        )

    target_names = {target.name for target in targets if target.name is not None}
    summary = summarize(rankings, target_names, query_functions=len(queries), target_functions=len(targets), skipped=skipped)
    logger.info("ranked %d queries against %d targets", len(rankings), len(targets))
    return MatchReport(rankings=tuple(rankings), summary=summary, top_n=top_n)


def summarize(
    rankings: Sequence[QueryRanking],
    target_names: set[str],
    *,
    query_functions: int,
    target_functions: int,
    skipped: Sequence[str] = (),
) -> MatchSummary:
    eligible = [ranking for ranking in rankings if ranking.query.name in target_names]
    correct = sum(1 for ranking in eligible if ranking.correct_rank == 1)
    found = sum(1 for ranking in eligible if ranking.correct_rank is not None)
    return MatchSummary(
        precision_at_1=correct / len(eligible) if eligible else None,
        recall_at_top_n=found / len(eligible) if eligible else None,
        eligible=len(eligible),
        correct=correct,
        query_functions=query_functions,
        target_functions=target_functions,
        skipped=tuple(skipped),
    )


def precision_at_1(report: MatchReport, target_names: Optional[set[str]] = None) -> Optional[float]:
    """Share of eligible queries whose top candidate has the query's name; None when none is eligible.

    Eligibility is decided against ``target_names`` when given, otherwise the
    report's own summary is returned.
    """
    if target_names is None:
        return report.summary.precision_at_1
    summary = summarize(
        report.rankings,
        target_names,
        query_functions=report.summary.query_functions,
        target_functions=report.summary.target_functions,
    )
    return summary.precision_at_1


# -- report formats -------------------------------------------------------------


class CandidatePayload(BaseModel):
    rank: int
    name: Optional[str]
    entry: int
    score: float
    correct: Optional[bool]


class RankingPayload(BaseModel):
    name: Optional[str]
    entry: int
    correct_rank: Optional[int]
    candidates: list[CandidatePayload]


class SummaryPayload(BaseModel):
    precision_at_1: Optional[float]
    recall_at_top_n: Optional[float]
    eligible: int
    correct: int
    query_functions: int
    target_functions: int
    skipped: list[str]


class ReportDocument(BaseModel):
    tool: str = "keysim"
    version: str
    config: dict[str, Any]
    binaries: dict[str, str]
    summary: SummaryPayload
    analysis: dict[str, Any]
    rankings: list[RankingPayload]


def _is_correct(query: FunctionSignature, candidate: Candidate) -> Optional[bool]:
    if query.name is None:
        return None
    return candidate.target.name == query.name


def report_json(
    report: MatchReport,
    *,
    version: str,
    config: dict[str, Any],
    binaries: dict[str, str],
    analysis: Optional[dict[str, Any]] = None,
) -> str:
    summary = report.summary
    document = ReportDocument(
        version=version,
        config=config,
        binaries=binaries,
        summary=SummaryPayload(
            precision_at_1=summary.precision_at_1,
            recall_at_top_n=summary.recall_at_top_n,
            eligible=summary.eligible,
            correct=summary.correct,
            query_functions=summary.query_functions,
            target_functions=summary.target_functions,
            skipped=list(summary.skipped),
        ),
        analysis=analysis or {},
        rankings=[
            RankingPayload(
                name=ranking.query.name,
                entry=ranking.query.entry,
                correct_rank=ranking.correct_rank,
                candidates=[
                    CandidatePayload(
                        rank=rank,
                        name=candidate.target.name,
                        entry=candidate.target.entry,
                        score=candidate.score,
                        correct=_is_correct(ranking.query, candidate),
                    )
                    for rank, candidate in enumerate(ranking.candidates, start=1)
                ],
            )
            for ranking in report.rankings
        ],
    )
    return document.model_dump_json(indent=2) + "\n"


CSV_HEADER = ("query", "target", "score", "rank", "correct")


def report_csv(report: MatchReport, *, version: str, config: dict[str, Any]) -> str:
    """Ranking rows under a ``# keysim <version> key=value ...`` comment line."""
    buffer = io.StringIO()
    settings = " ".join(f"{key}={value}" for key, value in config.items())
    buffer.write(f"# keysim {version} {settings}".rstrip() + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for ranking in report.rankings:
        for rank, candidate in enumerate(ranking.candidates, start=1):
            correct = _is_correct(ranking.query, candidate)
            writer.writerow(
                (
                    ranking.query.label,
                    candidate.target.label,
                    f"{candidate.score:.6f}",
                    rank,
                    "" if correct is None else str(correct).lower(),
                )
            )
    return buffer.getvalue()
