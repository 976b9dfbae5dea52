"""Function similarity for x86-64 binaries through key instruction semantics."""

from .analysis import AnalysisParams, FunctionAnalysis, analyze_function, analyze_program
from .config import KeysimSettings
from .diffing import MinHashSignature, exact_jaccard, signature, similarity, tokenize
from .keysem import KeyExpr, KeyKind, classify
from .listing import parse_listing, serialize_listing
from .matching import MatchReport, precision_at_1, rank_all
from .models import Function, Instruction, Program
from .objdump import parse_objdump
from .simplify import simplify

__all__ = [
    "AnalysisParams",
    "FunctionAnalysis",
    "Function",
    "Instruction",
    "KeyExpr",
    "KeyKind",
    "KeysimSettings",
    "MatchReport",
    "MinHashSignature",
    "Program",
    "analyze_function",
    "analyze_program",
    "classify",
    "exact_jaccard",
    "parse_listing",
    "parse_objdump",
    "precision_at_1",
    "rank_all",
    "serialize_listing",
    "signature",
    "similarity",
    "simplify",
    "tokenize",
]

__version__ = "0.1.0"
