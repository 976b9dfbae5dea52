"""Tokenization of serialized key expressions and MinHash signatures."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from datasketch import LeanMinHash, MinHash
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ListingParseError, SignatureMismatchError
from .expr import Mem, SymExpr, lexemes
from .graph import KeyNode
from .keysem import KeyExpr, KeyKind

DEFAULT_K = 128
DEFAULT_SHINGLE = 1
WHILE_TOKEN = "WHILE"

# datasketch keeps 32-bit hash values; an empty MinHash holds this in every slot.
MAX_SLOT = (1 << 32) - 1

_CLOSERS = {"[": "]"}

TokenSeq = list[str]


def expression_tokens(expr: SymExpr) -> TokenSeq:
    """Operands and operators of expr, each wrapped in its enclosing brackets.

    ``+`` is dropped; a leading ``-`` is its own token.
    """
    tokens: TokenSeq = []
    openers: list[str] = []
    for kind, text in lexemes(expr, hints=False):
        if kind == "open":
            openers.append(text)
        elif kind == "close":
            openers.pop()
        elif kind == "sep" or (kind == "op" and text == "+"):
            continue
        else:
            for opener in reversed(openers):
                text = f"{opener}{text}{_CLOSERS.get(opener, ')')}"
            tokens.append(text)
    return tokens


def tokenize(node: Union[KeyNode, tuple[KeyExpr, bool]]) -> TokenSeq:
    if isinstance(node, KeyNode):
        expr, while_marker = node.expr, node.while_marker
    else:
        expr, while_marker = node
    tokens: TokenSeq = [WHILE_TOKEN] if while_marker else []
    if expr.kind is KeyKind.CALL:
        for argument in expr.operands:
            tokens.extend(f"RET_({token})" for token in expression_tokens(argument))
    elif expr.kind is KeyKind.COMPARE:
        for operand in expr.operands:
            tokens.extend(f"cmp {token}" for token in expression_tokens(operand))
    elif expr.kind is KeyKind.BRANCH:
        tokens.extend(f"branch {token}" for token in expression_tokens(expr.operands[0]))
    else:
        address, value = expr.operands
        tokens.extend(f"{token}=" for token in expression_tokens(Mem(address)))
        tokens.extend(f"={token}" for token in expression_tokens(value))
    return tokens


def tokenize_all(nodes: Iterable[KeyNode]) -> TokenSeq:
    """Concatenated token stream of a serialized key-semantics graph."""
    stream: TokenSeq = []
    for node in nodes:
        stream.extend(tokenize(node))
    return stream


def shingles(tokens: Sequence[str], w: int = DEFAULT_SHINGLE) -> set[str]:
    if w < 1:
        raise ValueError("shingle width must be at least 1")
    if not tokens:
        return set()
    if len(tokens) <= w:
        return {"\x1f".join(tokens)}
    return {"\x1f".join(tokens[start : start + w]) for start in range(len(tokens) - w + 1)}


@dataclass(frozen=True, slots=True)
class MinHashSignature:
    slots: tuple[int, ...]
    k: int = DEFAULT_K
    seed: int = 0
    w: int = DEFAULT_SHINGLE
    empty: bool = False

    @property
    def params(self) -> tuple[int, int, int]:
        return (self.k, self.seed, self.w)

    def to_minhash(self) -> LeanMinHash:
        return LeanMinHash(seed=self.seed, hashvalues=np.array(self.slots, dtype=np.uint64))


@lru_cache(maxsize=8)
def _permutations(k: int, seed: int) -> np.ndarray:
    return MinHash(num_perm=k, seed=seed).permutations


def signature(tokens: Sequence[str], *, k: int = DEFAULT_K, seed: int = 0, w: int = DEFAULT_SHINGLE) -> MinHashSignature:
    """MinHash of the w-gram shingle set of a token stream."""
    if k < 1:
        raise ValueError("k must be at least 1")
    grams = shingles(tokens, w)
    if not grams:
        return MinHashSignature(slots=(MAX_SLOT,) * k, k=k, seed=seed, w=w, empty=True)
    minhash = MinHash(num_perm=k, seed=seed, permutations=_permutations(k, seed))
    minhash.update_batch([gram.encode("utf-8") for gram in sorted(grams)])
    return MinHashSignature(slots=tuple(int(value) for value in minhash.hashvalues), k=k, seed=seed, w=w)


def check_compatible(a: MinHashSignature, b: MinHashSignature) -> None:
    if a.params != b.params or len(a.slots) != len(b.slots):
        raise SignatureMismatchError(f"signature parameters differ: (k, seed, w) {a.params} vs {b.params}")


def similarity(a: MinHashSignature, b: MinHashSignature) -> float:
    """Fraction of equal slots, an estimate of the Jaccard similarity of the shingle sets."""
    check_compatible(a, b)
    if a.empty and b.empty:
        return 1.0
    if a.empty or b.empty:
        return 0.0
    try:
        return float(a.to_minhash().jaccard(b.to_minhash()))
    except ValueError as exc:
        raise SignatureMismatchError(str(exc)) from exc


def exact_jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    first, second = set(a), set(b)
    if not first and not second:
        return 1.0
    return len(first & second) / len(first | second)


@dataclass(frozen=True, slots=True)
class FunctionSignature:
    entry: int
    signature: MinHashSignature
    name: Optional[str] = None

    @property
    def label(self) -> str:
        return self.name or f"sub_{self.entry:x}"


# -- signature files --------------------------------------------------------------


class SignatureParams(BaseModel):
    k: int = Field(ge=1)
    w: int = Field(ge=1)
    seed: int = Field(ge=0)


class FunctionSignaturePayload(BaseModel):
    model_config = ConfigDict(extra="ignore")

    name: Optional[str] = None
    entry: int = Field(ge=0)
    slots: list[int]
    empty: bool = False


class SignatureFile(BaseModel):
    model_config = ConfigDict(extra="ignore")

    params: SignatureParams
    binary: str = ""
    functions: list[FunctionSignaturePayload] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_slot_counts(self) -> "SignatureFile":
        for function in self.functions:
            if len(function.slots) != self.params.k:
                raise ValueError(f"function at entry {function.entry} has {len(function.slots)} slots, expected {self.params.k}")
        return self


def dump_signatures(binary: str, signatures: Sequence[FunctionSignature], *, k: int, seed: int, w: int) -> str:
    document = SignatureFile(
        params=SignatureParams(k=k, w=w, seed=seed),
        binary=binary,
        functions=[
            FunctionSignaturePayload(
                name=item.name,
                entry=item.entry,
                slots=list(item.signature.slots),
                empty=item.signature.empty,
            )
            for item in signatures
        ],
    )
    return document.model_dump_json(indent=2) + "\n"


def load_signatures(text: Union[str, bytes]) -> tuple[str, SignatureParams, list[FunctionSignature]]:
    """Read a signature file; returns the binary name, its parameters and the signatures."""
    try:
        document = SignatureFile.model_validate_json(text)
    except ValidationError as exc:
        raise ListingParseError(f"invalid signature file: {exc.errors()[0].get('msg')}") from exc
    params = document.params
    signatures = [
        FunctionSignature(
            entry=payload.entry,
            name=payload.name,
            signature=MinHashSignature(
                slots=tuple(payload.slots),
                k=params.k,
                seed=params.seed,
                w=params.w,
                empty=payload.empty,
            ),
        )
        for payload in document.functions
    ]
    return document.binary, params, signatures
