"""Settings for the analysis pipeline."""

from __future__ import annotations

import logging
import os
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .cfg import DEFAULT_MIN_BLOCKS
from .diffing import DEFAULT_K, DEFAULT_SHINGLE
from .matching import DEFAULT_TOP_N
from .simplify import DEFAULT_RULE_BUDGET

ENV_PREFIX = "KEYSIM_"

# Fields that change results; they are written into every report and signature file.
REPORTED_FIELDS = ("min_blocks", "minhash_k", "shingle_w", "master_seed", "top_n", "rule_budget")


def _env_key(field_name: str) -> str:
    return f"{ENV_PREFIX}{field_name.upper()}"


class KeysimSettings(BaseModel):
    """Typed configuration object that can source values from env vars."""

    model_config = ConfigDict(extra="ignore", frozen=True)

    min_blocks: int = Field(DEFAULT_MIN_BLOCKS, ge=1, description="Smallest CFG, in basic blocks, worth comparing")
    minhash_k: int = Field(DEFAULT_K, ge=1, description="MinHash slots per signature")
    shingle_w: int = Field(DEFAULT_SHINGLE, ge=1, description="Token w-gram width")
    master_seed: int = Field(0, ge=0, lt=1 << 32, description="Seed of the MinHash permutations")
    top_n: int = Field(DEFAULT_TOP_N, ge=1, description="Candidates kept per query function")
    rule_budget: int = Field(DEFAULT_RULE_BUDGET, ge=1, description="Rewrite applications per simplification")
    workers: int = Field(1, ge=1, description="Analysis processes")
    log_level: str = Field("WARNING", description="Logging level used by the CLI")

    def __init__(self, **data: Any):
        # Pull env vars that were not explicitly provided.
        env_values = {}
        for field_name in self.__class__.model_fields:
            if field_name in data:
                continue
            env_value = os.getenv(_env_key(field_name))
            if env_value is not None:
                env_values[field_name] = env_value
        merged_data = {**env_values, **data}
        super().__init__(**merged_data)

    @field_validator("log_level", mode="before")
    @classmethod
    def _normalize_level(cls, value: Any) -> Any:
        if isinstance(value, str):
            value = value.strip().upper()
            if not isinstance(logging.getLevelName(value), int):
                raise ValueError(f"unknown log level {value!r}")
        return value

    def report_params(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in REPORTED_FIELDS}
