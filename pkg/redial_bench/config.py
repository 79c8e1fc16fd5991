"""config.py - Configuration for the ReDial evaluation harness
Centralized defaults for preprocessing, scoring and parallelism.
Precedence: command-line flags > --config YAML file > values below."""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from redial_bench.errors import InputMissingError, UsageError

# === Environment ===
THREADS_ENV = "REDIAL_BENCH_THREADS"

# === Preprocessing defaults ===
DEFAULT_SPLIT = "test"
DEFAULT_VARIANT = "standard"
DEFAULT_GT_MODE = "mentioned"       # "mentioned" or "suggested-only"
DEFAULT_STRICT_VALIDATION = False   # drop dialogues with validation issues

# === Scoring defaults ===
DEFAULT_K = [1, 10, 50]
DEFAULT_SR_CUTOFF = 1               # calibrated against the naive SR/RDL anchor
MAX_SR_CUTOFF = 50
DEFAULT_RDL_DENOMINATOR = "all-turns"   # or "recommender-turns"
DEFAULT_RECALL_AVERAGE = "macro"        # or "micro"
DEFAULT_NAIVE_SCOPE = "both-speakers"   # or "seeker-only"

# === Negative ids for items a catalog cannot resolve ===
FIRST_NEGATIVE_ID = -101

# Toggles that change instance files. Scoring toggles are added for reports.
PREPROCESSING_KEYS = ("split", "variant", "gt_mode", "strict_validation", "catalog")
SCORING_KEYS = ("k", "sr_cutoff", "rdl_denominator", "recall_average")
BASELINE_KEYS = ("naive_scope",)
FINGERPRINT_LENGTH = 16


def default_threads() -> int:
    """Thread cap from REDIAL_BENCH_THREADS, else min(8, cpu count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return min(8, os.cpu_count() or 1)


class BenchConfig(BaseModel):
    """Effective configuration of one invocation."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    split: Literal["train", "test"] = DEFAULT_SPLIT
    variant: Literal["standard", "dedup"] = DEFAULT_VARIANT
    catalog: Optional[str] = None
    k: List[int] = Field(default_factory=lambda: list(DEFAULT_K))
    sr_cutoff: int = Field(default=DEFAULT_SR_CUTOFF, ge=1, le=MAX_SR_CUTOFF)
    rdl_denominator: Literal["all-turns", "recommender-turns"] = DEFAULT_RDL_DENOMINATOR
    gt_mode: Literal["mentioned", "suggested-only"] = DEFAULT_GT_MODE
    recall_average: Literal["macro", "micro"] = DEFAULT_RECALL_AVERAGE
    naive_scope: Literal["both-speakers", "seeker-only"] = DEFAULT_NAIVE_SCOPE
    strict_validation: bool = DEFAULT_STRICT_VALIDATION
    threads: int = Field(default_factory=default_threads, ge=1)

    @field_validator("k")
    @classmethod
    def _check_k(cls, value: List[int]) -> List[int]:
        if not value or any(k < 1 for k in value):
            raise ValueError("every cutoff in k must be >= 1")
        return sorted(set(value))

    def subset(self, keys) -> Dict[str, Any]:
        data = self.model_dump()
        return {key: data[key] for key in keys}

    def fingerprint(self, keys) -> str:
        return config_fingerprint(self.subset(keys))


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_fingerprint(mapping: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON of a toggle mapping, truncated."""
    digest = hashlib.sha256(canonical_json(dict(mapping)).encode("utf-8")).hexdigest()
    return digest[:FINGERPRINT_LENGTH]


def parse_k(text: str) -> List[int]:
    """'1,10,50' -> [1, 10, 50]"""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"--k expects a comma-separated list of integers, got {text!r}")


def load_config_file(path: Optional[Path]) -> Dict[str, Any]:
    if path is None:
        return {}
    if not path.exists():
        raise InputMissingError(f"config file not found: {path}", path=str(path))
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must contain a mapping")
    # YAML files may use the flag spelling (sr-cutoff) or the field name
    return {str(key).replace("-", "_"): value for key, value in data.items()}


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> BenchConfig:
    """Merge defaults, the YAML file and command-line overrides (None = not given)."""
    merged: Dict[str, Any] = load_config_file(path)
    merged.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        return BenchConfig(**merged)
    except ValidationError as e:
        raise UsageError(f"invalid configuration: {e.errors(include_url=False)}")
