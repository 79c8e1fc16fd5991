"""errors.py - Exceptions raised by the harness, each mapped to a CLI exit code."""

from typing import Any, Dict


class BenchError(Exception):
    code = "bench_error"
    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_record(self) -> Dict[str, Any]:
        return {"error": self.code, "exit_code": self.exit_code, "message": self.message, "details": self.details}


class UsageError(BenchError):
    code, exit_code = "usage_error", 2


class InputMissingError(BenchError):
    code, exit_code = "input_missing", 3


class PredictionMismatchError(BenchError):
    code, exit_code = "prediction_mismatch", 4


class FingerprintMismatchError(BenchError):
    code, exit_code = "fingerprint_mismatch", 5


class CorpusReadError(BenchError):
    code, exit_code = "corpus_unreadable", 6


class CatalogError(BenchError):
    code, exit_code = "catalog_invalid", 6


class InstanceFileError(BenchError):
    code, exit_code = "artifact_invalid", 6


class EmptyEvaluationError(BenchError):
    code, exit_code = "empty_evaluation", 7
