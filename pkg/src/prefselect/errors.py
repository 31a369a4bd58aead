"""Exception hierarchy and process exit codes."""

from __future__ import annotations


class PrefSelectError(Exception):
    """Base class for all errors raised by this package."""


class RecordError(PrefSelectError):
    """A single input record is malformed or violates a field invariant."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class DatasetError(PrefSelectError):
    """A dataset-level invariant is violated (e.g. duplicate ids)."""


class ConfigError(PrefSelectError):
    """Invalid configuration value or combination."""


class SourceError(PrefSelectError):
    """A logprob backend is unavailable or returned an invalid payload."""


class DegenerateInputError(PrefSelectError):
    """Input that cannot be scored or summarized (zero tokens, empty scope)."""


class AlignmentError(PrefSelectError):
    """Token counts disagree between inputs that must share a tokenization."""


class NumericError(PrefSelectError):
    """Non-finite or out-of-range numeric input (e.g. a positive logprob)."""


class IntegrityError(PrefSelectError):
    """Duplicate key or corrupted record inside a logprob store."""


class StaleCacheError(PrefSelectError):
    """A gap cache does not match the active dataset/backend/beta."""


class ConsistencyError(PrefSelectError):
    """Cross-artifact mismatch (selection ids vs pairs, differing datasets)."""


class GapComputationError(PrefSelectError):
    """One or more pairs failed to score; carries the per-pair failures."""

    def __init__(self, failures):
        self.failures = list(failures)
        shown = ", ".join(f"{f.pair_id}: {f.error}" for f in self.failures[:5])
        more = "" if len(self.failures) <= 5 else f" (+{len(self.failures) - 5} more)"
        super().__init__(f"{len(self.failures)} pair(s) failed to score: {shown}{more}")


# CLI exit codes (argparse reserves 2 for usage errors).
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SCORER = 4
EXIT_STALE_CACHE = 5
EXIT_CONSISTENCY = 6
