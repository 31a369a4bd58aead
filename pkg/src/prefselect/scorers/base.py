"""Common contract for per-token logprob backends.

A backend produces one natural-log probability per response token for a
(pair, side, model_role) request. Tokenization belongs to the backend; the
rest of the pipeline never re-tokenizes. Backends must be safe to call from
multiple worker threads, and call accounting is atomic.
"""

from __future__ import annotations

import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

from ..dataset_io import PreferencePair
from ..errors import DegenerateInputError, NumericError

SIDES = ("chosen", "rejected")
MODEL_ROLES = ("policy", "reference")


@dataclass(frozen=True, slots=True)
class TokenLogProbs:
    """Per-token log-probabilities of one response under one model role."""

    pair_id: str
    side: str
    model_role: str
    logprobs: tuple[float, ...]
    token_count: int

    @classmethod
    def build(cls, pair_id: str, side: str, model_role: str, logprobs: Sequence[float]) -> "TokenLogProbs":
        if side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {side!r}")
        if model_role not in MODEL_ROLES:
            raise ValueError(f"model_role must be one of {MODEL_ROLES}, got {model_role!r}")
        values = tuple(float(x) for x in logprobs)
        if not values:
            raise DegenerateInputError(f"response for pair {pair_id!r} ({side}) produced zero tokens")
        for x in values:
            if not math.isfinite(x):
                raise NumericError(f"non-finite logprob for pair {pair_id!r} ({side}, {model_role})")
            if x > 0.0:
                raise NumericError(f"positive logprob {x!r} for pair {pair_id!r} ({side}, {model_role})")
        return cls(pair_id, side, model_role, values, len(values))


class ScorerStats:
    """Thread-safe call and token accounting, keyed by (model_role, side)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._calls = {(role, side): 0 for role in MODEL_ROLES for side in SIDES}
        self._tokens = 0

    def record(self, model_role: str, side: str, token_count: int) -> None:
        with self._lock:
            self._calls[(model_role, side)] += 1
            self._tokens += token_count

    def calls(self, model_role: str | None = None, side: str | None = None) -> int:
        with self._lock:
            return sum(
                n
                for (role, sd), n in self._calls.items()
                if (model_role is None or role == model_role) and (side is None or sd == side)
            )

    @property
    def total_calls(self) -> int:
        return self.calls()

    @property
    def total_tokens(self) -> int:
        with self._lock:
            return self._tokens

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "calls": {f"{role}/{side}": n for (role, side), n in self._calls.items()},
                "total_calls": sum(self._calls.values()),
                "total_tokens": self._tokens,
            }

    def reset(self) -> None:
        with self._lock:
            for key in self._calls:
                self._calls[key] = 0
            self._tokens = 0


class LogprobSource(ABC):
    """A configured (policy, reference) scoring backend."""

    def __init__(self):
        self.stats = ScorerStats()

    @abstractmethod
    def fingerprint(self) -> str:
        """Digest identifying the backend configuration (for cache keys)."""

    @abstractmethod
    def score(self, pair: PreferencePair, side: str, model_role: str) -> TokenLogProbs:
        """Score one response of one pair under one model role."""


class TextScorer(LogprobSource):
    """Backend that scores raw (prompt, response) text, e.g. toy or remote."""

    @abstractmethod
    def _score_text(self, prompt: str, response: str, model_role: str) -> Sequence[float]:
        ...

    def score_response(
        self,
        prompt: str,
        response: str,
        model_role: str,
        pair_id: str = "",
        side: str = "chosen",
    ) -> TokenLogProbs:
        if not response:
            raise DegenerateInputError(f"empty response for pair {pair_id!r} ({side})")
        values = self._score_text(prompt, response, model_role)
        result = TokenLogProbs.build(pair_id, side, model_role, values)
        self.stats.record(model_role, side, result.token_count)
        return result

    def score(self, pair: PreferencePair, side: str, model_role: str) -> TokenLogProbs:
        response = pair.chosen if side == "chosen" else pair.rejected
        return self.score_response(pair.prompt, response, model_role, pair_id=pair.id, side=side)
