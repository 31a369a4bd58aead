"""Hermetic character-level bigram backend.

The smallest model with hand-checkable probabilities: each character is
conditioned on the previous character of (prompt + response), with additive
smoothing over a fixed alphabet, so probabilities at every context sum to 1.
Two handles built from different corpora or smoothing give a policy /
reference pair with nontrivial reward gaps.
"""

from __future__ import annotations

import hashlib
import math
import random
import string
from typing import Sequence

from ..errors import ConfigError, DegenerateInputError
from .base import TextScorer

_BOS = ""  # context state before any character has been seen


class ToyBigramLM:
    """Deterministic char bigram model with add-alpha smoothing."""

    def __init__(self, corpus: str, smoothing: float = 1.0, seed: int = 0, alphabet: str | None = None):
        if not corpus:
            raise ConfigError("toy LM corpus must be nonempty")
        if not (smoothing > 0 and math.isfinite(smoothing)):
            raise ConfigError(f"smoothing must be a positive real, got {smoothing!r}")
        self.corpus = corpus
        self.smoothing = float(smoothing)
        self.seed = int(seed)
        self.alphabet = "".join(sorted(set(corpus) | set(alphabet or "")))

        counts: dict[str, dict[str, int]] = {}
        prev = _BOS
        for ch in corpus:
            row = counts.setdefault(prev, {})
            row[ch] = row.get(ch, 0) + 1
            prev = ch

        # Precomputed logprob rows: scoring is two dict lookups per char.
        alpha = self.smoothing
        v = len(self.alphabet)
        self._rows: dict[str, dict[str, float]] = {}
        for ctx in set(counts) | set(self.alphabet) | {_BOS}:
            row = counts.get(ctx, {})
            total = sum(row.values())
            denom = total + alpha * v
            self._rows[ctx] = {ch: math.log((row.get(ch, 0) + alpha) / denom) for ch in self.alphabet}

    def logprob(self, context: str, char: str) -> float:
        """log P(char | last character of context)."""
        ctx = context[-1] if context else _BOS
        return self._lookup(ctx, char)

    def _lookup(self, ctx: str, char: str) -> float:
        row = self._rows.get(ctx)
        if row is None:
            raise DegenerateInputError(f"context character {ctx!r} outside the model alphabet")
        lp = row.get(char)
        if lp is None:
            raise DegenerateInputError(f"character {char!r} outside the model alphabet")
        return lp

    def response_logprobs(self, prompt: str, response: str) -> list[float]:
        """One logprob per response character, conditioned on prompt + prefix."""
        rows = self._rows
        out = []
        ctx = prompt[-1] if prompt else _BOS
        for ch in response:
            row = rows.get(ctx)
            if row is None:
                raise DegenerateInputError(f"context character {ctx!r} outside the model alphabet")
            lp = row.get(ch)
            if lp is None:
                raise DegenerateInputError(f"character {ch!r} outside the model alphabet")
            out.append(lp)
            ctx = ch
        return out

    def sample(self, n_chars: int, rng: random.Random | None = None) -> str:
        """Draw text from the model; seeded by the handle's seed by default."""
        rng = rng or random.Random(self.seed)
        chars = list(self.alphabet)
        out = []
        ctx = _BOS
        for _ in range(n_chars):
            row = self._rows[ctx]
            weights = [math.exp(row[c]) for c in chars]
            ctx = rng.choices(chars, weights=weights, k=1)[0]
            out.append(ctx)
        return "".join(out)

    def config_digest(self) -> str:
        h = hashlib.sha256()
        for part in (self.corpus, repr(self.smoothing), str(self.seed), self.alphabet):
            h.update(part.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


def toy_lm(corpus: str, smoothing: float = 1.0, seed: int = 0, alphabet: str | None = None) -> ToyBigramLM:
    return ToyBigramLM(corpus, smoothing=smoothing, seed=seed, alphabet=alphabet)


class ToyScorer(TextScorer):
    """Policy/reference pair of bigram models behind the scorer contract."""

    def __init__(self, policy: ToyBigramLM, reference: ToyBigramLM):
        super().__init__()
        self.policy = policy
        self.reference = reference

    def _model(self, model_role: str) -> ToyBigramLM:
        if model_role == "policy":
            return self.policy
        if model_role == "reference":
            return self.reference
        raise ValueError(f"unknown model_role {model_role!r}")

    def _score_text(self, prompt: str, response: str, model_role: str) -> Sequence[float]:
        return self._model(model_role).response_logprobs(prompt, response)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(b"toy\x00")
        h.update(self.policy.config_digest().encode())
        h.update(self.reference.config_digest().encode())
        return h.hexdigest()


# Built-in corpora for the default toy backend: different character
# statistics on purpose, so the policy and reference disagree.
DEFAULT_POLICY_CORPUS = (
    "the quick brown fox jumps over the lazy dog while the rain in spain "
    "stays mainly in the plain and pack my box with five dozen liquor jugs"
)
DEFAULT_REFERENCE_CORPUS = (
    "colorless green ideas sleep furiously as zebras vex the jaded quorum "
    "of wizards briskly jumping over frozen glyphs in a quiet onyx vault"
)


def default_toy_scorer(seed: int = 0) -> ToyScorer:
    """Toy backend over printable ASCII, usable on arbitrary ASCII text."""
    alphabet = string.printable
    policy = ToyBigramLM(DEFAULT_POLICY_CORPUS, smoothing=0.5, seed=seed, alphabet=alphabet)
    reference = ToyBigramLM(DEFAULT_REFERENCE_CORPUS, smoothing=2.0, seed=seed + 1, alphabet=alphabet)
    return ToyScorer(policy, reference)
