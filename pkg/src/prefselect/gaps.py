"""Implicit rewards, reward gaps, and the analytic functions built on them.

The implicit reward of a response is beta times the summed per-token
log-ratio between policy and reference. The reward gap of a pair is the
chosen reward minus the rejected reward; smaller (signed) gaps mark harder
pairs. Loss, gradient weighting, and preference entropy are pure scalar
functions of the gap, computed in overflow-safe forms.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

from .dataset_io import PreferencePair
from .errors import (
    AlignmentError,
    GapComputationError,
    NumericError,
    PrefSelectError,
    RecordError,
    StaleCacheError,
)
from .scorers.base import LogprobSource, TokenLogProbs

DEFAULT_BETA = 0.1


def sigmoid(z: float) -> float:
    """Logistic function, stable for any finite argument."""
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def softplus(z: float) -> float:
    """log(1 + exp(z)) without overflow; equals z + softplus(-z) for z > 0."""
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def implicit_reward(logprobs_policy: TokenLogProbs, logprobs_ref: TokenLogProbs, beta: float = DEFAULT_BETA) -> float:
    """beta * sum_t (log pi_policy[t] - log pi_ref[t]) over response tokens.

    Both inputs must describe the same (pair, side) and agree token for
    token; the per-token ratio is only meaningful when policy and reference
    share a tokenization.
    """
    if (logprobs_policy.pair_id, logprobs_policy.side) != (logprobs_ref.pair_id, logprobs_ref.side):
        raise AlignmentError(
            f"mismatched inputs: ({logprobs_policy.pair_id!r}, {logprobs_policy.side}) vs "
            f"({logprobs_ref.pair_id!r}, {logprobs_ref.side})"
        )
    if logprobs_policy.token_count != logprobs_ref.token_count:
        raise AlignmentError(
            f"token_count mismatch for pair {logprobs_policy.pair_id!r} ({logprobs_policy.side}): "
            f"policy {logprobs_policy.token_count} vs reference {logprobs_ref.token_count}"
        )
    if not math.isfinite(beta):
        raise NumericError(f"beta must be finite, got {beta!r}")
    total = math.fsum(p - r for p, r in zip(logprobs_policy.logprobs, logprobs_ref.logprobs))
    return beta * total


def dpo_loss_of_gap(gap: float, beta: float = DEFAULT_BETA) -> float:
    """-log sigmoid(beta * gap), via softplus so |beta*gap| ~ 700 stays finite."""
    return softplus(-beta * gap)


def gradient_weight(gap: float, beta: float = DEFAULT_BETA) -> float:
    """beta * sigmoid(-beta * gap): the scalar factor in the loss gradient.

    Strictly decreasing in the gap and equal to -d/d(gap) of
    ``dpo_loss_of_gap``; over nonnegative gaps it is maximal at 0, which is
    why small-gap pairs carry the largest training signal.
    """
    return beta * sigmoid(-beta * gap)


def preference_entropy(gap: float, beta: float = DEFAULT_BETA) -> float:
    """Entropy of p = sigmoid(beta * gap), in [0, ln 2].

    Uses H(p) = p*softplus(-z) + q*softplus(z) with z = beta*gap and both
    weights taken from the stable sigmoid (never as 1 - p, which cancels),
    so the result is exactly symmetric in the gap sign. Returns 0 once p
    rounds to 0 or 1.
    """
    z = beta * gap
    p = sigmoid(z)
    q = sigmoid(-z)
    if p == 0.0 or q == 0.0 or p == 1.0 or q == 1.0:
        return 0.0
    return p * softplus(-z) + q * softplus(z)


@dataclass(slots=True)
class RewardGapRecord:
    """Cached per-pair difficulty: rewards, raw and per-token gaps, lengths."""

    pair_id: str
    r_w: float
    r_l: float
    gap_raw: float
    gap_norm: float
    len_w: int
    len_l: int
    beta: float

    def gap(self, variant: str = "raw") -> float:
        if variant == "raw":
            return self.gap_raw
        if variant == "length_normalized":
            return self.gap_norm
        raise ValueError(f"unknown gap variant {variant!r}")


def normalized_gap(record: RewardGapRecord) -> float:
    """Per-token variant: r_w/len_w - r_l/len_l."""
    return record.r_w / record.len_w - record.r_l / record.len_l


def reward_gap(pair: PreferencePair, scorer: LogprobSource, beta: float = DEFAULT_BETA) -> RewardGapRecord:
    """Score one pair (4 backend calls on a cache miss) and build its record.

    Swapping chosen and rejected negates both gap variants.
    """
    chosen_policy = scorer.score(pair, "chosen", "policy")
    chosen_ref = scorer.score(pair, "chosen", "reference")
    rejected_policy = scorer.score(pair, "rejected", "policy")
    rejected_ref = scorer.score(pair, "rejected", "reference")

    r_w = implicit_reward(chosen_policy, chosen_ref, beta)
    r_l = implicit_reward(rejected_policy, rejected_ref, beta)
    len_w = chosen_policy.token_count
    len_l = rejected_policy.token_count
    return RewardGapRecord(
        pair_id=pair.id,
        r_w=r_w,
        r_l=r_l,
        gap_raw=r_w - r_l,
        gap_norm=r_w / len_w - r_l / len_l,
        len_w=len_w,
        len_l=len_l,
        beta=beta,
    )


class GapCache:
    """Gap records for one (dataset, backend, beta) triple.

    Records are kept in dataset order so downstream ties can be broken by
    input order. A cache is only readable when its fingerprint, checksum,
    and beta match the active configuration; stale caches are rejected, not
    silently reused.
    """

    def __init__(self, beta: float, backend_fingerprint: str, dataset_checksum: str = ""):
        self.beta = beta
        self.backend_fingerprint = backend_fingerprint
        self.dataset_checksum = dataset_checksum
        self.records: dict[str, RewardGapRecord] = {}

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, pair_id: str) -> bool:
        return pair_id in self.records

    def add(self, record: RewardGapRecord) -> None:
        self.records[record.pair_id] = record

    def ensure_compatible(self, beta: float, backend_fingerprint: str, dataset_checksum: str = "") -> None:
        if self.beta != beta:
            raise StaleCacheError(f"cache beta {self.beta} != requested beta {beta}")
        if self.backend_fingerprint != backend_fingerprint:
            raise StaleCacheError("cache was computed with a different backend configuration")
        if dataset_checksum and self.dataset_checksum and dataset_checksum != self.dataset_checksum:
            raise StaleCacheError("cache was computed from a different dataset")

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {
                "beta": self.beta,
                "backend_fingerprint": self.backend_fingerprint,
                "dataset_checksum": self.dataset_checksum,
            }
            fh.write(json.dumps(header) + "\n")
            for rec in self.records.values():
                fh.write(
                    json.dumps(
                        {
                            "pair_id": rec.pair_id,
                            "r_w": rec.r_w,
                            "r_l": rec.r_l,
                            "gap_raw": rec.gap_raw,
                            "gap_norm": rec.gap_norm,
                            "len_w": rec.len_w,
                            "len_l": rec.len_l,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "GapCache":
        with open(path, "r", encoding="utf-8") as fh:
            header_line = fh.readline()
            if not header_line.strip():
                raise RecordError("gap cache is empty (missing header)", 1)
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid cache header: {exc.msg}", 1) from exc
            for name in ("beta", "backend_fingerprint", "dataset_checksum"):
                if name not in header:
                    raise RecordError(f"cache header missing {name!r}", 1)
            cache = cls(
                beta=float(header["beta"]),
                backend_fingerprint=header["backend_fingerprint"],
                dataset_checksum=header["dataset_checksum"],
            )
            for line_no, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RecordError(f"invalid cache record: {exc.msg}", line_no) from exc
                try:
                    rec = RewardGapRecord(
                        pair_id=obj["pair_id"],
                        r_w=float(obj["r_w"]),
                        r_l=float(obj["r_l"]),
                        gap_raw=float(obj["gap_raw"]),
                        gap_norm=float(obj["gap_norm"]),
                        len_w=int(obj["len_w"]),
                        len_l=int(obj["len_l"]),
                        beta=cache.beta,
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise RecordError(f"invalid cache record: {exc}", line_no) from exc
                cache.add(rec)
        return cache


@dataclass(slots=True)
class PairFailure:
    pair_id: str
    error: str


def compute_gap_records(
    pairs: Iterable[PreferencePair],
    scorer: LogprobSource,
    beta: float = DEFAULT_BETA,
    cache: GapCache | None = None,
    workers: int = 1,
    strict: bool = True,
    dataset_checksum: str = "",
    on_progress: Callable[[int, int], None] | None = None,
) -> tuple[GapCache, list[PairFailure]]:
    """Fill a gap cache for every pair, skipping pairs already cached.

    Scoring may fan out over worker threads; results are merged back in
    dataset order, so the cache contents are independent of worker count and
    scheduling. In strict mode (default) any per-pair failure aborts the run
    with a ``GapComputationError`` carrying every failed pair id; in
    permissive mode the partial cache and the failure list are returned.
    """
    if cache is None:
        cache = GapCache(beta=beta, backend_fingerprint=scorer.fingerprint(), dataset_checksum=dataset_checksum)
    else:
        cache.ensure_compatible(beta, scorer.fingerprint(), dataset_checksum)

    order: list[str] = []
    pending: list[PreferencePair] = []
    for pair in pairs:
        order.append(pair.id)
        if pair.id not in cache.records:
            pending.append(pair)

    failures: list[PairFailure] = []
    fresh: dict[str, RewardGapRecord] = {}

    def score_one(pair: PreferencePair) -> RewardGapRecord:
        return reward_gap(pair, scorer, beta)

    if workers <= 1 or len(pending) <= 1:
        for i, pair in enumerate(pending):
            try:
                fresh[pair.id] = score_one(pair)
            except PrefSelectError as exc:
                failures.append(PairFailure(pair.id, str(exc)))
            if on_progress:
                on_progress(i + 1, len(pending))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(score_one, pair) for pair in pending]
            for i, (pair, fut) in enumerate(zip(pending, futures)):
                try:
                    fresh[pair.id] = fut.result()
                except PrefSelectError as exc:
                    failures.append(PairFailure(pair.id, str(exc)))
                if on_progress:
                    on_progress(i + 1, len(pending))

    # Rebuild in dataset order so tie-breaking by input order stays stable
    # even when a warm cache is extended.
    merged = {}
    for pid in order:
        if pid in fresh:
            merged[pid] = fresh[pid]
        elif pid in cache.records:
            merged[pid] = cache.records[pid]
    cache.records = merged

    if strict and failures:
        raise GapComputationError(failures)
    return cache, failures
