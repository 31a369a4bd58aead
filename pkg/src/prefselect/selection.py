"""Difficulty ranking and subset selection.

Pairs are ranked by ascending reward gap (hardest first) and selected
either by a fixed threshold tau (keep gap <= tau) or by a ratio rho (keep
the k = ceil(rho * N) smallest gaps, nearest-rank quantile). Two
model-free baselines, random and compression-ratio, share the same result
shape so selections can be compared downstream.
"""

from __future__ import annotations

import math
import random
import zlib
from bisect import bisect_right
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import NamedTuple, Sequence

from .dataset_io import PreferencePair
from .errors import ConfigError
from .gaps import DEFAULT_BETA, GapCache

VARIANTS = ("raw", "length_normalized")
MODES = ("ratio", "threshold")


@dataclass(frozen=True)
class SelectionConfig:
    beta: float = DEFAULT_BETA
    mode: str = "ratio"
    ratio: float | None = 0.10
    tau: float | None = None
    variant: str = "raw"
    tie_break: str = "by_input_order"
    seed: int = 0
    exclude_inverted: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.mode == "ratio":
            if self.ratio is None or not (0.0 < self.ratio < 1.0):
                raise ConfigError(f"ratio must lie strictly inside (0, 1), got {self.ratio!r}")
        else:
            if self.tau is None or not math.isfinite(self.tau):
                raise ConfigError(f"threshold mode needs a finite tau, got {self.tau!r}")

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "mode": self.mode,
            "ratio": self.ratio,
            "tau": self.tau,
            "variant": self.variant,
            "tie_break": self.tie_break,
            "seed": self.seed,
            "exclude_inverted": self.exclude_inverted,
        }


@dataclass
class SelectionResult:
    """Selected pair ids (hardest first), effective threshold, and counts."""

    selected_ids: list[str]
    tau_effective: float | None
    selected_count: int
    total_count: int
    config: SelectionConfig
    method: str = "reward_gap"
    dataset_checksum: str = ""
    tied_out_count: int = 0  # candidates at tau_effective capped out by tie-break

    def id_set(self) -> set[str]:
        return set(self.selected_ids)


class RankedGap(NamedTuple):
    pair_id: str
    gap: float


def rank_by_difficulty(cache: GapCache, variant: str = "raw", exclude_inverted: bool = False) -> list[RankedGap]:
    """Stable ascending sort of cached gaps; ties keep input order."""
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
    entries = [RankedGap(rec.pair_id, rec.gap(variant)) for rec in cache.records.values()]
    if exclude_inverted:
        entries = [e for e in entries if e.gap >= 0.0]
    entries.sort(key=lambda e: e.gap)  # sort() is stable: equal gaps keep input order
    return entries


def quantile_count(rho: float, n: int) -> int:
    """k = ceil(rho * n) under exact decimal semantics.

    The ratio is interpreted as the decimal the caller wrote (via
    ``Fraction(str(rho))``), not its binary approximation: naive float
    multiplication makes ceil(0.07 * 100) come out as 8.
    """
    if not (0.0 < rho < 1.0):
        raise ConfigError(f"ratio must lie strictly inside (0, 1), got {rho!r}")
    return math.ceil(Fraction(str(rho)) * n)


def _base_config(config: SelectionConfig | None, **overrides) -> SelectionConfig:
    cfg = config if config is not None else SelectionConfig()
    return replace(cfg, **overrides)


def select_by_threshold(ranked: Sequence[RankedGap], tau: float, config: SelectionConfig | None = None) -> SelectionResult:
    """Keep exactly the pairs with gap <= tau (boundary included)."""
    gaps = [e.gap for e in ranked]
    cut = bisect_right(gaps, tau)
    cfg = _base_config(config, mode="threshold", tau=tau, ratio=None)
    return SelectionResult(
        selected_ids=[e.pair_id for e in ranked[:cut]],
        tau_effective=tau,
        selected_count=cut,
        total_count=len(ranked),
        config=cfg,
    )


def select_by_ratio(ranked: Sequence[RankedGap], rho: float, config: SelectionConfig | None = None) -> SelectionResult:
    """Keep the k = ceil(rho * N) smallest gaps; ties broken by input order.

    tau_effective is the k-th selected gap (nearest-rank quantile), so
    re-selecting by that threshold returns the same set whenever gaps at the
    boundary are distinct.
    """
    if not ranked:
        raise ConfigError("cannot select by ratio from an empty ranking")
    k = quantile_count(rho, len(ranked))
    tau = ranked[k - 1].gap
    tied_out = sum(1 for e in ranked[k:] if e.gap == tau)
    cfg = _base_config(config, mode="ratio", ratio=rho, tau=None)
    return SelectionResult(
        selected_ids=[e.pair_id for e in ranked[:k]],
        tau_effective=tau,
        selected_count=k,
        total_count=len(ranked),
        config=cfg,
        tied_out_count=tied_out,
    )


def random_baseline(pairs: Sequence[PreferencePair] | Sequence[str], rho: float, seed: int = 0) -> SelectionResult:
    """Uniform sample without replacement of k = ceil(rho * N) pairs."""
    ids = [p if isinstance(p, str) else p.id for p in pairs]
    k = quantile_count(rho, len(ids))
    chosen = set(random.Random(seed).sample(range(len(ids)), k))
    selected = [pid for i, pid in enumerate(ids) if i in chosen]  # input order
    cfg = SelectionConfig(mode="ratio", ratio=rho, seed=seed)
    return SelectionResult(
        selected_ids=selected,
        tau_effective=None,
        selected_count=k,
        total_count=len(ids),
        config=cfg,
        method="random",
    )


def compression_ratio(text: str) -> float:
    """DEFLATE-at-max-level bytes over raw UTF-8 bytes; higher = less compressible."""
    data = text.encode("utf-8")
    if not data:
        raise ConfigError("cannot compute a compression ratio for empty text")
    return len(zlib.compress(data, 9)) / len(data)


def compression_baseline(pairs: Sequence[PreferencePair], rho: float) -> SelectionResult:
    """Keep the k least-compressible pairs (prompt + chosen + rejected).

    Single-pass per-pair proxy for compressibility-based selection, not an
    iterative greedy subset build; ties resolve by input order.
    """
    ratios = [compression_ratio(p.prompt + p.chosen + p.rejected) for p in pairs]
    k = quantile_count(rho, len(pairs))
    order = sorted(range(len(pairs)), key=lambda i: (-ratios[i], i))
    selected = [pairs[i].id for i in order[:k]]
    cfg = SelectionConfig(mode="ratio", ratio=rho)
    return SelectionResult(
        selected_ids=selected,
        tau_effective=None,
        selected_count=k,
        total_count=len(pairs),
        config=cfg,
        method="compression",
    )
