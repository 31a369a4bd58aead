"""Reporting over selections and gap caches.

Covers the selection-agreement breakdown across methods, average response
lengths per subset, ratio sweeps with nested outputs, and a histogram of
the gap distribution the selector acts on.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import dataset_io
from .errors import ConfigError, ConsistencyError, DegenerateInputError
from .gaps import GapCache
from .selection import SelectionResult, rank_by_difficulty, select_by_ratio


@dataclass
class OverlapReport:
    """How many of our selected pairs each agreement class contains.

    Bucket j counts pairs picked by our method and exactly j of the other
    methods; the top bucket (j = number of baselines) is full agreement.
    Bucket counts always sum to the size of our selection.
    """

    method_names: list[str]  # ours first, then baselines
    buckets: dict[int, int]

    @property
    def our_selection_size(self) -> int:
        return sum(self.buckets.values())

    def bucket_label(self, j: int) -> str:
        n_baselines = len(self.method_names) - 1
        if j == 0:
            return "only ours"
        if j == n_baselines:
            return f"all {len(self.method_names)} methods"
        return f"ours + {j}"

    def to_records(self) -> list[dict]:
        return [
            {"agreement": j, "label": self.bucket_label(j), "count": self.buckets[j]}
            for j in sorted(self.buckets)
        ]

    def format_table(self) -> str:
        lines = ["agreement class            count"]
        for rec in self.to_records():
            lines.append(f"{rec['label']:<26} {rec['count']:>5}")
        lines.append(f"{'total (our selection)':<26} {self.our_selection_size:>5}")
        return "\n".join(lines)


def _check_same_dataset(results: Sequence[SelectionResult]) -> None:
    totals = {r.total_count for r in results}
    if len(totals) > 1:
        raise ConsistencyError(f"selections cover differing candidate counts: {sorted(totals)}")
    checksums = {r.dataset_checksum for r in results if r.dataset_checksum}
    if len(checksums) > 1:
        raise ConsistencyError("selections were drawn from different datasets (checksum mismatch)")


def overlap_report(our: SelectionResult, baselines: Sequence[SelectionResult]) -> OverlapReport:
    """Assign each of our selected pairs to exactly one agreement class."""
    _check_same_dataset([our, *baselines])
    baseline_sets = [b.id_set() for b in baselines]
    buckets = {j: 0 for j in range(len(baselines) + 1)}
    for pid in our.selected_ids:
        j = sum(1 for s in baseline_sets if pid in s)
        buckets[j] += 1
    names = [our.method] + [b.method for b in baselines]
    return OverlapReport(method_names=names, buckets=buckets)


@dataclass
class LengthStats:
    avg_tokens_chosen: float
    avg_tokens_rejected: float
    subset_label: str
    pair_count: int

    def to_record(self) -> dict:
        return {
            "subset": self.subset_label,
            "pairs": self.pair_count,
            "avg_tokens_chosen": self.avg_tokens_chosen,
            "avg_tokens_rejected": self.avg_tokens_rejected,
        }


def length_stats(cache: GapCache, selection: SelectionResult | None = None, label: str | None = None) -> LengthStats:
    """Mean chosen/rejected token lengths over the full set or a selection.

    Token counts come from the gap cache (the scorer's own tokenization),
    not from re-tokenizing the text.
    """
    if selection is None:
        records = list(cache.records.values())
        label = label or "full"
    else:
        missing = [pid for pid in selection.selected_ids if pid not in cache.records]
        if missing:
            raise ConsistencyError(f"selection ids missing from cache: {missing[:5]}")
        records = [cache.records[pid] for pid in selection.selected_ids]
        label = label or selection.method
    if not records:
        raise DegenerateInputError("cannot compute length stats over an empty scope")
    n = len(records)
    return LengthStats(
        avg_tokens_chosen=sum(r.len_w for r in records) / n,
        avg_tokens_rejected=sum(r.len_l for r in records) / n,
        subset_label=label,
        pair_count=n,
    )


def format_length_table(rows: Iterable[LengthStats]) -> str:
    lines = [f"{'subset':<16} {'pairs':>8} {'avg chosen':>12} {'avg rejected':>13}"]
    for st in rows:
        lines.append(
            f"{st.subset_label:<16} {st.pair_count:>8} {st.avg_tokens_chosen:>12.2f} {st.avg_tokens_rejected:>13.2f}"
        )
    return "\n".join(lines)


@dataclass
class SweepRow:
    ratio: float
    k: int
    tau_effective: float
    path: str

    def to_record(self) -> dict:
        return {"ratio": self.ratio, "k": self.k, "tau_effective": self.tau_effective, "path": self.path}


@dataclass
class SweepManifest:
    rows: list[SweepRow]
    variant: str
    dataset_checksum: str

    def save(self, path: str | os.PathLike) -> None:
        payload = {
            "variant": self.variant,
            "dataset_checksum": self.dataset_checksum,
            "selections": [row.to_record() for row in self.rows],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def sweep(
    cache: GapCache,
    ratios: Sequence[float],
    pairs_path: str | os.PathLike,
    out_dir: str | os.PathLike,
    variant: str = "raw",
    exclude_inverted: bool = False,
) -> SweepManifest:
    """Emit one selection per ratio plus a manifest of (ratio, k, tau, path).

    Lower ratios are always subsets of higher ones: every selection is a
    prefix of the same ranking.
    """
    if len(set(ratios)) != len(ratios):
        raise ConfigError("sweep ratios must be distinct")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ranked = rank_by_difficulty(cache, variant=variant, exclude_inverted=exclude_inverted)
    rows = []
    for rho in ratios:
        result = select_by_ratio(ranked, rho)
        result.dataset_checksum = cache.dataset_checksum
        dest = out_dir / f"selected_rho_{rho}.jsonl"
        dataset_io.write_selection(result, dataset_io.open_pairs(pairs_path), dest, input_checksum=cache.dataset_checksum)
        rows.append(SweepRow(ratio=rho, k=result.selected_count, tau_effective=result.tau_effective, path=str(dest)))
    return SweepManifest(rows=rows, variant=variant, dataset_checksum=cache.dataset_checksum)


@dataclass
class GapHistogram:
    """Equal-width histogram over [min gap, max gap]; counts sum to N.

    When every gap is identical the histogram degenerates to a single bin
    whose edges coincide.
    """

    edges: list[float]
    counts: list[int]
    variant: str

    def to_record(self) -> dict:
        return {"variant": self.variant, "edges": self.edges, "counts": self.counts}

    def format_table(self) -> str:
        lines = [f"{'bin':<42} count"]
        for i, count in enumerate(self.counts):
            lines.append(f"[{self.edges[i]:>18.6g}, {self.edges[i + 1]:>18.6g}] {count:>6}")
        return "\n".join(lines)


def gap_histogram(cache: GapCache, bins: int, variant: str = "raw") -> GapHistogram:
    if bins < 1:
        raise ConfigError(f"bins must be >= 1, got {bins}")
    gaps = [rec.gap(variant) for rec in cache.records.values()]
    if not gaps:
        raise DegenerateInputError("cannot build a histogram from an empty cache")
    lo, hi = min(gaps), max(gaps)
    if lo == hi:
        return GapHistogram(edges=[lo, hi], counts=[len(gaps)], variant=variant)
    width = (hi - lo) / bins
    counts = [0] * bins
    for g in gaps:
        idx = int((g - lo) / width)
        if idx >= bins:  # right edge lands in the last bin
            idx = bins - 1
        counts[idx] += 1
    edges = [lo + i * width for i in range(bins)] + [hi]
    return GapHistogram(edges=edges, counts=counts, variant=variant)
