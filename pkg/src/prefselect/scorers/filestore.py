"""Precomputed logprob store: random-access lookups from a logprob file.

File format (the contract with external exporters): one JSON object per
line, {"pair_id", "side": "chosen"|"rejected", "model_role":
"policy"|"reference", "logprobs": [float, ...]}. Decimal serialization must
round-trip doubles exactly; a leading record carrying a "kind" field is
treated as an optional header and skipped.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from typing import Iterable

from ..dataset_io import PreferencePair
from ..errors import IntegrityError, NumericError, RecordError, SourceError
from .base import MODEL_ROLES, SIDES, LogprobSource, TokenLogProbs

Key = tuple[str, str, str]  # (pair_id, side, model_role)


class FileLogprobStore(LogprobSource):
    """Immutable logprob table keyed by (pair_id, side, model_role)."""

    def __init__(self, table: dict[Key, tuple[float, ...]], fingerprint: str, source_path: str = ""):
        super().__init__()
        self._table = table
        self._fingerprint = fingerprint
        self.source_path = source_path

    def fingerprint(self) -> str:
        return self._fingerprint

    def __len__(self) -> int:
        return len(self._table)

    def lookup(self, pair_id: str, side: str, model_role: str) -> tuple[float, ...]:
        try:
            return self._table[(pair_id, side, model_role)]
        except KeyError:
            raise SourceError(f"no stored logprobs for ({pair_id!r}, {side}, {model_role})") from None

    def score(self, pair: PreferencePair, side: str, model_role: str) -> TokenLogProbs:
        values = self.lookup(pair.id, side, model_role)
        result = TokenLogProbs.build(pair.id, side, model_role, values)
        self.stats.record(model_role, side, result.token_count)
        return result

    def missing_keys(self, pair_ids: Iterable[str]) -> list[Key]:
        """Completeness check: every pair needs both sides under both roles."""
        missing = []
        for pid in pair_ids:
            for side in SIDES:
                for role in MODEL_ROLES:
                    if (pid, side, role) not in self._table:
                        missing.append((pid, side, role))
        return missing

    def ensure_complete(self, pair_ids: Iterable[str]) -> None:
        missing = self.missing_keys(pair_ids)
        if missing:
            shown = ", ".join(str(k) for k in missing[:5])
            more = "" if len(missing) <= 5 else f" (+{len(missing) - 5} more)"
            raise SourceError(f"logprob store incomplete, {len(missing)} missing key(s): {shown}{more}")


def load_precomputed(path: str | os.PathLike) -> FileLogprobStore:
    """Load a logprob file into an indexed store, validating as it reads."""
    table: dict[Key, tuple[float, ...]] = {}
    hasher = hashlib.sha256()
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise SourceError(f"cannot open logprob file {path!s}: {exc}") from exc
    with fh:
        for line_no, raw in enumerate(fh, start=1):
            hasher.update(raw)
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise RecordError(f"invalid logprob record: {exc}", line_no) from exc
            if not isinstance(obj, dict):
                raise RecordError("logprob record is not an object", line_no)
            if "kind" in obj:  # optional exporter header
                continue
            key, values = _validate_record(obj, line_no)
            if key in table:
                raise IntegrityError(f"duplicate logprob key {key} at line {line_no}")
            table[key] = values
    return FileLogprobStore(table, fingerprint=hasher.hexdigest(), source_path=str(path))


def _validate_record(obj: dict, line_no: int) -> tuple[Key, tuple[float, ...]]:
    for name in ("pair_id", "side", "model_role", "logprobs"):
        if name not in obj:
            raise RecordError(f"missing field {name!r}", line_no)
    if obj["side"] not in SIDES:
        raise RecordError(f"bad side {obj['side']!r}", line_no)
    if obj["model_role"] not in MODEL_ROLES:
        raise RecordError(f"bad model_role {obj['model_role']!r}", line_no)
    raw_values = obj["logprobs"]
    if not isinstance(raw_values, list) or not raw_values:
        raise RecordError("logprobs must be a nonempty array", line_no)
    values = []
    for x in raw_values:
        if not isinstance(x, (int, float)) or isinstance(x, bool):
            raise RecordError(f"logprob element {x!r} is not a number", line_no)
        x = float(x)
        if not math.isfinite(x) or x > 0.0:
            raise NumericError(f"line {line_no}: logprob element {x!r} out of range (must be finite and <= 0)")
        values.append(x)
    return (obj["pair_id"], obj["side"], obj["model_role"]), tuple(values)


def write_logprob_records(records: Iterable[TokenLogProbs], dest: str | os.PathLike) -> int:
    """Emit TokenLogProbs in the logprob file format (exact double round-trip)."""
    count = 0
    with open(dest, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "pair_id": rec.pair_id,
                        "side": rec.side,
                        "model_role": rec.model_role,
                        "logprobs": list(rec.logprobs),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    return count
