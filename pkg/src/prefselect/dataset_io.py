"""Line-delimited preference dataset ingestion and selection output.

Input format: UTF-8, one JSON object per line with fields
{"id", "prompt", "chosen", "rejected"}. Unknown extra fields are kept on
the pair and written back on passthrough. Text is treated as opaque; no
tokenization happens here.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, TYPE_CHECKING, Iterable, Iterator

from .errors import ConsistencyError, DatasetError, RecordError

if TYPE_CHECKING:  # pragma: no cover
    from .selection import SelectionResult

REQUIRED_FIELDS = ("id", "prompt", "chosen", "rejected")


@dataclass(slots=True)
class PreferencePair:
    """One (prompt, chosen, rejected) record; the unit of selection."""

    id: str
    prompt: str
    chosen: str
    rejected: str
    extras: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {"id": self.id, "prompt": self.prompt, "chosen": self.chosen, "rejected": self.rejected}
        rec.update(self.extras)
        return rec


@dataclass(slots=True)
class DatasetManifest:
    pair_count: int
    source_path: str | None
    checksum: str  # sha256 hex digest of the raw input bytes


def _pair_from_obj(obj: object, line_no: int) -> PreferencePair:
    if not isinstance(obj, dict):
        raise RecordError("record is not an object", line_no)
    for name in REQUIRED_FIELDS:
        if name not in obj:
            raise RecordError(f"missing required field {name!r}", line_no)
        if not isinstance(obj[name], str):
            raise RecordError(f"field {name!r} is not a string", line_no)
    if not obj["id"]:
        raise RecordError("empty id", line_no)
    if not obj["chosen"]:
        raise RecordError(f"empty chosen response for id {obj['id']!r}", line_no)
    if not obj["rejected"]:
        raise RecordError(f"empty rejected response for id {obj['id']!r}", line_no)
    if obj["chosen"] == obj["rejected"]:
        # Identical responses carry no preference signal and would sit at
        # gap 0 under any model; rejected at validation by design.
        raise RecordError(f"chosen == rejected for id {obj['id']!r}", line_no)
    extras = {k: v for k, v in obj.items() if k not in REQUIRED_FIELDS}
    return PreferencePair(obj["id"], obj["prompt"], obj["chosen"], obj["rejected"], extras)


class PairStream:
    """Streaming iterator over preference pairs in a byte stream.

    Yields pairs in file order without buffering them; tracks a sha256
    checksum of the consumed bytes and detects duplicate ids. The manifest
    is available once the stream is exhausted.
    """

    def __init__(self, stream: IO[bytes] | Iterable[bytes], source_path: str | None = None):
        self._lines = iter(stream)
        self._source_path = source_path
        self._hash = hashlib.sha256()
        self._seen_ids: set[str] = set()
        self._count = 0
        self._line_no = 0
        self._manifest: DatasetManifest | None = None

    def __iter__(self) -> Iterator[PreferencePair]:
        return self

    def __next__(self) -> PreferencePair:
        for raw in self._lines:
            self._line_no += 1
            self._hash.update(raw)
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise RecordError(f"invalid UTF-8: {exc}", self._line_no) from exc
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON: {exc.msg}", self._line_no) from exc
            pair = _pair_from_obj(obj, self._line_no)
            if pair.id in self._seen_ids:
                raise DatasetError(f"duplicate id {pair.id!r} at line {self._line_no}")
            self._seen_ids.add(pair.id)
            self._count += 1
            return pair
        self._manifest = DatasetManifest(
            pair_count=self._count,
            source_path=self._source_path,
            checksum=self._hash.hexdigest(),
        )
        raise StopIteration

    @property
    def manifest(self) -> DatasetManifest:
        if self._manifest is None:
            raise RuntimeError("manifest is only available after the stream is exhausted")
        return self._manifest


def parse_pairs(stream: IO[bytes] | Iterable[bytes], source_path: str | None = None) -> PairStream:
    """Parse a line-delimited byte stream into a stream of pairs."""
    return PairStream(stream, source_path=source_path)


def open_pairs(path: str | os.PathLike) -> Iterator[PreferencePair]:
    """Stream pairs from a file, closing it when exhausted."""
    with open(path, "rb") as fh:
        yield from PairStream(fh, source_path=str(path))


def read_pairs(path: str | os.PathLike) -> tuple[list[PreferencePair], DatasetManifest]:
    with open(path, "rb") as fh:
        stream = PairStream(fh, source_path=str(path))
        pairs = list(stream)
    return pairs, stream.manifest


def scan_dataset(path: str | os.PathLike) -> DatasetManifest:
    """Validate a dataset file end to end without retaining its pairs."""
    with open(path, "rb") as fh:
        stream = PairStream(fh, source_path=str(path))
        for _ in stream:
            pass
    return stream.manifest


def write_pairs(pairs: Iterable[PreferencePair], dest: str | os.PathLike) -> int:
    count = 0
    with open(dest, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_record(), ensure_ascii=False) + "\n")
            count += 1
    return count


def selection_meta(result: "SelectionResult", input_checksum: str = "") -> dict:
    cfg = result.config
    return {
        "tau": result.tau_effective,
        "rho": cfg.ratio if cfg.mode == "ratio" else None,
        "beta": cfg.beta,
        "variant": cfg.variant,
        "method": result.method,
        "selected_count": result.selected_count,
        "total_count": result.total_count,
        "input_checksum": input_checksum or result.dataset_checksum,
    }


def write_selection(
    result: "SelectionResult",
    pairs: Iterable[PreferencePair],
    dest: str | os.PathLike,
    input_checksum: str = "",
) -> int:
    """Write the selected pairs, hardest first, plus a `.meta` sidecar.

    Emits records in the order of ``result.selected_ids`` (ascending gap for
    gap-based selections) in the same format the pairs were read from.
    Memory is proportional to the selection, not the dataset.
    """
    wanted = set(result.selected_ids)
    found: dict[str, PreferencePair] = {}
    for pair in pairs:
        if pair.id in wanted:
            found[pair.id] = pair
    missing = [pid for pid in result.selected_ids if pid not in found]
    if missing:
        shown = ", ".join(repr(m) for m in missing[:5])
        raise ConsistencyError(f"{len(missing)} selected id(s) not present in pairs: {shown}")

    dest = Path(dest)
    count = write_pairs((found[pid] for pid in result.selected_ids), dest)
    meta = selection_meta(result, input_checksum)
    meta_path = dest.with_name(dest.name + ".meta")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return count


def read_selection_ids(path: str | os.PathLike) -> list[str]:
    """Read back the ids of a written selection, preserving order."""
    ids = []
    with open(path, "rb") as fh:
        for pair in PairStream(fh, source_path=str(path)):
            ids.append(pair.id)
    return ids


def read_selection_meta(path: str | os.PathLike) -> dict:
    meta_path = Path(path).with_name(Path(path).name + ".meta")
    with open(meta_path, "r", encoding="utf-8") as fh:
        return json.load(fh)
