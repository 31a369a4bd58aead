"""Export job: dataset in, logprob file out.

Emits exactly four records per pair (chosen/rejected x policy/reference) in
the line-delimited logprob format, preceded by a header record describing
the job. Logprobs are serialized as shortest-round-trip decimals, so the
double values survive re-reading exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DatasetRecordError, ExportError
from .scoring import batched_response_logprobs, encode_pair_text, load_model, load_tokenizer_pair

REQUIRED_FIELDS = ("id", "prompt", "chosen", "rejected")


@dataclass
class ExportJob:
    dataset: str
    policy: str
    reference: str
    output: str
    device: str = "cpu"
    batch_size: int = 8
    apply_chat_template: bool = False
    strict: bool = True


@dataclass
class ExportStats:
    pairs: int = 0
    records: int = 0
    failures: list = field(default_factory=list)  # (pair_id, reason)


def read_dataset(path: str) -> list[dict]:
    pairs = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetRecordError(f"invalid JSON: {exc.msg}", line_no) from exc
            if not isinstance(obj, dict):
                raise DatasetRecordError("record is not an object", line_no)
            for name in REQUIRED_FIELDS:
                if name not in obj or not isinstance(obj[name], str):
                    raise DatasetRecordError(f"missing or non-string field {name!r}", line_no)
            if not obj["id"] or not obj["chosen"] or not obj["rejected"]:
                raise DatasetRecordError("id, chosen, and rejected must be nonempty", line_no)
            if obj["id"] in seen:
                raise DatasetRecordError(f"duplicate id {obj['id']!r}", line_no)
            seen.add(obj["id"])
            pairs.append(obj)
    return pairs


def _render_prompt(tokenizer, prompt: str, apply_chat_template: bool) -> str:
    if not apply_chat_template:
        return prompt
    return tokenizer.apply_chat_template(
        [{"role": "user", "content": prompt}], tokenize=False, add_generation_prompt=True
    )


def export_logprobs(job: ExportJob) -> ExportStats:
    tokenizer = load_tokenizer_pair(job.policy, job.reference)
    models = {
        "policy": load_model(job.policy, job.device),
        "reference": load_model(job.reference, job.device),
    }
    pairs = read_dataset(job.dataset)
    stats = ExportStats(pairs=len(pairs))

    encoded = {}
    scorable = []
    for obj in pairs:
        try:
            prompt = _render_prompt(tokenizer, obj["prompt"], job.apply_chat_template)
            for side in ("chosen", "rejected"):
                prompt_ids, response_ids = encode_pair_text(tokenizer, prompt, obj[side])
                if not response_ids:
                    raise ExportError(f"{side} response tokenizes to zero tokens")
                encoded[(obj["id"], side)] = (prompt_ids, response_ids)
        except ExportError as exc:
            stats.failures.append((obj["id"], str(exc)))
            encoded.pop((obj["id"], "chosen"), None)
            continue
        scorable.append(obj)

    header = {
        "kind": "header",
        "policy": job.policy,
        "reference": job.reference,
        "dataset": job.dataset,
        "batch_size": job.batch_size,
        "chat_template": job.apply_chat_template,
    }
    with open(job.output, "w", encoding="utf-8") as out:
        out.write(json.dumps(header) + "\n")
        for role in ("policy", "reference"):
            for side in ("chosen", "rejected"):
                items = [encoded[(obj["id"], side)] for obj in scorable]
                scored = batched_response_logprobs(models[role], tokenizer, items, job.batch_size, job.device)
                for obj, values in zip(scorable, scored):
                    out.write(
                        json.dumps(
                            {
                                "pair_id": obj["id"],
                                "side": side,
                                "model_role": role,
                                "logprobs": values,
                            }
                        )
                        + "\n"
                    )
                    stats.records += 1

    if stats.failures and job.strict:
        shown = "; ".join(f"{pid}: {why}" for pid, why in stats.failures[:5])
        raise ExportError(f"{len(stats.failures)} pair(s) failed to encode: {shown}")
    return stats
