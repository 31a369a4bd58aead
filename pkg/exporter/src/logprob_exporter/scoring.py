"""Per-token response logprobs from a causal LM.

Each response token is conditioned on the prompt plus the response prefix:
prompt and response are tokenized separately and concatenated, so the
response token ids are identical across model roles that share a tokenizer.
Batches are right-padded with an attention mask; prompt positions are
sliced off, never re-tokenized.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from transformers import AutoModelForCausalLM, AutoTokenizer

from .errors import ExportError, TokenizerMismatchError


def load_tokenizer_pair(policy_path: str, reference_path: str):
    tok_policy = AutoTokenizer.from_pretrained(policy_path)
    tok_reference = AutoTokenizer.from_pretrained(reference_path)
    if tok_policy.get_vocab() != tok_reference.get_vocab():
        raise TokenizerMismatchError(
            f"policy ({policy_path}) and reference ({reference_path}) tokenizers have different vocabularies"
        )
    if tok_policy.all_special_tokens != tok_reference.all_special_tokens:
        raise TokenizerMismatchError("policy and reference tokenizers disagree on special tokens")
    return tok_policy


def load_model(path: str, device: str) -> torch.nn.Module:
    model = AutoModelForCausalLM.from_pretrained(path)
    model.eval()
    return model.to(device)


def encode_pair_text(tokenizer, prompt: str, response: str) -> tuple[list[int], list[int]]:
    """Token ids for (prompt, response); the first response token needs at
    least one preceding token, so an empty prompt falls back to BOS."""
    prompt_ids = tokenizer(prompt, add_special_tokens=True)["input_ids"] if prompt else []
    if not prompt_ids:
        if tokenizer.bos_token_id is None:
            raise ExportError("prompt produced no tokens and the tokenizer has no BOS token")
        prompt_ids = [tokenizer.bos_token_id]
    response_ids = tokenizer(response, add_special_tokens=False)["input_ids"]
    return prompt_ids, response_ids


@torch.no_grad()
def batched_response_logprobs(
    model,
    tokenizer,
    encoded: list[tuple[list[int], list[int]]],
    batch_size: int,
    device: str,
) -> list[list[float]]:
    """One logprob list per (prompt_ids, response_ids) item, response tokens only."""
    pad_id = tokenizer.pad_token_id
    if pad_id is None:
        pad_id = tokenizer.eos_token_id if tokenizer.eos_token_id is not None else 0

    results: list[list[float]] = []
    for start in range(0, len(encoded), batch_size):
        chunk = encoded[start : start + batch_size]
        lengths = [len(p) + len(r) for p, r in chunk]
        width = max(lengths)
        input_ids = torch.full((len(chunk), width), pad_id, dtype=torch.long)
        attention = torch.zeros((len(chunk), width), dtype=torch.long)
        for row, ((p, r), n) in enumerate(zip(chunk, lengths)):
            input_ids[row, :n] = torch.tensor(p + r, dtype=torch.long)
            attention[row, :n] = 1
        input_ids = input_ids.to(device)
        attention = attention.to(device)

        try:
            logits = model(input_ids=input_ids, attention_mask=attention).logits
        except (RuntimeError, torch.cuda.OutOfMemoryError) as exc:
            if "out of memory" in str(exc).lower():
                raise ExportError(
                    f"ran out of memory scoring a batch of {len(chunk)}; reduce --batch-size and retry"
                ) from exc
            raise

        # log_probs[b, j] is the logprob of token j+1 given tokens <= j.
        log_probs = F.log_softmax(logits.float(), dim=-1)
        token_lp = log_probs[:, :-1].gather(2, input_ids[:, 1:].unsqueeze(-1)).squeeze(-1)
        for row, (p, r) in enumerate(chunk):
            lp = token_lp[row, len(p) - 1 : len(p) - 1 + len(r)]
            values = [min(float(x), 0.0) for x in lp]  # clamp float noise at prob 1
            results.append(values)
    return results
