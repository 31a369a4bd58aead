import json

import pytest
import torch
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

WORDS = [
    "the", "cat", "sat", "on", "a", "mat", "dog", "ran", "fast", "slow",
    "bird", "flew", "high", "low", "fish", "swam", "deep", "blue", "red", "sun",
]


def build_tokenizer(words=WORDS) -> PreTrainedTokenizerFast:
    vocab = {w: i for i, w in enumerate(["[PAD]", "[BOS]", "[EOS]", "[UNK]"] + list(words))}
    tok = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = Whitespace()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        bos_token="[BOS]",
        eos_token="[EOS]",
        pad_token="[PAD]",
        unk_token="[UNK]",
    )
    fast.chat_template = "{% for message in messages %}{{ message['content'] }}{% endfor %}"
    return fast


def save_checkpoint(out_dir, tokenizer, seed: int) -> str:
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=len(tokenizer.get_vocab()),
        n_positions=64,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
    )
    model = GPT2LMHeadModel(config)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    return str(out_dir)


@pytest.fixture(scope="session")
def checkpoint_pair(tmp_path_factory):
    """Tiny policy/reference checkpoint pair sharing one tokenizer."""
    root = tmp_path_factory.mktemp("checkpoints")
    tokenizer = build_tokenizer()
    policy = save_checkpoint(root / "policy", tokenizer, seed=1)
    reference = save_checkpoint(root / "reference", tokenizer, seed=2)
    return policy, reference


@pytest.fixture(scope="session")
def fixture_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "pairs.jsonl"
    rows = [
        {"id": "p1", "prompt": "the cat", "chosen": "sat on a mat", "rejected": "ran fast"},
        {"id": "p2", "prompt": "a bird", "chosen": "flew high", "rejected": "sat low on the mat"},
        {"id": "p3", "prompt": "the fish", "chosen": "swam deep blue sun", "rejected": "ran slow"},
    ]
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return str(path), [r["id"] for r in rows], rows
