import json
import random

import pytest

from prefselect.dataset_io import PreferencePair
from prefselect.scorers import ToyBigramLM, ToyScorer

TEST_ALPHABET = "abcd "


def make_test_scorer(seed: int = 0) -> ToyScorer:
    """Toy policy/reference pair over a tiny alphabet with divergent stats."""
    rng = random.Random(seed)
    policy_corpus = "".join(rng.choices(TEST_ALPHABET, weights=[5, 3, 2, 1, 2], k=400))
    reference_corpus = "".join(rng.choices(TEST_ALPHABET, weights=[1, 2, 3, 5, 2], k=400))
    policy = ToyBigramLM(policy_corpus, smoothing=0.5, seed=seed, alphabet=TEST_ALPHABET)
    reference = ToyBigramLM(reference_corpus, smoothing=1.5, seed=seed + 1, alphabet=TEST_ALPHABET)
    return ToyScorer(policy, reference)


def make_pairs(n: int, seed: int = 0, min_len: int = 3, max_len: int = 12) -> list[PreferencePair]:
    """Synthetic pairs over the test alphabet; chosen and rejected always differ."""
    rng = random.Random(seed)

    def text(lo=min_len, hi=max_len):
        return "".join(rng.choices(TEST_ALPHABET, k=rng.randint(lo, hi)))

    pairs = []
    for i in range(n):
        chosen = text()
        rejected = text()
        while rejected == chosen:
            rejected = text()
        pairs.append(PreferencePair(f"p{i:06d}", text(1, 8), chosen, rejected))
    return pairs


def write_dataset(pairs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")


@pytest.fixture
def toy_scorer():
    return make_test_scorer()


@pytest.fixture
def small_pairs():
    return make_pairs(20, seed=7)


@pytest.fixture
def dataset_file(tmp_path, small_pairs):
    path = tmp_path / "pairs.jsonl"
    write_dataset(small_pairs, path)
    return path
