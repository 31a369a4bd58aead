from .base import MODEL_ROLES, SIDES, LogprobSource, ScorerStats, TextScorer, TokenLogProbs
from .filestore import FileLogprobStore, load_precomputed, write_logprob_records
from .remote import RemoteScorer
from .toy import (
    DEFAULT_POLICY_CORPUS,
    DEFAULT_REFERENCE_CORPUS,
    ToyBigramLM,
    ToyScorer,
    default_toy_scorer,
    toy_lm,
)

__all__ = [
    "MODEL_ROLES",
    "SIDES",
    "LogprobSource",
    "ScorerStats",
    "TextScorer",
    "TokenLogProbs",
    "FileLogprobStore",
    "load_precomputed",
    "write_logprob_records",
    "RemoteScorer",
    "DEFAULT_POLICY_CORPUS",
    "DEFAULT_REFERENCE_CORPUS",
    "ToyBigramLM",
    "ToyScorer",
    "default_toy_scorer",
    "toy_lm",
]
