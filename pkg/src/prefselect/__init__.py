"""Difficulty-based preference data curation via DPO implicit reward gaps.

Scores each (prompt, chosen, rejected) pair with a policy/reference model
pair, ranks pairs by ascending reward gap (hardest first), and selects
subsets by threshold or quantile ratio, with selection baselines and
reporting analytics.
"""

from .analytics import (
    GapHistogram,
    LengthStats,
    OverlapReport,
    SweepManifest,
    gap_histogram,
    length_stats,
    overlap_report,
    sweep,
)
from .dataset_io import (
    DatasetManifest,
    PreferencePair,
    open_pairs,
    parse_pairs,
    read_pairs,
    scan_dataset,
    write_selection,
)
from .gaps import (
    DEFAULT_BETA,
    GapCache,
    PairFailure,
    RewardGapRecord,
    compute_gap_records,
    dpo_loss_of_gap,
    gradient_weight,
    implicit_reward,
    normalized_gap,
    preference_entropy,
    reward_gap,
)
from .scorers import (
    FileLogprobStore,
    LogprobSource,
    RemoteScorer,
    ScorerStats,
    TokenLogProbs,
    ToyBigramLM,
    ToyScorer,
    default_toy_scorer,
    load_precomputed,
    toy_lm,
)
from .selection import (
    RankedGap,
    SelectionConfig,
    SelectionResult,
    compression_baseline,
    quantile_count,
    random_baseline,
    rank_by_difficulty,
    select_by_ratio,
    select_by_threshold,
)

__version__ = "0.1.0"
