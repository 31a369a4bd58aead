"""Implicit rewards, gaps, analytic scalar functions, and the gap cache."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefselect.dataset_io import PreferencePair
from prefselect.errors import (
    AlignmentError,
    GapComputationError,
    StaleCacheError,
)
from prefselect.gaps import (
    GapCache,
    RewardGapRecord,
    compute_gap_records,
    dpo_loss_of_gap,
    gradient_weight,
    implicit_reward,
    normalized_gap,
    preference_entropy,
    reward_gap,
    sigmoid,
)
from prefselect.scorers import LogprobSource, TokenLogProbs, ToyScorer

from conftest import make_pairs, make_test_scorer

LN2 = math.log(2.0)


def tlp(values, pair_id="x", side="chosen", role="policy"):
    return TokenLogProbs.build(pair_id, side, role, values)


def naive_implicit_reward(policy_values, ref_values, beta):
    """Independent oracle: explicit loop, plain accumulation."""
    total = 0.0
    for i in range(len(policy_values)):
        total += policy_values[i] - ref_values[i]
    return beta * total


class CannedScorer(LogprobSource):
    """Backend with fixed per-(side, role) logprobs for every pair."""

    def __init__(self, table):
        super().__init__()
        self.table = table

    def fingerprint(self):
        return "canned"

    def score(self, pair, side, model_role):
        result = TokenLogProbs.build(pair.id, side, model_role, self.table[(side, model_role)])
        self.stats.record(model_role, side, result.token_count)
        return result


class TestImplicitReward:
    def test_identical_models_give_zero(self):
        values = [-0.3, -1.7, -2.2]
        p = tlp(values, role="policy")
        r = tlp(values, role="reference")
        assert implicit_reward(p, r, 0.7) == 0.0

    def test_direct_arithmetic(self):
        p = tlp([-1.0, -2.0], role="policy")
        r = tlp([-1.5, -2.5], role="reference")
        assert implicit_reward(p, r, 0.1) == pytest.approx(0.1, abs=1e-15)

    def test_beta_zero_scales_to_zero(self):
        p = tlp([-1.0, -2.0], role="policy")
        r = tlp([-3.0, -0.5], role="reference")
        assert implicit_reward(p, r, 0.0) == 0.0

    def test_token_count_mismatch(self):
        with pytest.raises(AlignmentError, match="token_count"):
            implicit_reward(tlp([-1.0]), tlp([-1.0, -2.0], role="reference"), 0.1)

    def test_pair_or_side_mismatch(self):
        with pytest.raises(AlignmentError):
            implicit_reward(tlp([-1.0], pair_id="a"), tlp([-1.0], pair_id="b", role="reference"), 0.1)
        with pytest.raises(AlignmentError):
            implicit_reward(tlp([-1.0], side="chosen"), tlp([-1.0], side="rejected", role="reference"), 0.1)

    @settings(max_examples=60, deadline=None)
    @given(
        values=st.lists(
            st.tuples(
                st.floats(min_value=-50, max_value=0, allow_nan=False),
                st.floats(min_value=-50, max_value=0, allow_nan=False),
            ),
            min_size=1,
            max_size=40,
        ),
        beta=st.sampled_from([0.01, 0.1, 1.0]),
    )
    def test_matches_naive_loop(self, values, beta):
        pol = [v[0] for v in values]
        ref = [v[1] for v in values]
        got = implicit_reward(tlp(pol, role="policy"), tlp(ref, role="reference"), beta)
        assert got == pytest.approx(naive_implicit_reward(pol, ref, beta), abs=1e-12)


class TestRewardGap:
    def test_identical_models_give_zero_gap(self, toy_scorer):
        same = ToyScorer(toy_scorer.policy, toy_scorer.policy)
        rec = reward_gap(PreferencePair("a", "ab", "cd a", "b da"), same, 0.1)
        assert rec.gap_raw == 0.0
        assert rec.gap_norm == 0.0

    def test_hand_computed_gap(self):
        scorer = CannedScorer(
            {
                ("chosen", "policy"): [-1.0],
                ("chosen", "reference"): [-2.0],
                ("rejected", "policy"): [-3.0],
                ("rejected", "reference"): [-2.0],
            }
        )
        rec = reward_gap(PreferencePair("a", "p", "c", "r"), scorer, 0.1)
        assert rec.r_w == pytest.approx(0.1, abs=1e-15)
        assert rec.r_l == pytest.approx(-0.1, abs=1e-15)
        assert rec.gap_raw == pytest.approx(0.2, abs=1e-15)
        assert rec.len_w == rec.len_l == 1
        assert rec.gap_norm == pytest.approx(0.2, abs=1e-15)
        assert scorer.stats.total_calls == 4

    def test_swapping_sides_negates_gap(self):
        scorer = CannedScorer(
            {
                ("chosen", "policy"): [-1.0],
                ("chosen", "reference"): [-2.0],
                ("rejected", "policy"): [-3.0],
                ("rejected", "reference"): [-2.0],
            }
        )
        swapped = CannedScorer(
            {
                ("chosen", "policy"): [-3.0],
                ("chosen", "reference"): [-2.0],
                ("rejected", "policy"): [-1.0],
                ("rejected", "reference"): [-2.0],
            }
        )
        pair = PreferencePair("a", "p", "c", "r")
        assert reward_gap(pair, swapped, 0.1).gap_raw == -reward_gap(pair, scorer, 0.1).gap_raw

    def test_antisymmetry_on_toy_pairs(self, toy_scorer):
        for pair in make_pairs(15, seed=42):
            rec = reward_gap(pair, toy_scorer, 0.1)
            flipped = PreferencePair(pair.id, pair.prompt, pair.rejected, pair.chosen)
            rec_flip = reward_gap(flipped, toy_scorer, 0.1)
            assert rec_flip.gap_raw == pytest.approx(-rec.gap_raw, abs=1e-15)
            assert rec_flip.gap_norm == pytest.approx(-rec.gap_norm, abs=1e-15)


class TestNormalizedGap:
    def test_per_token_average_difference(self):
        rec = RewardGapRecord("a", r_w=2.0, r_l=3.0, gap_raw=-1.0, gap_norm=0.0, len_w=2, len_l=3, beta=0.1)
        assert normalized_gap(rec) == 0.0

    def test_unit_lengths_equal_raw(self):
        rec = RewardGapRecord("a", r_w=0.4, r_l=-0.3, gap_raw=0.7, gap_norm=0.7, len_w=1, len_l=1, beta=0.1)
        assert normalized_gap(rec) == rec.gap_raw

    def test_zero_rewards(self):
        rec = RewardGapRecord("a", r_w=0.0, r_l=0.0, gap_raw=0.0, gap_norm=0.0, len_w=5, len_l=9, beta=0.1)
        assert normalized_gap(rec) == 0.0


class TestLossFunction:
    def test_zero_gap_is_ln_two(self):
        assert dpo_loss_of_gap(0.0, 0.1) == pytest.approx(LN2, abs=1e-15)

    def test_softplus_asymptote_no_overflow(self):
        # Frozen against a 50-digit evaluation: softplus(50) - 50 ~ 1.93e-22,
        # far below double resolution at 50, so the value is exactly 50.0.
        loss = dpo_loss_of_gap(-500.0, 0.1)
        assert math.isfinite(loss)
        assert loss == pytest.approx(50.0, abs=1e-9)

    def test_large_arguments_stay_finite(self):
        for bg in (700.0, -700.0):
            assert math.isfinite(dpo_loss_of_gap(bg, 1.0))

    def test_monotone_decreasing_to_zero(self):
        gaps = [g / 10 for g in range(-100, 101)]
        losses = [dpo_loss_of_gap(g, 1.0) for g in gaps]
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert dpo_loss_of_gap(60.0, 1.0) == pytest.approx(0.0, abs=1e-20)


class TestGradientWeight:
    def test_half_beta_at_zero(self):
        for beta in (0.01, 0.1, 1.0):
            assert gradient_weight(0.0, beta) == pytest.approx(beta * 0.5, abs=0, rel=1e-15)

    def test_vanishing_and_saturating_limits(self):
        # Frozen oracle values: sigma(-40) = 4.248354255291589e-18.
        beta = 0.1
        assert gradient_weight(400.0, beta) <= 1e-17 * beta
        assert gradient_weight(400.0, beta) == pytest.approx(beta * 4.248354255291589e-18, rel=1e-12)
        assert gradient_weight(-400.0, beta) >= beta * (1 - 1e-17)

    def test_strictly_decreasing(self):
        xs = [g / 100 for g in range(-2000, 2001)]
        ws = [gradient_weight(g, 0.5) for g in xs]
        assert all(a > b for a, b in zip(ws, ws[1:]))

    @settings(max_examples=100, deadline=None)
    @given(
        gap=st.floats(min_value=-20, max_value=20, allow_nan=False),
        beta=st.sampled_from([0.01, 0.1, 1.0]),
    )
    def test_is_negated_loss_derivative(self, gap, beta):
        h = 1e-5
        fd = (dpo_loss_of_gap(gap + h, beta) - dpo_loss_of_gap(gap - h, beta)) / (2 * h)
        assert -fd == pytest.approx(gradient_weight(gap, beta), rel=1e-6)


class TestPreferenceEntropy:
    def test_maximum_ln_two_at_zero(self):
        assert preference_entropy(0.0, 0.1) == pytest.approx(LN2, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(gap=st.floats(min_value=0, max_value=1000, allow_nan=False), beta=st.sampled_from([0.1, 1.0]))
    def test_symmetric_in_gap_sign(self, gap, beta):
        # Exact: both weights come from the stable sigmoid, so the two sums
        # are the same pair of products.
        assert preference_entropy(gap, beta) == preference_entropy(-gap, beta)

    def test_saturates_to_zero(self):
        assert preference_entropy(1000.0, 0.1) == 0.0

    @settings(max_examples=100, deadline=None)
    @given(gap=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    def test_bounded_by_ln_two(self, gap):
        h = preference_entropy(gap, 0.1)
        assert 0.0 <= h <= LN2 + 1e-15

    def test_equals_direct_formula_when_stable(self):
        for gap in (-3.0, -0.5, 0.2, 2.5):
            p = sigmoid(0.1 * gap)
            direct = -p * math.log(p) - (1 - p) * math.log(1 - p)
            assert preference_entropy(gap, 0.1) == pytest.approx(direct, rel=1e-12)


class TestComputeGapRecords:
    def test_cold_run_scores_every_pair(self, toy_scorer):
        pairs = make_pairs(10)
        cache, failures = compute_gap_records(pairs, toy_scorer, 0.1)
        assert failures == []
        assert len(cache) == 10
        assert toy_scorer.stats.total_calls == 40

    def test_warm_cache_skips_scoring(self, toy_scorer):
        pairs = make_pairs(10)
        cache, _ = compute_gap_records(pairs, toy_scorer, 0.1)
        rescorer = make_test_scorer()
        cache2, _ = compute_gap_records(pairs, rescorer, 0.1, cache=cache)
        assert rescorer.stats.total_calls == 0
        assert cache2.records == cache.records

    def test_worker_count_does_not_change_results(self):
        pairs = make_pairs(100, seed=5)
        one, _ = compute_gap_records(pairs, make_test_scorer(), 0.1, workers=1)
        two, _ = compute_gap_records(pairs, make_test_scorer(), 0.1, workers=2)
        four, _ = compute_gap_records(pairs, make_test_scorer(), 0.1, workers=4)
        assert one.records == two.records == four.records
        assert list(one.records) == [p.id for p in pairs]

    def test_strict_mode_raises_with_failed_ids(self, toy_scorer):
        pairs = make_pairs(4)
        pairs[2] = PreferencePair(pairs[2].id, "a", "zzz", "b")  # z outside alphabet
        with pytest.raises(GapComputationError) as err:
            compute_gap_records(pairs, toy_scorer, 0.1)
        assert [f.pair_id for f in err.value.failures] == [pairs[2].id]

    def test_permissive_mode_returns_partial_cache(self, toy_scorer):
        pairs = make_pairs(4)
        pairs[2] = PreferencePair(pairs[2].id, "a", "zzz", "b")
        cache, failures = compute_gap_records(pairs, toy_scorer, 0.1, strict=False)
        assert len(cache) == 3
        assert [f.pair_id for f in failures] == [pairs[2].id]
        assert pairs[2].id not in cache

    def test_mixed_warm_cache_keeps_input_order(self, toy_scorer):
        pairs = make_pairs(6)
        warm, _ = compute_gap_records(pairs[3:], toy_scorer, 0.1)
        full, _ = compute_gap_records(pairs, make_test_scorer(), 0.1, cache=warm)
        assert list(full.records) == [p.id for p in pairs]


class TestGapCache:
    def test_save_load_round_trip_is_exact(self, tmp_path, toy_scorer):
        pairs = make_pairs(12, seed=9)
        cache, _ = compute_gap_records(pairs, toy_scorer, 0.1, dataset_checksum="sum123")
        path = tmp_path / "gaps.jsonl"
        cache.save(path)
        back = GapCache.load(path)
        assert back.beta == cache.beta
        assert back.backend_fingerprint == cache.backend_fingerprint
        assert back.dataset_checksum == "sum123"
        assert back.records == cache.records  # exact float equality

    def test_stale_cache_rejected(self, toy_scorer):
        cache, _ = compute_gap_records(make_pairs(2), toy_scorer, 0.1, dataset_checksum="sum")
        with pytest.raises(StaleCacheError, match="beta"):
            cache.ensure_compatible(0.2, toy_scorer.fingerprint(), "sum")
        with pytest.raises(StaleCacheError, match="backend"):
            cache.ensure_compatible(0.1, "other", "sum")
        with pytest.raises(StaleCacheError, match="dataset"):
            cache.ensure_compatible(0.1, toy_scorer.fingerprint(), "othersum")
        cache.ensure_compatible(0.1, toy_scorer.fingerprint(), "sum")
