import math

import numpy as np
import pytest

from actcodec.blockar import (CodePolicy, PolicyConfig, build_mask,
                              build_schedule, decode_rollout, latency_model,
                              schedule_from_text, schedule_to_text,
                              sinusoid_encoding, spacing_positions, train_policy)


class TestSchedule:
    def test_libero_counts(self):
        sched = build_schedule(3, 1, 7, 7)
        assert sched.n_tokens == 21
        assert sched.n_blocks == 3
        assert sched.block_bounds == [(0, 7), (7, 14), (14, 21)]

    def test_single_token(self):
        sched = build_schedule(1, 1, 1, 1)
        assert sched.flat_order == ((0, 0, 0),)
        assert sched.n_blocks == 1

    def test_enumerated_order(self):
        sched = build_schedule(2, 2, 3, 4)
        expected = [
            (0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 1, 0), (0, 1, 1), (0, 1, 2),
            (1, 0, 0), (1, 0, 1), (1, 0, 2), (1, 1, 0), (1, 1, 1), (1, 1, 2),
        ]
        assert list(sched.flat_order) == expected
        assert sched.n_blocks == 3

    def test_order_is_bijection_and_monotone(self):
        sched = build_schedule(3, 2, 5, 4)
        assert len(set(sched.flat_order)) == sched.n_tokens
        stages = [s for s, _, _ in sched.flat_order]
        assert stages == sorted(stages)
        for s in range(3):
            horizons = [h for st, h, _ in sched.flat_order if st == s]
            assert horizons == sorted(horizons)

    def test_flatten_unflatten(self):
        sched = build_schedule(2, 2, 3, 4)
        rng = np.random.default_rng(0)
        codes = rng.integers(0, 9, size=(4, 2, 2, 3))
        flat = sched.flatten(codes)
        assert flat.shape == (4, 12)
        assert np.array_equal(sched.unflatten(flat), codes)
        assert flat[0, 0] == codes[0, 0, 0, 0]
        assert flat[0, 3] == codes[0, 0, 1, 0]

    def test_invalid_block_sizes(self):
        with pytest.raises(ValueError):
            build_schedule(1, 1, 4, 0)
        with pytest.raises(ValueError):
            build_schedule(1, 1, 4, 5)

    def test_wbc_shape_reports_computed_blocks(self):
        # 3*2*21 = 126 tokens at block 8 -> 16 passes by arithmetic
        sched = build_schedule(3, 2, 21, 8)
        assert sched.n_tokens == 126
        assert sched.n_blocks == 16

    def test_text_round_trip(self):
        sched = build_schedule(3, 1, 7, 7)
        assert schedule_from_text(schedule_to_text(sched)) == sched
        with pytest.raises(ValueError):
            schedule_from_text("n_stages = 1\n")


class TestMask:
    def test_block_one_equals_causal(self):
        for prefix in (0, 1, 3):
            sched = build_schedule(2, 1, 4, 1)
            mask = build_mask(prefix, sched)
            size = prefix + sched.padded_len
            assert np.array_equal(mask, np.tril(np.ones((size, size), dtype=bool)))

    def test_full_block_bidirectional(self):
        sched = build_schedule(1, 1, 4, 4)
        mask = build_mask(2, sched)
        action = mask[2:, 2:]
        assert action.all()  # one block: full intra-block visibility
        assert mask[2:, :2].all()  # actions see the whole prefix
        assert not mask[:2, 2:].any()  # prefix never sees actions
        assert np.array_equal(mask[:2, :2], np.tril(np.ones((2, 2), bool)))

    def test_predicate_oracle(self):
        prefix = 2
        sched = build_schedule(1, 1, 4, 2)
        mask = build_mask(prefix, sched)

        def visible(i, j):
            if j < prefix:
                return j <= i if i < prefix else True
            if i < prefix:
                return False
            return (j - prefix) // 2 <= (i - prefix) // 2

        for i in range(6):
            for j in range(6):
                assert mask[i, j] == visible(i, j), (i, j)

    def test_never_sees_future_blocks(self):
        sched = build_schedule(2, 1, 6, 3)
        mask = build_mask(1, sched)
        assert not mask[1:4, 4:].any()


class TestSpacing:
    def test_zero_jitter_unit_spacing(self):
        plan = spacing_positions(5, 0, "train", seed=0)
        assert plan.positions.tolist() == [0, 1, 2, 3, 4]

    def test_infer_fixed_spacing(self):
        plan = spacing_positions(4, 2, "infer")
        assert plan.positions.tolist() == [0, 2, 4, 6]

    def test_jitter_gaps_in_range_and_all_occur(self):
        gaps = []
        for seed in range(300):
            plan = spacing_positions(12, 2, "train", seed=seed)
            gaps.extend(np.diff(plan.positions).tolist())
        assert set(gaps) == {1, 2, 3}

    def test_strictly_increasing(self):
        for mode, seed in (("train", 3), ("infer", None)):
            plan = spacing_positions(20, 2, mode, seed=seed)
            assert np.all(np.diff(plan.positions) > 0)

    def test_deterministic_given_seed(self):
        a = spacing_positions(10, 2, "train", seed=5)
        b = spacing_positions(10, 2, "train", seed=5)
        assert np.array_equal(a.positions, b.positions)

    def test_errors(self):
        with pytest.raises(ValueError):
            spacing_positions(3, -1, "train", seed=0)
        with pytest.raises(ValueError):
            spacing_positions(3, 0, "rollout")
        with pytest.raises(ValueError):
            spacing_positions(0, 0, "train")

    def test_start_offset(self):
        plan = spacing_positions(3, 0, "infer", start=10)
        assert plan.positions.tolist() == [10, 12, 14]


def make_policy(block_size, n_stages=2, c_h=1, c_a=3, k=5, seed=0, jitter=0):
    sched = build_schedule(n_stages, c_h, c_a, block_size)
    cfg = PolicyConfig(d_model=32, n_layers=1, n_heads=2, context_dim=4, jitter=jitter)
    return CodePolicy(n_stages, k, sched, cfg, seed=seed)


class TestPolicy:
    def test_initial_loss_is_log_k(self):
        # stage-restricted softmax over zero logits is uniform over K codes
        policy = make_policy(block_size=3, k=5)
        for _, param in policy.named_parameters():
            param[...] = 0.0
        rng = np.random.default_rng(0)
        contexts = rng.standard_normal((4, 4)).astype(np.float32)
        codes = rng.integers(0, 5, size=(4, 2, 1, 3))
        loss = policy.loss(contexts, codes)
        assert loss == pytest.approx(math.log(5), rel=1e-5)

    def test_bar_b1_equals_ar_bitwise(self):
        rng = np.random.default_rng(1)
        contexts = rng.standard_normal((4, 4)).astype(np.float32)
        codes = rng.integers(0, 5, size=(4, 2, 1, 3))
        bar = make_policy(block_size=1, seed=3)
        ar = make_policy(block_size=1, seed=3)  # AR mode is the B=1 schedule
        assert bar.loss(contexts, codes) == ar.loss(contexts, codes)

    def test_short_final_block_padding_excluded(self):
        policy = make_policy(block_size=4)  # 6 tokens -> blocks of 4 and 2
        assert policy.schedule.padded_len == 8
        targets, weight = policy.targets(np.zeros((1, 2, 1, 3), dtype=np.int64))
        assert targets.shape == (1, 8)
        assert weight[0].tolist() == [1, 1, 1, 1, 1, 1, 0, 0]
        assert targets[0, 6] == policy.block_end_id

    def test_overfit_and_greedy_reproduction(self):
        rng = np.random.default_rng(2)
        n = 6
        contexts = rng.standard_normal((n, 4)).astype(np.float32)
        codes = rng.integers(0, 5, size=(n, 2, 1, 3))
        policy = make_policy(block_size=3, seed=7)
        curve = train_policy(policy, contexts, codes, steps=700, lr=3e-3)
        assert curve[-1] < 0.01
        assert curve[-1] < curve[0]
        for i in range(n):
            rollout = decode_rollout(policy, contexts[i], top_k=1)
            assert rollout.pass_count == policy.schedule.n_blocks
            assert np.array_equal(rollout.codes, codes[i])

    def test_rollout_pass_counts(self):
        policy = make_policy(block_size=3)
        rollout = decode_rollout(policy, np.zeros(4, dtype=np.float32), top_k=1)
        assert rollout.pass_count == 2
        ar_policy = make_policy(block_size=1)
        rollout = decode_rollout(ar_policy, np.zeros(4, dtype=np.float32), top_k=1)
        assert rollout.pass_count == 6
        assert rollout.codes.shape == (2, 1, 3)
        assert np.all(rollout.codes >= 0) and np.all(rollout.codes < 5)

    def test_greedy_rollout_deterministic(self):
        policy = make_policy(block_size=3, seed=11)
        ctx = np.random.default_rng(3).standard_normal(4).astype(np.float32)
        a = decode_rollout(policy, ctx, top_k=1, seed=0)
        b = decode_rollout(policy, ctx, top_k=1, seed=99)  # seed unused when greedy
        assert np.array_equal(a.codes, b.codes)

    def test_sampler_validation(self):
        policy = make_policy(block_size=3)
        ctx = np.zeros(4, dtype=np.float32)
        with pytest.raises(ValueError):
            decode_rollout(policy, ctx, top_k=0)
        with pytest.raises(ValueError):
            decode_rollout(policy, ctx, top_k=2, temperature=0.0)

    def test_topk_sampling_stays_in_stage_range(self):
        policy = make_policy(block_size=3, seed=13)
        ctx = np.zeros(4, dtype=np.float32)
        out = decode_rollout(policy, ctx, top_k=5, temperature=0.8, seed=1)
        assert np.all(out.codes >= 0) and np.all(out.codes < 5)

    def test_jitter_training_still_learns(self):
        rng = np.random.default_rng(4)
        contexts = rng.standard_normal((4, 4)).astype(np.float32)
        codes = rng.integers(0, 5, size=(4, 2, 1, 3))
        policy = make_policy(block_size=3, seed=5, jitter=2)
        curve = train_policy(policy, contexts, codes, steps=200, lr=3e-3, jitter_seed=1)
        assert curve[-1] < curve[0] * 0.5


class TestLatency:
    def test_libero_total_matches_published_breakdown(self):
        sched = build_schedule(3, 1, 7, 7)
        out = latency_model(7.4, sched, {"image_encode": 16.0, "obs_forward": 72.0,
                                         "detokenize": 2.7})
        assert out["pass_count"] == 3
        assert out["decode_passes"] == pytest.approx(22.2)
        assert out["total"] == pytest.approx(112.9)
        assert abs(out["total"] - 112.0) < 1.0

    def test_pass_term_linear_in_blocks(self):
        extras = {"x": 1.0}
        a = latency_model(5.0, build_schedule(1, 1, 8, 4), extras)
        b = latency_model(5.0, build_schedule(1, 1, 8, 2), extras)
        assert b["decode_passes"] == pytest.approx(2 * a["decode_passes"])

    def test_ar_vs_bar_ratio(self):
        sched = build_schedule(3, 1, 7, 7)
        ar = latency_model(6.4, sched, {}, mode="ar")
        bar = latency_model(7.4, sched, {}, mode="bar")
        assert ar["pass_count"] == 21 and bar["pass_count"] == 3
        assert ar["decode_passes"] / bar["decode_passes"] == pytest.approx(6.054, abs=0.01)

    def test_input_validation(self):
        sched = build_schedule(1, 1, 4, 2)
        with pytest.raises(ValueError):
            latency_model(0.0, sched, {})
        with pytest.raises(ValueError):
            latency_model(1.0, sched, {"x": -1.0})
        with pytest.raises(ValueError):
            latency_model(1.0, sched, {}, mode="seq")


def test_sinusoid_encoding_shapes_and_determinism():
    pos = np.array([0, 2, 4, 6])
    enc = sinusoid_encoding(pos, 16)
    assert enc.shape == (4, 16)
    assert np.array_equal(enc, sinusoid_encoding(pos, 16))
    assert not np.allclose(enc[0], enc[1])
