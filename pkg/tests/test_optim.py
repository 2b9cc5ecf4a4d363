import math

import numpy as np
import pytest

from actcodec.optim import AdamW, clip_by_global_norm, cosine_warmup_lr, global_norm


class TestAdamW:
    def test_zero_grad_step_is_pure_decay(self):
        rng = np.random.default_rng(0)
        params = {"w": rng.standard_normal((3, 3)), "b": rng.standard_normal(4)}
        before = {k: v.copy() for k, v in params.items()}
        opt = AdamW(params, weight_decay=0.1)
        opt.step(params, {k: np.zeros_like(v) for k, v in params.items()}, lr=0.01)
        for k in params:
            assert np.array_equal(params[k], before[k] * (1.0 - 0.01 * 0.1))

    def test_single_step_matches_hand_formula(self):
        p = np.array([1.0])
        g = np.array([0.5])
        opt = AdamW({"p": p}, betas=(0.9, 0.95), eps=1e-8, weight_decay=0.0)
        opt.step({"p": p}, {"p": g}, lr=0.1)
        m_hat = (0.1 * 0.5) / (1 - 0.9)
        v_hat = (0.05 * 0.25) / (1 - 0.95)
        assert p[0] == pytest.approx(1.0 - 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8), rel=1e-12)

    def test_state_round_trip(self):
        rng = np.random.default_rng(1)
        params = {"w": rng.standard_normal(5).astype(np.float32)}
        opt = AdamW(params)
        for _ in range(3):
            opt.step(params, {"w": rng.standard_normal(5).astype(np.float32)}, lr=0.01)
        state = opt.state_arrays()
        opt2 = AdamW({"w": params["w"].copy()})
        opt2.load_state_arrays(state)
        assert opt2.t == 3
        assert np.array_equal(opt2.m["w"], opt.m["w"])
        assert np.array_equal(opt2.v["w"], opt.v["w"])


class TestSchedule:
    def test_first_step_is_linear_warmup(self):
        assert cosine_warmup_lr(1, 1e-4, 1000, 20000) == pytest.approx(1e-4 / 1000)

    def test_warmup_end_hits_peak(self):
        assert cosine_warmup_lr(1000, 1e-4, 1000, 20000) == pytest.approx(1e-4)

    def test_final_step_is_zero(self):
        assert cosine_warmup_lr(20000, 1e-4, 1000, 20000) == pytest.approx(0.0, abs=1e-20)

    def test_midpoint_is_half(self):
        total, warm = 11000, 1000
        mid = warm + (total - warm) // 2
        assert cosine_warmup_lr(mid, 2e-3, warm, total) == pytest.approx(1e-3)

    def test_monotone_decay_after_warmup(self):
        values = [cosine_warmup_lr(s, 1e-3, 100, 2000) for s in range(100, 2001)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_no_warmup(self):
        assert cosine_warmup_lr(1, 1e-3, 0, 100) < 1e-3
        with pytest.raises(ValueError):
            cosine_warmup_lr(0, 1e-3, 10, 100)


class TestClip:
    def test_norm_ten_scales_by_tenth(self):
        grads = {"a": np.array([6.0, 8.0])}  # norm 10
        norm = clip_by_global_norm(grads, 1.0)
        assert norm == pytest.approx(10.0)
        assert np.allclose(grads["a"], [0.6, 0.8])

    def test_below_clip_untouched(self):
        grads = {"a": np.array([0.3, 0.4])}
        clip_by_global_norm(grads, 1.0)
        assert np.allclose(grads["a"], [0.3, 0.4])

    def test_global_norm_spans_parameters(self):
        grads = {"a": np.full(4, 1.0), "b": np.full(5, 1.0)}
        assert global_norm(grads) == pytest.approx(3.0)
