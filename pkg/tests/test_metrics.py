import math

import numpy as np
import pytest

from actcodec import metrics


class TestVrr:
    def test_perfect_reconstruction(self):
        rng = np.random.default_rng(0)
        truth = rng.uniform(-1, 1, (4, 10, 7))
        rep = metrics.valid_reconstruction_rate(truth, truth, 1e-6)
        assert rep.vrr == 1.0 and rep.n_total == 40

    def test_one_of_four_invalid(self):
        truth = np.zeros((1, 4, 3))
        recon = truth.copy()
        sigma = 0.05
        recon[0, 2, 0] = 2 * sigma  # step error L1 = 2*sigma >= sigma
        rep = metrics.valid_reconstruction_rate(recon, truth, sigma)
        assert rep.n_valid == 3 and rep.vrr == 0.75

    def test_strict_inequality(self):
        truth = np.zeros((1, 1, 2))
        recon = np.array([[[0.05, 0.05]]])
        assert metrics.valid_reconstruction_rate(recon, truth, 0.1).vrr == 0.0
        assert metrics.valid_reconstruction_rate(recon, truth, 0.100001).vrr == 1.0

    def test_monotone_in_sigma(self):
        rng = np.random.default_rng(1)
        truth = rng.uniform(-1, 1, (8, 20, 7))
        recon = truth + rng.normal(0, 0.01, truth.shape)
        rates = [metrics.valid_reconstruction_rate(recon, truth, s).vrr
                 for s in (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)]
        assert all(a <= b for a, b in zip(rates, rates[1:]))
        assert all(0.0 <= r <= 1.0 for r in rates)

    def test_masked_rows_excluded(self):
        truth = np.zeros((1, 4, 2))
        recon = truth.copy()
        recon[0, 3] = 9.0  # padded row, must not count either way
        mask = np.array([[True, True, True, False]])
        rep = metrics.valid_reconstruction_rate(recon, truth, 0.1, mask)
        assert rep.n_total == 3 and rep.n_valid == 3

    def test_per_scalar_variant(self):
        truth = np.zeros((1, 2, 2))
        recon = np.array([[[0.0, 0.2], [0.0, 0.0]]])
        rep = metrics.valid_reconstruction_rate(recon, truth, 0.1, per_scalar=True)
        assert rep.n_total == 4 and rep.n_valid == 3

    def test_errors(self):
        with pytest.raises(ValueError):
            metrics.valid_reconstruction_rate(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), 0.0)
        with pytest.raises(ValueError):
            metrics.valid_reconstruction_rate(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)), 0.1)


class TestCompressionRatio:
    def test_libero_shape(self):
        assert metrics.compression_ratio((20, 7), 21) == pytest.approx(140 / 21)

    def test_wbc_shape(self):
        assert metrics.compression_ratio((32, 21), 126) == pytest.approx(672 / 126)

    def test_no_compression(self):
        assert metrics.compression_ratio((10, 3), 30) == 1.0


class TestCodeStats:
    def test_uniform_usage(self):
        k = 16
        codes = np.arange(k).reshape(1, 1, 1, k)  # every code exactly once
        stats = metrics.code_stats([codes[0]], k, codebook_size=None)
        assert stats.usage_pct == 100.0
        assert stats.f_max_pct == pytest.approx(100.0 / k)
        assert stats.entropy_norm == pytest.approx(1.0)

    def test_single_code_degenerate(self):
        stats = metrics.CodeStats(vocab_size=8, counts=np.array([0, 5, 0, 0, 0, 0, 0, 0]))
        assert stats.usage_pct == pytest.approx(100.0 / 8)
        assert stats.entropy_norm == 0.0

    def test_hand_histogram(self):
        stats = metrics.CodeStats(vocab_size=4, counts=np.array([3, 1, 0, 0]))
        assert stats.usage_pct == pytest.approx(50.0)
        assert stats.f_max_pct == pytest.approx(75.0)
        expected = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25)) / math.log(4)
        assert stats.entropy_norm == pytest.approx(expected, abs=1e-9)
        assert abs(expected - 0.4056) < 1e-4

    def test_stage_offsets(self):
        # stage 1's index 0 lands at offset K in the shared vocabulary
        codes = np.array([[[0]], [[0]]])  # (N_c=2, C_h=1, C_a=1)
        stats = metrics.code_stats([codes], vocab_size=8, codebook_size=4)
        assert stats.counts[0] == 1 and stats.counts[4] == 1

    def test_thresholds(self):
        counts = np.array([980, 19, 1, 0])
        stats = metrics.CodeStats(vocab_size=4, counts=counts, thresholds=(1e-3, 2e-2))
        active = stats.active_above
        assert active[1e-3] == 2  # 0.98 and 0.019 exceed 0.001; 0.001 does not (strict)
        assert active[2e-2] == 1

    def test_empty_stream_errors(self):
        with pytest.raises(ValueError):
            metrics.code_stats([], 8)

    def test_out_of_range_errors(self):
        with pytest.raises(ValueError):
            metrics.code_stats([np.array([[[9]]])], vocab_size=4, codebook_size=None)


def test_code_stats_invariants_random_histograms():
    rng = np.random.default_rng(7)
    for _ in range(200):
        k = int(rng.integers(2, 64))
        counts = rng.integers(0, 50, size=k)
        if counts.sum() == 0:
            counts[0] = 1
        stats = metrics.CodeStats(vocab_size=k, counts=counts)
        assert 0.0 <= stats.entropy_norm <= 1.0 + 1e-12
        assert 0.0 < stats.f_max_pct <= 100.0
        if stats.usage_pct == 100.0:
            assert stats.f_max_pct >= 100.0 / k - 1e-9


class TestBinning:
    def test_two_bin_sign_split(self):
        tokens = metrics.binning_tokenize(np.array([[-0.3, 0.3]]), 2)
        assert tokens.tolist() == [[0, 1]]

    def test_round_trip_error_bound(self):
        rng = np.random.default_rng(2)
        values = rng.uniform(-1, 1, (50, 7))
        for bins in (2, 16, 256):
            back = metrics.binning_detokenize(metrics.binning_tokenize(values, bins), bins)
            assert np.max(np.abs(back - values)) <= 1.0 / bins + 1e-12

    def test_edges(self):
        assert metrics.binning_tokenize(np.array([-1.0]), 4)[0] == 0
        assert metrics.binning_tokenize(np.array([1.0]), 4)[0] == 3
        with pytest.raises(ValueError):
            metrics.binning_tokenize(np.zeros(1), 1)

    def test_token_count_is_h_times_d(self):
        values = np.zeros((9, 5))
        assert metrics.binning_tokenize(values, 8).size == 45


class TestVrrSweep:
    def test_identity_reconstructor(self):
        rng = np.random.default_rng(3)
        values = rng.uniform(-1, 1, (6, 8, 3)).astype(np.float32)
        mask = np.ones((6, 8), bool)
        sweep = metrics.vrr_sweep(lambda v: v, values, mask, [1e-3, 1e-2],
                                  tags=["a", "a", "b", "b", "b", "a"])
        assert sweep["overall"] == [1.0, 1.0]
        assert sweep["by_tag"]["a"] == [1.0, 1.0]

    def test_monotone_rows_and_tags(self):
        rng = np.random.default_rng(4)
        values = rng.uniform(-1, 1, (10, 8, 3)).astype(np.float32)
        noisy = values + rng.normal(0, 0.02, values.shape).astype(np.float32)
        sweep = metrics.vrr_sweep(lambda v: noisy, values, np.ones((10, 8), bool),
                                  [1e-1, 1e-3, 1e-2])
        assert sweep["sigmas"] == sorted(sweep["sigmas"])
        assert sweep["overall"] == sorted(sweep["overall"])

    def test_random_reconstructor_near_zero_at_tight_sigma(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(-1, 1, (10, 8, 3)).astype(np.float32)
        garbage = rng.uniform(-1, 1, values.shape).astype(np.float32)
        sweep = metrics.vrr_sweep(lambda v: garbage, values, np.ones((10, 8), bool), [1e-3])
        assert sweep["overall"][0] <= 0.05
