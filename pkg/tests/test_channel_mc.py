import math

import numpy as np
import pytest

from wbplab.channel_mc import (BER_COLUMNS, BerEstimate, ChannelConfig, StopRule, ber_row, default_snr_grid,
                               estimate_ber, stream_rng, training_batch, transmit)
from wbplab.errors import ParameterError
from wbplab.gf2codes import is_codeword


def hard(llr, rng):
    return (llr < 0).astype(np.uint8)


class TestChannel:
    def test_variance(self):
        cfg = ChannelConfig(0.5, 3.0)
        assert cfg.variance == pytest.approx(1 / (2 * 0.5 * 10 ** 0.3))
        y = transmit(np.zeros(200000, dtype=np.uint8), cfg, np.random.default_rng(0))
        assert y.mean() == pytest.approx(1.0, abs=0.01)
        assert y.var() == pytest.approx(cfg.variance, rel=0.02)

    def test_bpsk_mapping(self):
        y = transmit(np.array([0, 1]), ChannelConfig(1.0, 200.0), np.random.default_rng(0))
        assert np.allclose(y, [1.0, -1.0])

    def test_bad_rate(self):
        with pytest.raises(ParameterError):
            ChannelConfig(0.0, 1.0)

    def test_streams_are_independent_and_reproducible(self):
        a = stream_rng(1, 0, 5).standard_normal(4)
        assert np.array_equal(a, stream_rng(1, 0, 5).standard_normal(4))
        assert not np.array_equal(a, stream_rng(1, 0, 6).standard_normal(4))
        assert not np.array_equal(a, stream_rng(1, 1, 5).standard_normal(4))


class TestEstimate:
    def test_uncoded_ber_matches_q_function(self):
        cfg = ChannelConfig(1.0, 4.0)
        est = estimate_ber(hard, cfg, 100, StopRule(10**9, 20000), seed=3)
        p = 0.5 * math.erfc(math.sqrt(cfg.snr))
        se = math.sqrt(p * (1 - p) / est.bits)
        assert abs(est.ber - p) < 4 * se
        lo, hi = est.interval
        assert lo <= est.ber <= hi

    @pytest.mark.parametrize("workers", [2, 3, 5])
    def test_worker_count_does_not_change_counts(self, workers):
        cfg = ChannelConfig(0.5, 1.0)
        stop = StopRule(500, 5000)
        one = estimate_ber(hard, cfg, 32, stop, seed=9, workers=1)
        many = estimate_ber(hard, cfg, 32, stop, seed=9, workers=workers)
        assert one == many

    def test_stops_at_chunk_boundary(self):
        est = estimate_ber(hard, ChannelConfig(0.5, 0.0), 32, StopRule(100, 10**6), seed=0, chunk_frames=50)
        assert est.bit_errors >= 100 and est.frames == 50

    def test_frame_cap(self):
        est = estimate_ber(hard, ChannelConfig(0.5, 10.0), 8, StopRule(100, 1234), seed=0)
        assert est.frames == 1234

    def test_zero_frames(self):
        est = estimate_ber(hard, ChannelConfig(0.5, 1.0), 8, StopRule(100, 0))
        assert est == BerEstimate()
        assert math.isnan(est.ber) and math.isnan(est.interval[0])

    def test_decoder_failure_counts_as_errors(self):
        def broken(llr, rng):
            raise FloatingPointError("boom")
        est = estimate_ber(broken, ChannelConfig(0.5, 1.0), 8, StopRule(10**9, 300), chunk_frames=100)
        assert est.bit_errors == est.bits == 2400 and est.frame_errors == 300

    def test_random_codewords(self, hamming):
        seen = []

        def dec(llr, rng):
            seen.append(llr)
            return (llr < 0).astype(np.uint8)
        estimate_ber(dec, ChannelConfig(4 / 7, 30.0), 7, StopRule(1, 400), code=hamming)
        words = (np.concatenate(seen) < 0).astype(np.uint8)
        assert all(is_codeword(hamming, w) for w in words)
        assert words.any()

    def test_merge_and_row(self):
        a = BerEstimate(1, 10, 1, 1)
        a.merge(BerEstimate(2, 10, 1, 1))
        assert (a.ber, a.fer) == (0.15, 1.0)
        row = ber_row("c", "oc", "bp", 3.0, a, 7)
        assert len(row) == len(BER_COLUMNS) and row[-1] == "7"


class TestTrainingBatch:
    def test_grouping(self, rng):
        grid = default_snr_grid()
        assert grid.size == 10 and grid[0] == 1.0 and grid[-1] == 8.0
        b = training_batch(grid, 3, 16, 0.5, rng)
        assert len(b) == 30
        assert np.array_equal(b.snr_db, np.repeat(grid, 3))
        assert not b.x.any()

    def test_llr_uses_per_sample_snr(self, rng):
        b = training_batch([0.0, 10.0], 1, 4, 0.5, rng)
        expect = 4 * 0.5 * np.array([1.0, 10.0])[:, None] * b.y
        assert np.allclose(b.llr(0.5), expect)

    def test_empty_grid(self, rng):
        with pytest.raises(ParameterError):
            training_batch([], 3, 4, 0.5, rng)
