import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbplab.errors import ParameterError, StructuralError
from wbplab.gf2codes import Code, is_codeword, random_codewords, reed_muller
from wbplab.osd import OsdConfig, correlation, flip_patterns, osd_decode

from oracles import G63, all_codewords, ml_decode

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def code63():
    return Code.from_generator(G63)


class TestConfig:
    @pytest.mark.parametrize("order,k,count", [(0, 16, 1), (1, 16, 17), (3, 16, 697), (5, 3, 8)])
    def test_candidate_count(self, order, k, count):
        assert OsdConfig(order).candidates(k) == count
        assert len(flip_patterns(k, order)) == count

    def test_pattern_order(self):
        assert flip_patterns(3, 2).tolist() == [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1],
                                                [1, 1, 0], [1, 0, 1], [0, 1, 1]]

    def test_negative_order(self):
        with pytest.raises(ParameterError):
            OsdConfig(-1)

    def test_order_above_k(self, code63):
        with pytest.raises(ParameterError):
            osd_decode(code63, np.ones(6), OsdConfig(4))


class TestDecode:
    def test_full_order_is_ml(self, code63):
        rng = np.random.default_rng(0)
        book = all_codewords(G63)
        for _ in range(1000):
            llr = rng.normal(0, 2, 6)
            got = osd_decode(code63, llr, OsdConfig(3))
            assert correlation(llr, got) == pytest.approx(correlation(llr, ml_decode(book, llr)))

    @pytest.mark.parametrize("order", [0, 1, 3])
    def test_noiseless(self, order, rng):
        code = reed_muller(2, 5)
        for cw in random_codewords(code, 5, rng):
            assert np.array_equal(osd_decode(code, 3.0 * (1 - 2.0 * cw), OsdConfig(order)), cw)

    def test_order_zero_reencodes_reliable_basis(self):
        code = reed_muller(1, 3)
        llr = np.array([9.0, 8, 7, 6, 5, 4, 3, -0.1])  # only the least reliable bit is wrong
        assert not osd_decode(code, llr, OsdConfig(0)).any()

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_monotone_in_order_and_valid(self, seed):
        rng = np.random.default_rng(seed)
        code = reed_muller(1, 4)
        llr = rng.normal(1.0, 1.5, 16)
        scores = []
        for order in range(4):
            out = osd_decode(code, llr, OsdConfig(order))
            assert is_codeword(code, out)
            scores.append(correlation(llr, out))
        assert all(a <= b + 1e-12 for a, b in zip(scores, scores[1:]))

    def test_batch(self, rng):
        code = reed_muller(1, 3)
        llr = rng.normal(1, 1, (4, 8))
        out = osd_decode(code, llr, OsdConfig(2))
        assert np.array_equal(out, np.stack([osd_decode(code, r, OsdConfig(2)) for r in llr]))

    def test_length_check(self):
        with pytest.raises(ParameterError):
            osd_decode(reed_muller(1, 3), np.ones(7))

    def test_rank_failure(self, monkeypatch):
        code = reed_muller(1, 3)
        import wbplab.osd as osd_mod
        monkeypatch.setattr(osd_mod, "rref", lambda a: (a[:2], [0, 1]))
        with pytest.raises(StructuralError):
            osd_decode(code, np.ones(8))
