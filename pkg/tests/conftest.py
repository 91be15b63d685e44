import numpy as np
import pytest

from wbplab.gf2codes import Code, enumerate_min_weight_dual, reed_muller
from wbplab.tanner import build_graph

from oracles import HAMMING_H, SPC43_H


@pytest.fixture(scope="session")
def hamming():
    return Code.from_pcm(HAMMING_H, name="Hamming(7,4)")


@pytest.fixture(scope="session")
def spc43():
    return Code.from_pcm(SPC43_H, name="SPC(4,3)")


@pytest.fixture(scope="session")
def rm25():
    return reed_muller(2, 5)


@pytest.fixture(scope="session")
def rm25_oc(rm25):
    return enumerate_min_weight_dual(rm25)


@pytest.fixture(scope="session")
def rm25_oc_graph(rm25_oc):
    return build_graph(rm25_oc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
