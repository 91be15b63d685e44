"""Ordered statistics decoding, used as the near-ML benchmark."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .errors import ParameterError, StructuralError
from .gf2codes import Code, rref


@dataclass(frozen=True)
class OsdConfig:
    order: int = 3

    def __post_init__(self):
        if self.order < 0:
            raise ParameterError("OSD order must be non-negative")

    def candidates(self, k: int) -> int:
        return sum(comb(k, i) for i in range(min(self.order, k) + 1))


@lru_cache(maxsize=16)
def flip_patterns(k: int, order: int) -> np.ndarray:
    """All flip patterns of weight <= order, by weight then lexicographic support."""
    rows = [np.zeros(k, dtype=np.uint8)]
    for w in range(1, min(order, k) + 1):
        for supp in combinations(range(k), w):
            r = np.zeros(k, dtype=np.uint8)
            r[list(supp)] = 1
            rows.append(r)
    out = np.array(rows)
    out.setflags(write=False)
    return out


def _decode_one(gen: np.ndarray, llr: np.ndarray, patterns: np.ndarray) -> np.ndarray:
    k, n = gen.shape
    order = np.argsort(-np.abs(llr), kind="stable")
    red, piv = rref(gen[:, order])
    if len(piv) < k:
        raise StructuralError("generator matrix is rank deficient")
    lp = llr[order]
    hard = (lp < 0).astype(np.uint8)
    base = hard[piv]
    info = patterns ^ base
    cands = (info.astype(np.int64) @ red.astype(np.int64)) & 1
    score = ((1 - 2 * cands) * lp).sum(axis=1)
    best = cands[int(np.argmax(score))]   # argmax returns the first maximum
    out = np.empty(n, dtype=np.uint8)
    out[order] = best
    return out


def osd_decode(code: Code, llr, cfg: OsdConfig = OsdConfig()) -> np.ndarray:
    """Most-reliable-basis reprocessing; accepts (N,) or (B, N) LLRs."""
    llr = np.asarray(llr, dtype=float)
    if llr.shape[-1] != code.n:
        raise ParameterError(f"LLR length {llr.shape[-1]} != N={code.n}")
    if cfg.order > code.k:
        raise ParameterError(f"OSD order {cfg.order} exceeds K={code.k}")
    gen = np.asarray(code.generator, dtype=np.uint8)
    pats = flip_patterns(code.k, cfg.order)
    if llr.ndim == 1:
        return _decode_one(gen, llr, pats)
    return np.stack([_decode_one(gen, row, pats) for row in llr.reshape(-1, code.n)]).reshape(llr.shape)


def correlation(llr, word) -> np.ndarray:
    """Sum_v llr_v * (-1)^c_v."""
    return (np.asarray(llr, dtype=float) * (1.0 - 2.0 * np.asarray(word, dtype=float))).sum(axis=-1)
