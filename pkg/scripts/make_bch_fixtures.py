"""Regenerate the bundled BCH parity-check matrices.

Builds the narrow-sense primitive BCH generator polynomial from minimal
polynomials over GF(2^m), forms the cyclic parity-check matrix from the
check polynomial, then applies greedy row additions that lower the number
of length-4 cycles while keeping the row space. Output goes to
src/wbplab/data/bch_<n>_<k>_cr.alist.

    python scripts/make_bch_fixtures.py
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from wbplab.gf2codes import gf2_rank, write_alist

PRIMITIVE = {6: 0b1000011, 7: 0b10001001}   # x^6+x+1, x^7+x^3+1


def gf_tables(m: int):
    n = (1 << m) - 1
    exp = np.zeros(2 * n, dtype=np.int64)
    x = 1
    for i in range(n):
        exp[i] = exp[i + n] = x
        x <<= 1
        if x >> m:
            x ^= PRIMITIVE[m]
    return exp


def poly_mul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def poly_divmod(a: int, b: int) -> tuple[int, int]:
    q = 0
    db = b.bit_length()
    while a.bit_length() >= db:
        s = a.bit_length() - db
        q |= 1 << s
        a ^= b << s
    return q, a


def minimal_poly(i: int, m: int, exp) -> int:
    """Minimal polynomial of alpha^i, coefficients packed in an int (bit j = x^j)."""
    n = (1 << m) - 1
    coset = []
    j = i % n
    while j not in coset:
        coset.append(j)
        j = (2 * j) % n
    # multiply (x - alpha^c) over GF(2^m); coefficients as field elements
    log = {int(exp[k]): k for k in range(n)}

    def fmul(a, b):
        if a == 0 or b == 0:
            return 0
        return int(exp[log[a] + log[b]])

    poly = [1]
    for c in coset:
        root = int(exp[c])
        nxt = [0] * (len(poly) + 1)
        for d, coef in enumerate(poly):
            nxt[d + 1] ^= coef
            nxt[d] ^= fmul(coef, root)
        poly = nxt
    assert all(c in (0, 1) for c in poly)
    return sum(c << d for d, c in enumerate(poly))


def bch_generator_poly(m: int, t: int) -> int:
    exp = gf_tables(m)
    n = (1 << m) - 1
    g, seen = 1, set()
    for i in range(1, 2 * t + 1):
        mp = minimal_poly(i, m, exp)
        if mp not in seen:
            seen.add(mp)
            g = poly_mul(g, mp)
    assert poly_divmod((1 << n) | 1, g)[1] == 0
    return g


def cyclic_pcm(n: int, g: int) -> np.ndarray:
    """Rows are shifts of the reciprocal check polynomial."""
    h, _ = poly_divmod((1 << n) | 1, g)
    k = h.bit_length() - 1
    coeffs = [(h >> (k - j)) & 1 for j in range(k + 1)]  # reciprocal of h
    rows = n - k
    out = np.zeros((rows, n), dtype=np.uint8)
    for r in range(rows):
        out[r, r:r + k + 1] = coeffs
    return out


def four_cycles(h: np.ndarray) -> int:
    ov = h.astype(np.int64) @ h.T.astype(np.int64)
    np.fill_diagonal(ov, 0)
    return int((ov * (ov - 1) // 2).sum() // 2)


def reduce_cycles(h: np.ndarray, rounds: int = 4000, seed: int = 0) -> np.ndarray:
    """Greedy row additions accepted when they lower the 4-cycle count without raising density."""
    rng = np.random.default_rng(seed)
    h = h.copy()
    best = four_cycles(h)
    for _ in range(rounds):
        i, j = rng.choice(h.shape[0], size=2, replace=False)
        cand = h.copy()
        cand[i] ^= cand[j]
        if cand[i].sum() > h[i].sum():
            continue
        c = four_cycles(cand)
        if c < best:
            h, best = cand, c
    return h


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "src/wbplab/data")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for m, t, k in ((6, 5, 36), (7, 10, 64)):
        n = (1 << m) - 1
        g = bch_generator_poly(m, t)
        h = cyclic_pcm(n, g)
        assert h.shape == (n - k, n) and gf2_rank(h) == n - k
        before = four_cycles(h)
        hr = reduce_cycles(h)
        assert gf2_rank(hr) == n - k
        path = args.out / f"bch_{n}_{k}_cr.alist"
        write_alist(path, hr)
        print(f"{path.name}: {hr.shape[0]}x{n}, ones {int(h.sum())}->{int(hr.sum())}, "
              f"4-cycles {before}->{four_cycles(hr)}")


if __name__ == "__main__":
    main()
