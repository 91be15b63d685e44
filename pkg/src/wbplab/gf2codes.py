"""GF(2) linear algebra, code construction and alist I/O.

Binary matrices are plain ``numpy.uint8`` arrays with entries in {0, 1}.
The block lengths handled here are small (N <= 1024), so dense storage is
used throughout.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Mapping

import numpy as np

from .errors import AlistError, FeasibilityError, ParameterError, StructuralError

MAX_DUAL_ENUMERATION_DIM = 24


def as_bitmatrix(mat) -> np.ndarray:
    """Validate and convert ``mat`` to a 2-D uint8 array over {0, 1}."""
    arr = np.asarray(mat)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError(f"expected a non-empty 2-D binary matrix, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ParameterError("binary matrix entries must be 0 or 1")
    return arr.astype(np.uint8)


def matrix_hash(mat) -> str:
    """Content hash of a binary matrix (shape and entries)."""
    arr = as_bitmatrix(mat)
    h = hashlib.sha256()
    h.update(f"{arr.shape[0]}x{arr.shape[1]}:".encode())
    h.update(np.packbits(arr, axis=1).tobytes())
    return h.hexdigest()[:16]


def rref(mat) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2).

    Returns the reduced matrix (zero rows dropped) and the pivot columns.
    The input is not modified.
    """
    a = np.array(mat, dtype=np.uint8) % 2
    if a.ndim != 2:
        raise ParameterError("rref expects a 2-D array")
    rows, cols = a.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(a[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        hit = np.nonzero(a[:, c])[0]
        hit = hit[hit != r]
        if hit.size:
            a[hit] ^= a[r]
        pivots.append(c)
        r += 1
    return a[:r], pivots


def gf2_rank(mat) -> int:
    """Rank of ``mat`` under GF(2) elimination."""
    arr = np.asarray(mat)
    if arr.size == 0:
        return 0
    return len(rref(arr)[1])


def nullspace(mat) -> np.ndarray:
    """Basis of the right nullspace of ``mat`` over GF(2), one vector per row.

    Each basis vector has a single 1 among the non-pivot columns, so the
    result is systematic on those columns.
    """
    red, pivots = rref(mat)
    n = np.asarray(mat).shape[1]
    free = [c for c in range(n) if c not in set(pivots)]
    basis = np.zeros((len(free), n), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        for j, p in enumerate(pivots):
            basis[i, p] = red[j, f]
    return basis


def gf2_matmul(a, b) -> np.ndarray:
    return (np.asarray(a, dtype=np.int64) @ np.asarray(b, dtype=np.int64) % 2).astype(np.uint8)


def rm_generator(r: int, m: int) -> np.ndarray:
    """Generator matrix of the Reed-Muller code RM(r, m).

    Rows are evaluations of the monomials of degree <= r (degree 0 first,
    then lexicographic variable subsets) at the points of GF(2)^m, where
    column ``i`` is the point whose coordinate ``j`` is bit ``j`` of ``i``.
    """
    if not (isinstance(r, (int, np.integer)) and isinstance(m, (int, np.integer))):
        raise ParameterError("r and m must be integers")
    if m < 0 or m > 10 or r < 0 or r > m:
        raise ParameterError(f"invalid Reed-Muller parameters r={r}, m={m}")
    n = 1 << m
    idx = np.arange(n)
    coords = ((idx[None, :] >> np.arange(m)[:, None]) & 1).astype(np.uint8)
    rows = []
    for deg in range(r + 1):
        for subset in combinations(range(m), deg):
            row = np.ones(n, dtype=np.uint8)
            for j in subset:
                row &= coords[j]
            rows.append(row)
    gen = np.array(rows, dtype=np.uint8)
    assert gen.shape[0] == sum(comb(m, i) for i in range(r + 1))
    return gen


@dataclass(frozen=True)
class Code:
    """An (n, k) binary linear code with one or more named parity-check matrices."""

    n: int
    k: int
    generator: np.ndarray
    pc_matrices: Mapping[str, np.ndarray] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        gen = as_bitmatrix(self.generator)
        if gen.shape != (self.k, self.n):
            raise StructuralError(f"generator shape {gen.shape} != ({self.k}, {self.n})")
        if gf2_rank(gen) != self.k:
            raise StructuralError("generator matrix is rank deficient")
        mats = {}
        for key, h in self.pc_matrices.items():
            h = as_bitmatrix(h)
            if h.shape[1] != self.n:
                raise StructuralError(f"parity-check matrix '{key}' has {h.shape[1]} columns, expected {self.n}")
            if np.any(gf2_matmul(h, gen.T)):
                raise StructuralError(f"parity-check matrix '{key}' is not orthogonal to the generator")
            mats[key] = h
        gen.setflags(write=False)
        for h in mats.values():
            h.setflags(write=False)
        object.__setattr__(self, "generator", gen)
        object.__setattr__(self, "pc_matrices", mats)

    @property
    def rate(self) -> float:
        return self.k / self.n

    def pcm(self, key: str = "std") -> np.ndarray:
        if key == "std" and "std" not in self.pc_matrices:
            return standard_pcm(self)
        try:
            return self.pc_matrices[key]
        except KeyError:
            raise ParameterError(f"code has no parity-check matrix named '{key}'") from None

    def with_pcm(self, key: str, h) -> "Code":
        mats = dict(self.pc_matrices)
        mats[key] = h
        return Code(self.n, self.k, self.generator, mats, self.name)

    @classmethod
    def from_generator(cls, gen, name: str = "") -> "Code":
        gen = as_bitmatrix(gen)
        code = cls(gen.shape[1], gen.shape[0], gen, {}, name)
        return code.with_pcm("std", standard_pcm(code))

    @classmethod
    def from_pcm(cls, h, key: str = "std", name: str = "") -> "Code":
        """Code whose codebook is the nullspace of ``h``; ``h`` may be redundant."""
        h = as_bitmatrix(h)
        gen = nullspace(h)
        if gen.shape[0] == 0:
            raise StructuralError("parity-check matrix has full column rank; code is trivial")
        code = cls(h.shape[1], gen.shape[0], gen, {key: h}, name)
        if key != "std":
            code = code.with_pcm("std", standard_pcm(code))
        return code


def reed_muller(r: int, m: int) -> Code:
    """RM(r, m) with its standard parity-check matrix."""
    return Code.from_generator(rm_generator(r, m), name=f"RM({r},{m})")


def standard_pcm(code: Code) -> np.ndarray:
    """(N-K) x N parity-check matrix in systematic form on the non-pivot columns.

    Row reduction permutes the roles of columns implicitly; the resulting rows
    are written back in the generator's bit order.
    """
    gen = np.asarray(code.generator)
    if gf2_rank(gen) != code.k:
        raise StructuralError("generator matrix is rank deficient")
    h = nullspace(gen)
    if h.shape[0] == 0:
        raise StructuralError("code is the full space; it has no parity checks")
    return h


def _popcount_rows(packed: np.ndarray) -> np.ndarray:
    return np.unpackbits(packed, axis=-1).sum(axis=-1, dtype=np.int64)


def enumerate_min_weight_dual(code: Code) -> np.ndarray:
    """All minimum-weight nonzero codewords of the dual code, sorted lexicographically.

    Enumerates the 2^(N-K) dual codewords exhaustively.
    """
    h = standard_pcm(code)
    r, n = h.shape
    if r > MAX_DUAL_ENUMERATION_DIM:
        raise FeasibilityError(
            f"dual dimension {r} exceeds the exhaustive enumeration limit {MAX_DUAL_ENUMERATION_DIM}"
        )
    lo = min(r, 16)
    hi = r - lo
    msgs = ((np.arange(1 << lo)[:, None] >> np.arange(lo)[None, :]) & 1).astype(np.uint8)
    low_words = np.packbits(gf2_matmul(msgs, h[:lo]), axis=1)
    high_rows = np.packbits(h[lo:], axis=1) if hi else np.zeros((0, low_words.shape[1]), np.uint8)

    best = n + 1
    found: list[np.ndarray] = []
    offset = np.zeros(low_words.shape[1], dtype=np.uint8)
    # Gray-code walk over the high part so each step is one XOR.
    for g in range(1 << hi):
        if g:
            bit = (g & -g).bit_length() - 1
            offset = offset ^ high_rows[bit]
        words = low_words ^ offset
        w = _popcount_rows(words)
        if g == 0:
            w[0] = n + 1  # skip the zero codeword
        wmin = int(w.min())
        if wmin < best:
            best = wmin
            found = [words[w == wmin]]
        elif wmin == best:
            found.append(words[w == wmin])
    rows = np.unpackbits(np.concatenate(found), axis=1)[:, :n]
    order = np.lexsort(rows.T[::-1])
    return np.ascontiguousarray(rows[order])


def encode(code: Code, message) -> np.ndarray:
    """message . G over GF(2); accepts a single message or a batch (rows)."""
    msg = np.asarray(message)
    if msg.shape[-1] != code.k:
        raise ParameterError(f"message length {msg.shape[-1]} != k={code.k}")
    return gf2_matmul(msg, code.generator)


def is_codeword(code: Code, word) -> bool:
    w = np.asarray(word)
    if w.shape != (code.n,):
        raise ParameterError(f"word length {w.shape} != n={code.n}")
    return not np.any(gf2_matmul(code.pcm("std"), w))


def random_codewords(code: Code, count: int, rng: np.random.Generator) -> np.ndarray:
    msgs = rng.integers(0, 2, size=(count, code.k), dtype=np.uint8)
    return encode(code, msgs)


# --------------------------------------------------------------------------
# alist
# --------------------------------------------------------------------------

def _ints(line: str, lineno: int) -> list[int]:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise AlistError(f"non-integer token in {line.strip()!r}", lineno) from None


def parse_alist(text) -> np.ndarray:
    """Parse an alist document into an M x N binary matrix.

    ``text`` may be a string or a readable text stream. Zero entries in the
    index lists are treated as padding. The column and row sections must
    describe the same matrix.
    """
    if not isinstance(text, str):
        text = text.read()
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if len(lines) < 4:
        raise AlistError("truncated header", lines[-1][0] if lines else 0)

    (ln1, l1), (ln2, l2), (ln3, l3), (ln4, l4) = lines[:4]
    head = _ints(l1, ln1)
    if len(head) != 2:
        raise AlistError("first line must contain 'N M'", ln1)
    n, m = head
    if n < 1 or m < 1:
        raise AlistError("matrix dimensions must be positive", ln1)
    maxdeg = _ints(l2, ln2)
    if len(maxdeg) != 2:
        raise AlistError("second line must contain the maximum column and row degrees", ln2)
    col_deg = _ints(l3, ln3)
    row_deg = _ints(l4, ln4)
    if len(col_deg) != n:
        raise AlistError(f"expected {n} column degrees, got {len(col_deg)}", ln3)
    if len(row_deg) != m:
        raise AlistError(f"expected {m} row degrees, got {len(row_deg)}", ln4)
    if max(col_deg) > maxdeg[0] or max(row_deg) > maxdeg[1]:
        raise AlistError("a degree exceeds the declared maximum", ln2)
    if sum(col_deg) != sum(row_deg):
        raise AlistError("column and row degree totals differ", ln4)

    body = lines[4:]
    if len(body) < n + m:
        raise AlistError(f"expected {n + m} index lines, found {len(body)}", body[-1][0] if body else ln4)

    by_col = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        lineno, ln = body[j]
        idx = [i for i in _ints(ln, lineno) if i != 0]
        if len(idx) != col_deg[j]:
            raise AlistError(f"column {j + 1} lists {len(idx)} entries, degree says {col_deg[j]}", lineno)
        for i in idx:
            if not 1 <= i <= m:
                raise AlistError(f"row index {i} out of range 1..{m}", lineno)
            if by_col[i - 1, j]:
                raise AlistError(f"duplicate row index {i} in column {j + 1}", lineno)
            by_col[i - 1, j] = 1

    by_row = np.zeros((m, n), dtype=np.uint8)
    for i in range(m):
        lineno, ln = body[n + i]
        idx = [j for j in _ints(ln, lineno) if j != 0]
        if len(idx) != row_deg[i]:
            raise AlistError(f"row {i + 1} lists {len(idx)} entries, degree says {row_deg[i]}", lineno)
        for j in idx:
            if not 1 <= j <= n:
                raise AlistError(f"column index {j} out of range 1..{n}", lineno)
            if by_row[i, j - 1]:
                raise AlistError(f"duplicate column index {j} in row {i + 1}", lineno)
            by_row[i, j - 1] = 1
        if not np.array_equal(by_row[i], by_col[i]):
            raise AlistError(f"row {i + 1} disagrees with the column lists", lineno)

    for lineno, ln in body[n + m:]:
        raise AlistError(f"unexpected trailing content {ln.strip()!r}", lineno)
    return by_col


def serialize_alist(h, pad: bool = True) -> str:
    """Write ``h`` in alist format, zero-padding index lists to the max degree by default."""
    h = as_bitmatrix(h)
    m, n = h.shape
    col_deg = h.sum(axis=0).astype(int)
    row_deg = h.sum(axis=1).astype(int)
    dv, dc = int(col_deg.max()), int(row_deg.max())
    out = io.StringIO()
    out.write(f"{n} {m}\n{dv} {dc}\n")
    out.write(" ".join(map(str, col_deg)) + "\n")
    out.write(" ".join(map(str, row_deg)) + "\n")
    for j in range(n):
        idx = list(np.nonzero(h[:, j])[0] + 1)
        if pad:
            idx += [0] * (dv - len(idx))
        out.write(" ".join(map(str, idx)) + "\n")
    for i in range(m):
        idx = list(np.nonzero(h[i])[0] + 1)
        if pad:
            idx += [0] * (dc - len(idx))
        out.write(" ".join(map(str, idx)) + "\n")
    return out.getvalue()


def read_alist(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        return parse_alist(f)


def write_alist(path, h) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_alist(h))
