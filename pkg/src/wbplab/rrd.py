"""Random redundant decoding: cascaded WBP stages with automorphism permutations.

Permutations act on vectors by ``x_perm[i] = x[pi[i]]``. A cumulative
permutation tracks the frame each stage works in; the channel LLRs are
carried into that frame before mixing, and all reported marginals are in
transmission order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .gf2codes import gf2_rank
from .tanner import TannerGraph
from .wbp import DEFAULT_CLIP, DecoderConfig, DecoderTrace, WeightModel, _compact, backward, forward


@dataclass(frozen=True)
class Permutation:
    mapping: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.intp)
        if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.size)):
            raise ParameterError("mapping is not a bijection on range(N)")
        object.__setattr__(self, "mapping", m)

    def apply(self, x):
        return np.asarray(x)[..., self.mapping]

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(self.mapping.size)
        return Permutation(inv)

    def then(self, other: "Permutation") -> "Permutation":
        """Permutation equivalent to applying ``self`` and then ``other``."""
        return Permutation(self.mapping[other.mapping])


def identity_permutation(n: int) -> Permutation:
    return Permutation(np.arange(n))


# --------------------------------------------------------------------------
# Automorphism families
# --------------------------------------------------------------------------

def affine_permutation(a, b, m: int) -> Permutation:
    """Position map u -> A u + b on GF(2)^m, with position i <-> bits of i."""
    a = np.asarray(a, dtype=np.int64) % 2
    b = np.asarray(b, dtype=np.int64) % 2
    idx = np.arange(1 << m)
    u = (idx[:, None] >> np.arange(m)[None, :]) & 1
    img = (u @ a.T + b) % 2
    return Permutation(img @ (1 << np.arange(m)))


def sample_rm_affine(m: int, rng: np.random.Generator) -> Permutation:
    """Uniform element of the affine group AGL(m, 2) acting on RM code positions."""
    while True:
        a = rng.integers(0, 2, size=(m, m))
        if gf2_rank(a) == m:
            break
    b = rng.integers(0, 2, size=m)
    return affine_permutation(a, b, m)


def multiplicative_order_of_two(n: int) -> int:
    if n % 2 == 0 or n < 1:
        raise ParameterError(f"length {n} must be odd")
    if n == 1:
        return 1
    k, x = 1, 2 % n
    while x != 1:
        x = (2 * x) % n
        k += 1
    return k


def cyclic_frobenius_permutation(n: int, shift: int, power: int) -> Permutation:
    """Position map i -> 2^power * i + shift (mod n)."""
    if n % 2 == 0:
        raise ParameterError(f"cyclic Frobenius permutations need odd length, got {n}")
    mult = pow(2, int(power), n)
    return Permutation((mult * np.arange(n) + int(shift)) % n)


def sample_cyclic_frobenius(n: int, rng: np.random.Generator) -> Permutation:
    order = multiplicative_order_of_two(n)
    return cyclic_frobenius_permutation(n, int(rng.integers(n)), int(rng.integers(order)))


@dataclass
class AutSampler:
    """Draws automorphisms from one of the supported families.

    ``family`` is "rm_affine" (``param`` = m), "cyclic_frobenius"
    (``param`` = n) or "identity" (``param`` = n).
    """

    family: str
    param: int
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        if self.family not in ("rm_affine", "cyclic_frobenius", "identity"):
            raise ParameterError(f"unknown automorphism family {self.family!r}")
        if self.family == "cyclic_frobenius":
            multiplicative_order_of_two(self.param)

    @property
    def length(self) -> int:
        return 1 << self.param if self.family == "rm_affine" else self.param

    def sample(self) -> Permutation:
        if self.family == "rm_affine":
            return sample_rm_affine(self.param, self.rng)
        if self.family == "cyclic_frobenius":
            return sample_cyclic_frobenius(self.param, self.rng)
        return identity_permutation(self.param)

    def sample_batch(self, count: int) -> np.ndarray:
        """(count, N) array of permutation mappings."""
        if self.family == "cyclic_frobenius":
            n = self.param
            order = multiplicative_order_of_two(n)
            shifts = self.rng.integers(n, size=count)
            mults = np.array([pow(2, int(j), n) for j in self.rng.integers(order, size=count)])
            return (mults[:, None] * np.arange(n)[None, :] + shifts[:, None]) % n
        if self.family == "identity":
            return np.tile(np.arange(self.param), (count, 1))
        return np.stack([self.sample().mapping for _ in range(count)]) if count else np.zeros((0, self.length), np.intp)

    def with_rng(self, rng: np.random.Generator) -> "AutSampler":
        return AutSampler(self.family, self.param, rng)


def dump_permutations(perms) -> str:
    """One permutation per line, images separated by spaces."""
    rows = [p.mapping if isinstance(p, Permutation) else np.asarray(p) for p in perms]
    return "".join(" ".join(map(str, r.tolist())) + "\n" for r in rows)


def load_permutations(text: str) -> list[Permutation]:
    return [Permutation(np.array(line.split(), dtype=np.intp)) for line in text.splitlines() if line.strip()]


# --------------------------------------------------------------------------
# Cascaded decoding
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RrdConfig:
    t_in: int
    t_out: int
    beta: float = 0.5

    def __post_init__(self):
        if self.t_in < 1 or self.t_out < 1:
            raise ParameterError("t_in and t_out must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"mixing factor {self.beta} outside [0, 1]")

    @property
    def iterations(self) -> int:
        return self.t_in * self.t_out


@dataclass
class RrdTape:
    beta: np.ndarray
    t_in: int
    perms: np.ndarray          # (B, T_out, N)
    frames: list               # cumulative permutation per stage, (B, N)
    chan: list                 # channel LLRs in the previous stage's frame
    prev: list                 # previous stage's final marginals, same frame
    stages: list               # wbp tapes
    w_msg_shape: tuple
    w_ch_shape: tuple


def _iter_slice(w: np.ndarray, start: int, stop: int) -> np.ndarray:
    return w if w.shape[1] == 1 else w[:, start:stop]


def _take(x, idx):
    return np.take_along_axis(x, idx, axis=-1)


def _untake(x, idx):
    out = np.empty_like(x)
    np.put_along_axis(out, np.broadcast_to(idx, x.shape), x, axis=-1)
    return out


def cascade_forward(g: TannerGraph, llr, w_msg, w_ch, gamma, beta, t_in: int, perms,
                    clip_max=DEFAULT_CLIP, tape: bool = False):
    """Run T_out stages of T_in WBP iterations.

    ``perms`` is (B|1, T_out, N). Weights are indexed consecutively over all
    T_out * T_in iterations. Returns marginals (T, B, N) in transmission
    order and an :class:`RrdTape` when requested.
    """
    llr = np.atleast_2d(np.asarray(llr, dtype=float))
    b, n = llr.shape
    perms = np.asarray(perms, dtype=np.intp)
    if perms.ndim != 3 or perms.shape[2] != n:
        raise ParameterError("perms must have shape (B|1, T_out, N)")
    perms = np.broadcast_to(perms, (b,) + perms.shape[1:])
    t_out = perms.shape[1]
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size not in (1, b) or np.any(beta < 0) or np.any(beta > 1):
        raise ParameterError("mixing factor must be in [0, 1], scalar or per sample")
    bcol = beta[:, None]
    w_msg = _compact(np.asarray(w_msg, dtype=float))
    w_ch = _compact(np.asarray(w_ch, dtype=float))

    frame = np.broadcast_to(np.arange(n), (b, n))
    chan = llr
    prev = llr
    out = np.empty((t_out * t_in, b, n))
    rec = RrdTape(beta, t_in, perms, [], [], [], [], w_msg.shape, w_ch.shape) if tape else None
    for tau in range(t_out):
        # m^(0) = llr, so the first stage input is the channel LLRs regardless of beta
        mixed = chan if tau == 0 else bcol * chan + (1.0 - bcol) * prev
        pi = perms[:, tau]
        if rec:
            rec.chan.append(chan)
            rec.prev.append(prev)
        stage_in = _take(mixed, pi)
        frame = _take(frame, pi)
        chan = _take(chan, pi)
        sl = slice(tau * t_in, (tau + 1) * t_in)
        marg, st = forward(g, stage_in, _iter_slice(w_msg, sl.start, sl.stop), _iter_slice(w_ch, sl.start, sl.stop),
                           gamma, t_in, clip_max, record=True, tape=tape)
        out[sl] = _untake(marg, frame)
        prev = marg[-1]
        if rec:
            rec.frames.append(frame)
            rec.stages.append(st)
    return out, rec


def cascade_backward(rec: RrdTape, g_marg: np.ndarray) -> dict[str, np.ndarray]:
    """Adjoints of sum(g_marg * marginals) for weights, damping and mixing factor."""
    t_in = rec.t_in
    t_out = len(rec.stages)
    b = g_marg.shape[1]
    gwm = np.zeros(rec.w_msg_shape)
    gwc = np.zeros(rec.w_ch_shape)
    g_gamma = np.zeros_like(rec.stages[0].gamma)
    g_beta = np.zeros(b)
    carry = None
    for tau in reversed(range(t_out)):
        frame = rec.frames[tau]
        sl = slice(tau * t_in, (tau + 1) * t_in)
        gm = _take(g_marg[sl], np.broadcast_to(frame, g_marg[sl].shape))
        if carry is not None:
            gm[-1] += carry
        gr = backward(rec.stages[tau], gm)
        if gwm.shape[1] == 1:
            gwm += gr["w_msg"]
        else:
            gwm[:, sl] += gr["w_msg"]
        if gwc.shape[1] == 1:
            gwc += gr["w_ch"]
        else:
            gwc[:, sl] += gr["w_ch"]
        g_gamma += gr["gamma"]
        g_mixed = _untake(gr["llr"], rec.perms[:, tau])
        if tau > 0:
            g_beta += np.sum(g_mixed * (rec.chan[tau] - rec.prev[tau]), axis=1)
            bcol = rec.beta[:, None]
            carry = (1.0 - bcol) * g_mixed
    return {
        "w_msg": gwm,
        "w_ch": gwc,
        "gamma": g_gamma,
        "beta": g_beta if rec.beta.size == b else g_beta.sum(keepdims=True),
    }


def rrd_decode(g: TannerGraph, weights: WeightModel | None, config: DecoderConfig, rrd: RrdConfig,
               sampler: AutSampler, llr, record: bool = False, perms=None) -> DecoderTrace:
    """Decode with T_out permuted WBP stages of T_in iterations each.

    A fresh permutation is drawn from ``sampler`` per stage and per sample
    unless ``perms`` (shape (B|1, T_out, N)) is given.
    """
    llr = np.asarray(llr, dtype=float)
    single = llr.ndim == 1
    llr2 = np.atleast_2d(llr)
    total = rrd.iterations
    if weights is None:
        weights = WeightModel.ones("RNN-SS", total, g)
    if weights.iterations < total:
        raise ParameterError(f"weight model covers {weights.iterations} iterations, RRD needs {total}")
    if perms is None:
        b = llr2.shape[0]
        perms = sampler.sample_batch(b * rrd.t_out).reshape(b, rrd.t_out, -1)
    wm, wc = weights.expand()
    marg, _ = cascade_forward(g, llr2, wm, wc, config.damping, rrd.beta, rrd.t_in, perms, config.clip_max)
    if not record:
        marg = marg[-1:]
    return DecoderTrace(marg[:, 0] if single else marg)
