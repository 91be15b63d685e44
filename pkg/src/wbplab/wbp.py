"""Weighted belief-propagation decoding.

The decoder works on batches: channel LLRs have shape ``(B, N)`` and all
messages are flat ``(B, |E|)`` arrays addressed by edge index. Weights are
passed to the engine as arrays broadcastable to ``(B, T, |E|)`` (message
weights) and ``(B, T, N)`` (channel weights), which covers the four
weight-sharing models as well as per-sample weights produced by a parameter
adapter network.

:func:`forward` optionally records a :class:`Tape` from which
:func:`backward` computes exact reverse-mode adjoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, StructuralError
from . import _kernels
from .tanner import TannerGraph

VARIANTS = ("FW", "RNN-FW", "SS", "RNN-SS")
WEIGHT_MAX = 10.0
DEFAULT_CLIP = 15.0


def channel_llr(y, rate: float, snr) -> np.ndarray:
    """BPSK/AWGN channel LLRs 4*R*rho*y; ``snr`` is linear Eb/N0 (scalar or per-row)."""
    snr = np.asarray(snr, dtype=float)
    if np.any(snr <= 0):
        raise ParameterError("SNR must be positive")
    if not 0 < rate <= 1:
        raise ParameterError(f"rate {rate} outside (0, 1]")
    y = np.asarray(y, dtype=float)
    if snr.ndim == 1 and y.ndim == 2:
        snr = snr[:, None]
    return 4.0 * rate * snr * y


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


# --------------------------------------------------------------------------
# Weight models
# --------------------------------------------------------------------------

@dataclass
class WeightModel:
    """Message and channel weights under one of the four sharing schemes.

    ``msg`` has shape (T, E), (E,), (T,) or () for FW, RNN-FW, SS, RNN-SS;
    ``ch`` has shape (T, N), (N,), (T,) or () correspondingly.
    """

    variant: str
    iterations: int
    n_edges: int
    n_vars: int
    msg: np.ndarray
    ch: np.ndarray

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown weight model {self.variant!r}")
        self.msg = np.array(self.msg, dtype=float).reshape(self.msg_shape)
        self.ch = np.array(self.ch, dtype=float).reshape(self.ch_shape)
        for name, arr in (("msg", self.msg), ("ch", self.ch)):
            if np.any(arr < 0) or np.any(arr > WEIGHT_MAX) or not np.all(np.isfinite(arr)):
                raise ParameterError(f"{name} weights must lie in [0, {WEIGHT_MAX}]")

    @property
    def msg_shape(self) -> tuple:
        t, e = self.iterations, self.n_edges
        return {"FW": (t, e), "RNN-FW": (e,), "SS": (t,), "RNN-SS": ()}[self.variant]

    @property
    def ch_shape(self) -> tuple:
        t, n = self.iterations, self.n_vars
        return {"FW": (t, n), "RNN-FW": (n,), "SS": (t,), "RNN-SS": ()}[self.variant]

    @property
    def n_params(self) -> int:
        return self.msg.size + self.ch.size

    @classmethod
    def ones(cls, variant: str, iterations: int, graph: TannerGraph) -> "WeightModel":
        shapes = _shapes(variant, iterations, graph.n_edges, graph.n_vars)
        return cls(variant, iterations, graph.n_edges, graph.n_vars, np.ones(shapes[0]), np.ones(shapes[1]))

    @classmethod
    def shared(cls, variant: str, iterations: int, graph: TannerGraph, w_msg, w_ch) -> "WeightModel":
        """Model of ``variant`` with every entry broadcast from ``w_msg``/``w_ch``."""
        ms, cs = _shapes(variant, iterations, graph.n_edges, graph.n_vars)
        return cls(variant, iterations, graph.n_edges, graph.n_vars,
                   np.broadcast_to(_per_iter(w_msg, ms), ms).copy(),
                   np.broadcast_to(_per_iter(w_ch, cs), cs).copy())

    def expand(self) -> tuple[np.ndarray, np.ndarray]:
        """Engine views of shape (1, T, E|1) and (1, T, N|1)."""
        t = self.iterations
        if self.variant == "FW":
            return self.msg[None], self.ch[None]
        if self.variant == "RNN-FW":
            return (np.broadcast_to(self.msg, (1, t, self.n_edges)),
                    np.broadcast_to(self.ch, (1, t, self.n_vars)))
        if self.variant == "SS":
            return self.msg.reshape(1, t, 1), self.ch.reshape(1, t, 1)
        return (np.broadcast_to(self.msg, (1, t, 1)), np.broadcast_to(self.ch, (1, t, 1)))

    def reduce_grad(self, g_msg: np.ndarray, g_ch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Sum full engine gradients down to this model's parameter shapes."""
        gm = _unbroadcast(g_msg, (1, self.iterations, self.n_edges if self.variant in ("FW", "RNN-FW") else 1))
        gc = _unbroadcast(g_ch, (1, self.iterations, self.n_vars if self.variant in ("FW", "RNN-FW") else 1))
        if self.variant == "FW":
            return gm[0], gc[0]
        if self.variant == "RNN-FW":
            return gm[0].sum(axis=0), gc[0].sum(axis=0)
        if self.variant == "SS":
            return gm.reshape(-1), gc.reshape(-1)
        return gm.sum().reshape(()), gc.sum().reshape(())

    def copy(self) -> "WeightModel":
        return WeightModel(self.variant, self.iterations, self.n_edges, self.n_vars, self.msg.copy(), self.ch.copy())


def _shapes(variant, t, e, n):
    return {
        "FW": ((t, e), (t, n)),
        "RNN-FW": ((e,), (n,)),
        "SS": ((t,), (t,)),
        "RNN-SS": ((), ()),
    }[variant]


def _per_iter(value, shape):
    v = np.asarray(value, dtype=float)
    if v.ndim == 1 and len(shape) == 2 and v.shape[0] == shape[0]:
        return v[:, None]
    return v


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` over the axes along which an array of ``shape`` was broadcast."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


@dataclass(frozen=True)
class DecoderConfig:
    iterations: int
    damping: float = 0.0
    clip_max: float | None = DEFAULT_CLIP

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError("at least one iteration is required")
        if not 0.0 <= self.damping <= 1.0:
            raise ParameterError(f"damping {self.damping} outside [0, 1]")
        if self.clip_max is not None and self.clip_max <= 0:
            raise ParameterError("clip_max must be positive")


@dataclass
class DecoderTrace:
    """Per-iteration decoder outputs.

    ``marginals`` has shape (T, *batch, N) when recorded, otherwise
    (1, *batch, N) holding only the final iteration.
    """

    marginals: np.ndarray
    messages_v2c: list | None = None
    messages_c2v: list | None = None

    @property
    def final(self) -> np.ndarray:
        return self.marginals[-1]

    @property
    def soft_outputs(self) -> np.ndarray:
        return sigmoid(-self.marginals)

    @property
    def hard(self) -> np.ndarray:
        return hard_decision(self.final)


# --------------------------------------------------------------------------
# Primitive updates
# --------------------------------------------------------------------------

def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def hard_decision(m) -> np.ndarray:
    return (np.asarray(m) < 0).astype(np.uint8)


def clip_bounds(clip_max: float) -> tuple[float, float]:
    return -math.log(math.tanh(clip_max / 2.0)), clip_max


def clip(messages, clip_max: float | None):
    """Clamp |messages| into [-log(tanh(L/2)), L]; zero maps to the positive lower bound."""
    return _clip_with_mask(np.asarray(messages, dtype=float), clip_max)[0]


def _clip_with_mask(x: np.ndarray, clip_max):
    if clip_max is None:
        return x, None
    lo, hi = clip_bounds(clip_max)
    mag = np.abs(x)
    sign = np.where(x < 0, -1.0, 1.0)
    inside = (mag >= lo) & (mag <= hi)
    return sign * np.clip(mag, lo, hi), inside


def damp(previous, pre_update, gamma):
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0) or np.any(g > 1):
        raise ParameterError("damping factor outside [0, 1]")
    if g.ndim == 1:
        g = g[:, None]
    return g * previous + (1.0 - g) * pre_update


def _gather_sum(values: np.ndarray, slots: np.ndarray) -> np.ndarray:
    """Sum (B, E) edge values over padded adjacency slots -> (B, rows)."""
    ext = np.concatenate([values, np.zeros((values.shape[0], 1))], axis=1)
    return ext[:, slots].sum(axis=2)


def vn_update(g: TannerGraph, w_msg, w_ch, llr, c2v_prev) -> np.ndarray:
    """Variable-to-check pre-update messages for one iteration.

    ``w_msg`` broadcasts against (B, E) and ``w_ch`` against (B, N).
    """
    llr = np.atleast_2d(llr)
    u = w_msg * np.atleast_2d(c2v_prev)
    total = _gather_sum(u, g.var_slots)
    return (w_ch * llr + total)[:, g.edge_var] - u


def _pad_checks(g: TannerGraph, values: np.ndarray, fill: float) -> np.ndarray:
    ext = np.concatenate([values, np.full((values.shape[0], 1), fill)], axis=1)
    return ext[:, g.check_slots]


def _exclusive_prod(x: np.ndarray) -> np.ndarray:
    """Product of all other entries along the last axis."""
    ones = np.ones(x.shape[:-1] + (1,))
    pre = np.cumprod(np.concatenate([ones, x[..., :-1]], axis=-1), axis=-1)
    suf = np.cumprod(np.concatenate([ones, x[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return pre * suf


def _check_valid(g: TannerGraph) -> np.ndarray:
    return g.check_slots < g.n_edges


def _cn_core(g: TannerGraph, v2c: np.ndarray, clip_max):
    th = np.tanh(v2c / 2.0)
    prod_pad = _exclusive_prod(_pad_checks(g, th, 1.0))
    prod = prod_pad[:, _check_valid(g)]
    pmask = None
    if clip_max is not None:
        # Only bites on degree-1 checks, whose extrinsic product is empty.
        cap = math.tanh(clip_max / 2.0)
        pmask = np.abs(prod) <= cap
        prod = np.clip(prod, -cap, cap)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 2.0 * np.arctanh(prod)
    return out, th, prod, pmask


def cn_update(g: TannerGraph, v2c, clip_max: float | None = None) -> np.ndarray:
    """Check-to-variable pre-update messages 2*atanh(prod of other tanh(m/2))."""
    out = _cn_core(g, np.atleast_2d(np.asarray(v2c, dtype=float)), clip_max)[0]
    if not np.all(np.isfinite(out)):
        raise StructuralError("check-node update overflowed; incoming messages need clipping")
    return out


def marginalize(g: TannerGraph, w_msg, w_ch, llr, c2v) -> np.ndarray:
    llr = np.atleast_2d(llr)
    return w_ch * llr + _gather_sum(w_msg * np.atleast_2d(c2v), g.var_slots)


# --------------------------------------------------------------------------
# Unrolled forward pass and its adjoint
# --------------------------------------------------------------------------

@dataclass
class Tape:
    """Forward-pass record needed by :func:`backward`.

    Message arrays are (T+1, B, E) with index 0 the zero initialization;
    pre-update values, clip masks and check products are (T, B, E).
    """

    graph: TannerGraph
    llr: np.ndarray
    w_msg: np.ndarray
    w_ch: np.ndarray
    gamma: np.ndarray
    iterations: int
    v2c: np.ndarray
    c2v: np.ndarray
    v2c_pre: np.ndarray
    c2v_pre: np.ndarray
    clip_mask: np.ndarray
    prod: np.ndarray
    prod_mask: np.ndarray


def _as_gamma(gamma, batch: int) -> np.ndarray:
    g = np.asarray(gamma, dtype=float).reshape(-1)
    if g.size not in (1, batch):
        raise ParameterError("damping must be a scalar or one value per sample")
    if np.any(g < 0) or np.any(g > 1):
        raise ParameterError("damping factor outside [0, 1]")
    return np.ascontiguousarray(g)


def _compact(a: np.ndarray) -> np.ndarray:
    """Collapse broadcast (zero-stride) axes to length 1 and make contiguous."""
    idx = tuple(slice(0, 1) if (st == 0 and sz > 1) else slice(None) for st, sz in zip(a.strides, a.shape))
    return np.ascontiguousarray(a[idx], dtype=float)


def forward(g: TannerGraph, llr, w_msg, w_ch, gamma, iterations: int, clip_max=DEFAULT_CLIP,
            record: bool = True, tape: bool = False):
    """Run ``iterations`` flooding iterations from zero messages.

    ``w_msg`` / ``w_ch`` have shapes (B|1, T|1, E|1) and (B|1, T|1, N|1).
    Returns ``(marginals, tape)``; marginals are (T, B, N) when ``record`` is
    set, otherwise (1, B, N). ``tape`` is None unless requested.
    """
    llr = np.ascontiguousarray(np.atleast_2d(np.asarray(llr, dtype=float)))
    b, n = llr.shape
    if n != g.n_vars:
        raise ParameterError(f"LLR length {n} != N={g.n_vars}")
    wm = _compact(np.asarray(w_msg, dtype=float))
    wc = _compact(np.asarray(w_ch, dtype=float))
    for name, w, width in (("w_msg", wm, g.n_edges), ("w_ch", wc, n)):
        if (w.ndim != 3 or w.shape[0] not in (1, b) or w.shape[2] not in (1, width)
                or (w.shape[1] != 1 and w.shape[1] < iterations)):
            raise ParameterError(f"{name} has incompatible shape {np.shape(w)}")
    gam = _as_gamma(gamma, b)
    if iterations < 1:
        raise ParameterError("at least one iteration is required")
    do_clip = clip_max is not None
    lo, hi = clip_bounds(clip_max) if do_clip else (0.0, np.inf)

    marg = np.empty((iterations if record else 1, b, n))
    if tape:
        shp = (iterations, b, g.n_edges)
        bufs = [np.zeros((iterations + 1, b, g.n_edges)), np.zeros((iterations + 1, b, g.n_edges)),
                np.empty(shp), np.empty(shp), np.empty(shp, dtype=np.bool_),
                np.empty(shp), np.empty(shp, dtype=np.bool_)]
    else:
        bufs = [np.empty((1, 1, 1)), np.empty((1, 1, 1)), np.empty((1, 1, 1)), np.empty((1, 1, 1)),
                np.empty((1, 1, 1), dtype=np.bool_), np.empty((1, 1, 1)), np.empty((1, 1, 1), dtype=np.bool_)]
    bad = _kernels.forward_kernel(llr, wm, wc, gam, iterations, do_clip, lo, hi,
                                  g.edge_var, g.var_ptr, g.var_edges, g.check_ptr,
                                  marg, record, tape, *bufs)
    if bad:
        raise NumericError(f"non-finite marginal at iteration {bad}", iteration=int(bad))
    rec = Tape(g, llr, wm, wc, gam, iterations, *bufs) if tape else None
    return marg, rec


def backward(rec: Tape, g_marg: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse-mode adjoints of sum(g_marg * marginals).

    ``g_marg`` has shape (T, B, N). Gradients for ``w_msg`` and ``w_ch``
    come back in the compact shapes stored on the tape (broadcast axes
    summed); ``gamma`` matches the damping input and ``llr`` is (B, N).
    """
    g = rec.graph
    g_marg = np.ascontiguousarray(g_marg, dtype=float)
    if g_marg.shape != (rec.iterations,) + rec.llr.shape:
        raise ParameterError("marginal adjoint must have shape (T, B, N)")
    gwm = np.zeros_like(rec.w_msg)
    gwc = np.zeros_like(rec.w_ch)
    g_gamma = np.zeros_like(rec.gamma)
    g_llr = np.zeros_like(rec.llr)
    _kernels.backward_kernel(rec.llr, rec.w_msg, rec.w_ch, rec.gamma, rec.iterations, g_marg,
                             g.edge_var, g.var_ptr, g.var_edges, g.check_ptr,
                             rec.v2c, rec.c2v, rec.v2c_pre, rec.c2v_pre, rec.clip_mask,
                             rec.prod, rec.prod_mask, gwm, gwc, g_gamma, g_llr)
    for name, arr in (("w_msg", gwm), ("w_ch", gwc), ("gamma", g_gamma)):
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite adjoint for {name}", name=name)
    return {"w_msg": gwm, "w_ch": gwc, "gamma": g_gamma, "llr": g_llr}


def decode(g: TannerGraph, weights: WeightModel | None, config: DecoderConfig, llr,
           record: bool = False) -> DecoderTrace:
    """Decode one word (N,) or a batch (B, N) of channel LLRs."""
    llr = np.asarray(llr, dtype=float)
    single = llr.ndim == 1
    if weights is None:
        weights = WeightModel.ones("RNN-SS", config.iterations, g)
    if weights.iterations < config.iterations:
        raise ParameterError("weight model has fewer iterations than the decoder config")
    wm, wc = weights.expand()
    marg, rec = forward(g, llr, wm, wc, config.damping, config.iterations, config.clip_max,
                        record=record, tape=record)
    trace = DecoderTrace(marg[:, 0] if single else marg)
    if record:
        strip = (lambda a: a[0]) if single else (lambda a: a)
        trace.messages_v2c = [strip(a) for a in rec.v2c[1:]]
        trace.messages_c2v = [strip(a) for a in rec.c2v[1:]]
    return trace
