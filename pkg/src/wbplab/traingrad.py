"""Gradient-based training of WBP parameters.

A :class:`DecoderSetup` fixes the graph, weight-sharing model, iteration
schedule (plain or RRD) and which scalar parameters are trainable. The
decoder parameters ``theta`` are a dict with keys ``w_msg``, ``w_ch``,
``gamma`` and ``beta``. In adapter mode a :class:`Pan` maps the SNR of each
sample to the trainable scalars and gradients flow into the networks.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kvdoc
from .channel_mc import TrainingBatch, default_snr_grid, stream_rng, training_batch
from .errors import NumericError, ParameterError
from .losses import loss_kind, multi_loss_from_llr
from .rrd import AutSampler, RrdConfig, cascade_backward, cascade_forward
from .tanner import TannerGraph
from .wbp import DEFAULT_CLIP, WEIGHT_MAX, WeightModel, _shapes, backward, forward, sigmoid

log = logging.getLogger(__name__)

PARAM_NAMES = ("w_msg", "w_ch", "gamma", "beta")
TRAIN_STREAM = 10
PERM_STREAM = 11


def param_upper(name: str) -> float:
    return WEIGHT_MAX if name.startswith("w_") else 1.0


@dataclass
class DecoderSetup:
    """Everything about the decoder except the values of its parameters."""

    graph: TannerGraph
    rate: float
    variant: str = "RNN-SS"
    iterations: int = 5
    rrd: RrdConfig | None = None
    sampler: AutSampler | None = None
    clip_max: float | None = DEFAULT_CLIP
    trainable: tuple = ("w_msg", "w_ch")

    def __post_init__(self):
        bad = set(self.trainable) - set(PARAM_NAMES)
        if bad:
            raise ParameterError(f"unknown trainable parameters {sorted(bad)}")
        if self.rrd is not None:
            if self.rrd.iterations != self.iterations:
                raise ParameterError("RRD t_in * t_out must equal the iteration count")
            if self.sampler is None:
                raise ParameterError("RRD needs an automorphism sampler")
        elif "beta" in self.trainable:
            raise ParameterError("beta is only trainable with RRD")

    @property
    def t_in(self) -> int:
        return self.rrd.t_in if self.rrd else self.iterations

    @property
    def t_out(self) -> int:
        return self.rrd.t_out if self.rrd else 1

    def init_params(self, w_msg=1.0, w_ch=1.0, gamma=None, beta=None) -> dict[str, np.ndarray]:
        """Initial theta: weights from the given values; gamma/beta 0.5 when trainable, else 0 / rrd.beta."""
        ms, cs = _shapes(self.variant, self.iterations, self.graph.n_edges, self.graph.n_vars)
        if gamma is None:
            gamma = 0.5 if "gamma" in self.trainable else 0.0
        if beta is None:
            beta = 0.5 if "beta" in self.trainable else (self.rrd.beta if self.rrd else 0.0)
        return {
            "w_msg": np.broadcast_to(np.asarray(w_msg, float), ms).copy(),
            "w_ch": np.broadcast_to(np.asarray(w_ch, float), cs).copy(),
            "gamma": np.array(float(gamma)),
            "beta": np.array(float(beta)),
        }

    def weight_model(self, theta) -> WeightModel:
        return WeightModel(self.variant, self.iterations, self.graph.n_edges, self.graph.n_vars,
                           theta["w_msg"], theta["w_ch"])


def project(theta: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.clip(v, 0.0, param_upper(k)) for k, v in theta.items()}


# --------------------------------------------------------------------------
# Parameter adapter network
# --------------------------------------------------------------------------

@dataclass
class Pan:
    """One 1 -> hidden -> 1 network per adapted parameter.

    The SNR in dB is mapped affinely from ``snr_range`` to [-1, 1], passed
    through a rectifier hidden layer and a sigmoid output scaled by 10 for
    weights and 1 for damping/mixing factors.
    """

    names: tuple
    layers: dict = field(default_factory=dict)
    hidden: int = 20
    snr_range: tuple = (1.0, 8.0)

    @classmethod
    def init(cls, names, rng: np.random.Generator, initial: dict | None = None, hidden: int = 20,
             snr_range=(1.0, 8.0)) -> "Pan":
        """Fan-in scaled uniform weights, zero hidden biases.

        The output bias is set so every network starts at ``initial[name]``
        (default: 1 for weights, 0.5 otherwise).
        """
        layers = {}
        for name in names:
            start = (initial or {}).get(name, 1.0 if name.startswith("w_") else 0.5)
            frac = min(max(float(start) / param_upper(name), 1e-6), 1 - 1e-6)
            layers[name] = {
                "W1": rng.uniform(-1.0, 1.0, hidden),
                "b1": np.zeros(hidden),
                "W2": rng.uniform(-1.0, 1.0, hidden) / math.sqrt(hidden),
                "b2": np.array(math.log(frac / (1 - frac))),
            }
        return cls(tuple(names), layers, hidden, tuple(snr_range))

    def normalize(self, snr_db) -> np.ndarray:
        lo, hi = self.snr_range
        return 2.0 * (np.asarray(snr_db, dtype=float) - lo) / (hi - lo) - 1.0

    def forward(self, snr_db, cache: bool = False):
        u = np.atleast_1d(self.normalize(snr_db))
        out, saved = {}, {}
        for name in self.names:
            p = self.layers[name]
            pre = u[:, None] * p["W1"] + p["b1"]
            h = np.maximum(pre, 0.0)
            z = h @ p["W2"] + p["b2"]
            s = sigmoid(z)
            out[name] = param_upper(name) * s
            saved[name] = (pre, h, s)
        return (out, (u, saved)) if cache else out

    def backward(self, cache, grads: dict[str, np.ndarray]) -> dict[str, dict[str, np.ndarray]]:
        u, saved = cache
        res = {}
        for name in self.names:
            p = self.layers[name]
            pre, h, s = saved[name]
            gz = grads[name] * param_upper(name) * s * (1 - s)
            gh = gz[:, None] * p["W2"]
            gpre = gh * (pre > 0)
            res[name] = {
                "W1": gpre.T @ u,
                "b1": gpre.sum(axis=0),
                "W2": h.T @ gz,
                "b2": np.array(gz.sum()),
            }
        return res

    def flat(self) -> dict[str, np.ndarray]:
        return {f"pan.{n}.{k}": v for n in self.names for k, v in self.layers[n].items()}

    def load_flat(self, flat: dict[str, np.ndarray]) -> None:
        for key, v in flat.items():
            _, n, k = key.split(".")
            self.layers[n][k] = np.array(v, dtype=float)

    def copy(self) -> "Pan":
        return Pan(self.names, {n: {k: v.copy() for k, v in d.items()} for n, d in self.layers.items()},
                   self.hidden, self.snr_range)


def check_pan(setup: DecoderSetup, pan: Pan) -> None:
    """Adapted parameters must be scalars under the setup's weight model."""
    scalar_w = setup.variant == "RNN-SS"
    for name in pan.names:
        if name.startswith("w_") and not scalar_w:
            raise ParameterError(f"PAN can only adapt {name} under RNN-SS weight sharing")
        if name == "beta" and setup.rrd is None:
            raise ParameterError("PAN can only adapt beta with RRD")


def pan_forward(pan: Pan, snr_db) -> np.ndarray:
    """Adapted parameter vector at one SNR (dB), ordered as ``pan.names``."""
    out = pan.forward(np.atleast_1d(float(snr_db)))
    return np.array([out[n][0] for n in pan.names])


# --------------------------------------------------------------------------
# Loss and gradients
# --------------------------------------------------------------------------

def _engine_weights(setup: DecoderSetup, theta, per_sample: dict | None):
    """Compact engine arrays for w_msg / w_ch, plus gamma and beta arrays."""
    wm, wc = setup.weight_model(theta).expand()
    if per_sample:
        b = next(iter(per_sample.values())).shape[0]
        if "w_msg" in per_sample:
            wm = per_sample["w_msg"].reshape(b, 1, 1)
        if "w_ch" in per_sample:
            wc = per_sample["w_ch"].reshape(b, 1, 1)
    gamma = per_sample.get("gamma", theta["gamma"]) if per_sample else theta["gamma"]
    beta = per_sample.get("beta", theta["beta"]) if per_sample else theta["beta"]
    return wm, wc, np.atleast_1d(np.asarray(gamma, float)), np.atleast_1d(np.asarray(beta, float))


@dataclass
class GradientTape:
    """Recorded forward pass of one mini-batch decode plus loss."""

    setup: DecoderSetup
    theta: dict
    pan: Pan | None
    loss: float
    per_sample: np.ndarray
    marginals: np.ndarray
    g_marg: np.ndarray
    record: object
    pan_cache: object = None

    def backward(self) -> dict[str, np.ndarray]:
        """Adjoints of the batch loss for every trainable parameter.

        Keys are ``w_msg``/``w_ch``/``gamma``/``beta`` in direct mode and the
        flattened PAN keys (``pan.<param>.<layer>``) in adapter mode.
        """
        s = self.setup
        if s.t_out > 1:
            raw = cascade_backward(self.record, self.g_marg)
        else:
            raw = backward(self.record, self.g_marg)
            raw["beta"] = np.zeros(1)
        if self.pan is not None:
            per = {}
            for name in self.pan.names:
                g = raw[name]
                per[name] = g.reshape(g.shape[0], -1).sum(axis=1) if g.ndim > 1 else g
            nested = self.pan.backward(self.pan_cache, per)
            grads = {f"pan.{n}.{k}": v for n, d in nested.items() for k, v in d.items()}
        else:
            model = s.weight_model(self.theta)
            gm, gc = model.reduce_grad(raw["w_msg"], raw["w_ch"])
            full = {"w_msg": gm, "w_ch": gc, "gamma": np.array(raw["gamma"].sum()),
                    "beta": np.array(raw["beta"].sum())}
            grads = {k: full[k] for k in s.trainable}
        for k, v in grads.items():
            if not np.all(np.isfinite(v)):
                raise NumericError(f"non-finite gradient for {k}", name=k)
        return grads


def record_loss(setup: DecoderSetup, theta, batch: TrainingBatch, kind: str, eta: float,
                pan: Pan | None = None, perms=None, perm_rng: np.random.Generator | None = None,
                tape: bool = True) -> GradientTape:
    """Forward pass of the batch-mean multi-loss (optionally recorded for backward)."""
    kind = loss_kind(kind)
    llr = batch.llr(setup.rate)
    pan_cache = None
    per_sample = None
    if pan is not None:
        check_pan(setup, pan)
        per_sample, pan_cache = pan.forward(batch.snr_db, cache=True)
    wm, wc, gamma, beta = _engine_weights(setup, theta, per_sample)
    if setup.t_out > 1:
        if perms is None:
            sampler = setup.sampler.with_rng(perm_rng or np.random.default_rng(0))
            perms = sampler.sample_batch(len(batch) * setup.t_out).reshape(len(batch), setup.t_out, -1)
        marg, rec = cascade_forward(setup.graph, llr, wm, wc, gamma, beta, setup.t_in, perms,
                                    setup.clip_max, tape=tape)
    else:
        marg, rec = forward(setup.graph, llr, wm, wc, gamma, setup.iterations, setup.clip_max,
                            record=True, tape=tape)
    loss, per, g_marg = multi_loss_from_llr(kind, eta, batch.x, marg)
    return GradientTape(setup, theta, pan, loss, per, marg, g_marg, rec, pan_cache)


def batch_loss(setup: DecoderSetup, theta, batch: TrainingBatch, kind: str, eta: float,
               pan: Pan | None = None, perms=None, perm_rng=None) -> float:
    return record_loss(setup, theta, batch, kind, eta, pan, perms, perm_rng, tape=False).loss


# --------------------------------------------------------------------------
# Optimizer and schedules
# --------------------------------------------------------------------------

@dataclass
class TrainConfig:
    steps: int = 0
    batch_per_snr: int = 10
    snr_grid_db: tuple = tuple(default_snr_grid())
    loss: str = "soft-ber"
    lr: float = 1e-3
    lr_decay: float = 0.8
    eta: float = 1.0
    eta_decay: float = 0.5
    decay_every: int = 5000
    grad_clip: float = 0.1
    rms_decay: float = 0.99
    rms_eps: float = 1e-8
    seed: int = 0
    random_codewords: bool = False
    log_every: int = 1

    def __post_init__(self):
        self.snr_grid_db = tuple(float(v) for v in np.atleast_1d(self.snr_grid_db))
        loss_kind(self.loss)
        if self.lr <= 0 or self.decay_every < 1 or self.batch_per_snr < 1:
            raise ParameterError("lr, decay_every and batch_per_snr must be positive")


def schedule_tick(config: TrainConfig, step: int) -> tuple[float, float]:
    """(learning rate, discount) in effect at ``step``."""
    if step < 0:
        raise ParameterError("step must be non-negative")
    k = step // config.decay_every
    return config.lr * config.lr_decay ** k, config.eta * config.eta_decay ** k


@dataclass
class OptimizerState:
    sq_avg: dict = field(default_factory=dict)
    decay: float = 0.99
    eps: float = 1e-8
    step: int = 0


def clip_global_norm(grads: dict[str, np.ndarray], threshold: float) -> tuple[dict[str, np.ndarray], float]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if threshold and norm > threshold:
        scale = threshold / norm
        return {k: g * scale for k, g in grads.items()}, norm
    return grads, norm


def rmsprop_step(state: OptimizerState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                 lr: float, bounds=None) -> dict[str, np.ndarray]:
    """One RMSprop update; ``bounds(name) -> (lo, hi)`` projects the result."""
    out = dict(params)
    for k, g in grads.items():
        s = state.sq_avg.get(k)
        if s is None:
            s = np.zeros_like(g)
        s = np.asarray(state.decay * s + (1.0 - state.decay) * g * g)
        state.sq_avg[k] = s
        new = params[k] - lr * g / (np.sqrt(s) + state.eps)
        if bounds is not None:
            lo, hi = bounds(k)
            new = np.clip(new, lo, hi)
        out[k] = np.asarray(new, dtype=float)
    state.step += 1
    return out


def _bounds(name: str):
    if name.startswith("pan."):
        return (-np.inf, np.inf)
    return (0.0, param_upper(name))


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------

@dataclass
class TrainResult:
    theta: dict
    pan: Pan | None
    log_rows: list
    state: OptimizerState

    def log_csv(self) -> str:
        return format_log(self.log_rows)


def _scalar_snapshot(theta, setup: DecoderSetup) -> dict[str, float]:
    snap = {}
    for k in PARAM_NAMES:
        v = theta[k]
        if v.size == 1:
            snap[k] = float(v)
    if setup.rrd is None:
        snap.pop("beta", None)
    return snap


def train(setup: DecoderSetup, config: TrainConfig, theta=None, pan: Pan | None = None,
          code=None, on_row=None) -> TrainResult:
    """Mini-batch RMSprop over fresh AWGN batches on the SNR grid.

    In adapter mode (``pan`` given) the networks are trained and ``theta``
    only supplies the frozen parameters. ``on_row`` is called with each log
    row as soon as it is produced.
    """
    theta = {k: np.array(v, dtype=float) for k, v in (theta or setup.init_params()).items()}
    pan = pan.copy() if pan is not None else None
    rng = stream_rng(config.seed, TRAIN_STREAM)
    perm_rng = stream_rng(config.seed, PERM_STREAM)
    state = OptimizerState(decay=config.rms_decay, eps=config.rms_eps)
    rows = []
    n = setup.graph.n_vars
    for step in range(config.steps):
        lr, eta = schedule_tick(config, step)
        batch = training_batch(config.snr_grid_db, config.batch_per_snr, n, setup.rate, rng,
                               code if config.random_codewords else None)
        try:
            tape = record_loss(setup, theta, batch, config.loss, eta, pan, perm_rng=perm_rng)
            grads = tape.backward()
        except NumericError as exc:
            raise NumericError(f"training aborted at step {step}: {exc}", step=step) from exc
        grads, gnorm = clip_global_norm(grads, config.grad_clip)
        if pan is not None:
            flat = rmsprop_step(state, pan.flat(), grads, lr, _bounds)
            pan.load_flat(flat)
        else:
            theta.update(rmsprop_step(state, {k: theta[k] for k in grads}, grads, lr, _bounds))
        if step % config.log_every == 0 or step == config.steps - 1:
            row = {"step": step, "alpha": lr, "eta": eta, "batch_loss": tape.loss}
            if pan is None:
                row.update(_scalar_snapshot(theta, setup))
            rows.append(row)
            if on_row is not None:
                on_row(row)
    return TrainResult(theta, pan, rows, state)


def format_log(rows: list[dict]) -> str:
    if not rows:
        return "step,alpha,eta,batch_loss\n"
    cols = list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def validation_batch(setup: DecoderSetup, grid_db, per_point: int, seed: int, code=None) -> TrainingBatch:
    return training_batch(grid_db, per_point, setup.graph.n_vars, setup.rate, stream_rng(seed, 20), code)


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

def dump_checkpoint(setup: DecoderSetup, theta, pan: Pan | None = None, state: OptimizerState | None = None,
                    extra: dict | None = None) -> str:
    model = {
        "variant": setup.variant,
        "iterations": setup.iterations,
        "t_in": setup.t_in,
        "t_out": setup.t_out,
        "n_edges": setup.graph.n_edges,
        "n_vars": setup.graph.n_vars,
        "matrix_hash": setup.graph.digest,
        "clip_max": setup.clip_max,
        "trainable": ", ".join(setup.trainable),
    }
    model.update(extra or {})
    doc = {"model": model, "params": {k: np.asarray(theta[k], float) for k in PARAM_NAMES}}
    if pan is not None:
        doc["pan"] = {"names": ", ".join(pan.names), "hidden": pan.hidden,
                      "snr_low": float(pan.snr_range[0]), "snr_high": float(pan.snr_range[1])}
        doc["pan"].update(pan.flat())
    if state is not None:
        doc["optimizer"] = {"step": state.step, "decay": state.decay, "eps": state.eps}
        doc["optimizer"].update({f"s.{k}": v for k, v in state.sq_avg.items()})
    return kvdoc.dumps(doc)


@dataclass
class Checkpoint:
    model: dict
    theta: dict
    pan: Pan | None
    state: OptimizerState | None


def load_checkpoint(text: str) -> Checkpoint:
    doc = kvdoc.loads(text)
    theta = {k: kvdoc.parse_array(v) for k, v in doc["params"].items()}
    pan = None
    if "pan" in doc:
        p = doc["pan"]
        names = tuple(x.strip() for x in p["names"].split(",") if x.strip())
        pan = Pan(names, {n: {} for n in names}, int(p["hidden"]), (float(p["snr_low"]), float(p["snr_high"])))
        pan.load_flat({k: kvdoc.parse_array(v) for k, v in p.items() if k.startswith("pan.")})
    state = None
    if "optimizer" in doc:
        o = doc["optimizer"]
        state = OptimizerState({k[2:]: kvdoc.parse_array(v) for k, v in o.items() if k.startswith("s.")},
                               float(o["decay"]), float(o["eps"]), int(o["step"]))
    return Checkpoint(doc["model"], theta, pan, state)


def theta_at(theta, pan: Pan | None, snr_db: float) -> dict[str, np.ndarray]:
    """Decoder parameters in effect at one SNR."""
    if pan is None:
        return theta
    out = dict(theta)
    vals = pan.forward(np.array([snr_db]))
    for k, v in vals.items():
        out[k] = np.array(v[0])
    return out


__all__ = [
    "Checkpoint", "DecoderSetup", "GradientTape", "OptimizerState", "Pan", "TrainConfig", "TrainResult",
    "batch_loss", "clip_global_norm", "dump_checkpoint", "format_log", "load_checkpoint", "pan_forward",
    "project", "record_loss", "rmsprop_step", "schedule_tick", "theta_at", "train",
    "validation_batch",
]
