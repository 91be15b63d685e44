"""Bit-wise losses, per-codeword averages and the discounted multi-loss.

Probability-domain functions (:func:`bit_loss`, :func:`codeword_loss`,
:func:`multi_loss`) take the soft output ``o = Pr[x = 1]``. The training
path works on decoder marginals ``m`` directly through
:func:`multi_loss_from_llr`, which also returns d(loss)/d(m).
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

KINDS = ("binary_cross_entropy", "neg_soft_success", "soft_ber")
TAGS = {"ce": "binary_cross_entropy", "nss": "neg_soft_success", "soft-ber": "soft_ber"}
PROB_EPS = 1e-12


def loss_kind(name: str) -> str:
    """Resolve a config tag ("ce", "nss", "soft-ber") or full name to a loss kind."""
    if name in KINDS:
        return name
    try:
        return TAGS[name]
    except KeyError:
        raise ParameterError(f"unknown loss {name!r}; expected one of {sorted(TAGS)}") from None


def loss_tag(kind: str) -> str:
    kind = loss_kind(kind)
    return {v: k for k, v in TAGS.items()}[kind]


def bit_loss(kind: str, a, b):
    """Bit-wise loss L_bit(a, b) for true bit ``a`` and soft output ``b``."""
    kind = loss_kind(kind)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any((a != 0) & (a != 1)):
        raise ParameterError("true bits must be 0 or 1")
    if np.any(b < 0) or np.any(b > 1):
        raise ParameterError("soft outputs must lie in [0, 1]")
    # b**a * (1-b)**(1-a) for binary a, written without 0**0 issues
    agree = np.where(a == 1, b, 1.0 - b)
    if kind == "binary_cross_entropy":
        return -np.log(np.clip(agree, PROB_EPS, 1.0 - PROB_EPS))
    if kind == "neg_soft_success":
        return -agree
    return 1.0 - agree


def codeword_loss(kind: str, x, o) -> float:
    x = np.asarray(x)
    o = np.asarray(o)
    if x.shape[-1] != o.shape[-1]:
        raise ParameterError(f"length mismatch: {x.shape[-1]} vs {o.shape[-1]}")
    return np.mean(bit_loss(kind, x, o), axis=-1)


def discount_weights(eta: float, iterations: int) -> np.ndarray:
    """Normalized eta**(T-t) for t = 1..T, with 0**0 = 1."""
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"discount {eta} outside [0, 1]")
    if iterations < 1:
        raise ParameterError("multi-loss needs at least one iteration")
    w = np.power(float(eta), np.arange(iterations - 1, -1, -1, dtype=float))
    return w / w.sum()


def multi_loss(kind: str, eta: float, x, outputs) -> float:
    """Discounted average of per-iteration codeword losses; ``outputs`` is (T, ..., N)."""
    outputs = np.asarray(outputs, dtype=float)
    if outputs.ndim == 0 or outputs.shape[0] == 0:
        raise ParameterError("empty trace")
    w = discount_weights(eta, outputs.shape[0])
    per_iter = np.stack([codeword_loss(kind, x, o) for o in outputs])
    return np.tensordot(w, per_iter, axes=1)


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def bit_loss_from_llr(kind: str, x, m):
    """Loss and d(loss)/dm for true bits ``x`` and output LLRs ``m``.

    Uses the soft output o = 1 - sigmoid(m). Cross-entropy is evaluated in
    the log domain as softplus(-(1-2x) m), which equals -log of the
    probability of the true bit without floating-point saturation.
    """
    kind = loss_kind(kind)
    s = 1.0 - 2.0 * np.asarray(x, dtype=float)
    z = s * np.asarray(m, dtype=float)  # agreement logit
    if kind == "binary_cross_entropy":
        val = -_log_sigmoid(z)
        grad = -s * np.exp(_log_sigmoid(-z))
        return val, grad
    p_err = np.exp(_log_sigmoid(-z))
    dp = -s * p_err * np.exp(_log_sigmoid(z))
    if kind == "soft_ber":
        return p_err, dp
    return p_err - 1.0, dp


def multi_loss_from_llr(kind: str, eta: float, x, marginals):
    """Batch-mean multi-loss over marginals of shape (T, B, N).

    Returns (mean loss, per-sample losses (B,), gradient (T, B, N)).
    ``x`` broadcasts against (B, N).
    """
    marginals = np.asarray(marginals, dtype=float)
    if marginals.ndim != 3 or marginals.shape[0] == 0:
        raise ParameterError("marginals must have shape (T, B, N) with T >= 1")
    t, b, n = marginals.shape
    w = discount_weights(eta, t)
    val, grad = bit_loss_from_llr(kind, x, marginals)
    per_sample = np.tensordot(w, val.mean(axis=2), axes=1)
    grad = grad * (w[:, None, None] / (b * n))
    return float(per_sample.mean()), per_sample, grad
