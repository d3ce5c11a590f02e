"""Training objectives."""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolation, ShapeError
from . import tensor as T
from .tensor import Tensor

EPS_CLAMP = 1e-7


def _binary_targets(targets, shape):
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != tuple(shape):
        raise ShapeError(f"targets {t.shape} do not match predictions {tuple(shape)}")
    if not np.all((t == 0) | (t == 1)):
        raise ContractViolation("binary targets must be 0 or 1")
    return t


def bce_loss(probs, targets, eps: float = EPS_CLAMP) -> Tensor:
    """Mean binary cross-entropy of probabilities clamped to ``[eps, 1 - eps]``."""
    probs = T.as_tensor(probs)
    t = _binary_targets(targets, probs.shape)
    p = T.clip(probs, eps, 1.0 - eps)
    ll = T.Tensor(t) * T.log(p) + T.Tensor(1.0 - t) * T.log(1.0 - p)
    return -T.mean(ll)


def bernoulli_log_prob(logits, targets, mask=None) -> Tensor:
    """Elementwise ``log Bernoulli(target | sigmoid(logit))``, zeroed where ``mask`` is 0."""
    logits = T.as_tensor(logits)
    t = _binary_targets(targets, logits.shape)
    # pick log sig(x) for ones and log sig(-x) for zeros
    signed = T.mul(logits, T.Tensor(2.0 * t - 1.0))
    ll = T.log_sigmoid(signed)
    if mask is not None:
        ll = T.mul(ll, T.Tensor(np.asarray(mask, dtype=np.float64)))
    return ll


def bce_with_logits(logits, targets, mask=None, reduction: str = "mean") -> Tensor:
    """Numerically stable BCE on logits; ``reduction`` is ``mean`` over unmasked entries or ``sum``."""
    ll = bernoulli_log_prob(logits, targets, mask)
    total = -T.sum_(ll)
    if reduction == "sum":
        return total
    count = ll.data.size if mask is None else float(np.asarray(mask).sum())
    return T.mul(total, 1.0 / max(count, 1.0))


def cross_entropy(logits, classes) -> Tensor:
    """Mean negative log-likelihood of integer ``classes`` under softmax(logits)."""
    logits = T.as_tensor(logits)
    if logits.ndim == 1:
        logits = T.reshape(logits, (1, -1))
    cls = np.atleast_1d(np.asarray(classes, dtype=np.int64))
    if cls.shape[0] != logits.shape[0]:
        raise ShapeError(f"{cls.shape[0]} classes for {logits.shape[0]} rows")
    if np.any(cls < 0) or np.any(cls >= logits.shape[1]):
        raise ContractViolation(f"class index outside [0, {logits.shape[1]})")
    lp = T.log_softmax(logits, axis=1)
    picked = lp[np.arange(len(cls)), cls]
    return -T.mean(picked)
