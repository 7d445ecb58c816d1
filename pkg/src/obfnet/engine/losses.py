"""Categorical cross-entropy over softmax probabilities."""

from __future__ import annotations

import numpy as np

from ..errors import DataError, ShapeError

PROB_FLOOR = 1e-7


def _check(probs, labels):
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.ndim != 2:
        raise ShapeError(f"probs must be (batch, classes), got {probs.shape}")
    if labels.shape != (probs.shape[0],):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {probs.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise DataError(
            f"label out of range [0, {probs.shape[1]}): "
            f"min={labels.min()}, max={labels.max()}")
    return probs, labels.astype(np.int64)


def cross_entropy(probs, labels):
    """Mean negative log-likelihood with probabilities clipped to [1e-7, 1].

    Returns (loss, gradient w.r.t. probs).  Feeding the gradient through
    a softmax layer's backward reproduces the fused (probs - onehot)/N
    logit gradient.
    """
    probs, labels = _check(probs, labels)
    n = probs.shape[0]
    rows = np.arange(n)
    p = np.clip(probs[rows, labels], PROB_FLOOR, 1.0)
    loss = float(-np.log(p).mean())
    grad = np.zeros_like(probs)
    grad[rows, labels] = -1.0 / (p * n)
    return loss, grad


def softmax_cross_entropy_grad(probs, labels):
    """Fused gradient w.r.t. pre-softmax logits: (probs - onehot) / batch."""
    probs, labels = _check(probs, labels)
    n = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return grad
