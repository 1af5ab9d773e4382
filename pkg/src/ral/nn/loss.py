"""Softmax cross-entropy, the training criterion."""

from __future__ import annotations

import numpy as np


def softmax(logits):
    """Row-wise stable softmax. Accepts (N,) or (B, N)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Loss and logit gradient for one sample.

    loss = -log softmax(logits)[label], computed with max subtraction so
    extreme logits do not overflow; grad = softmax(logits) - onehot(label).
    """
    logits = np.asarray(logits)
    n = logits.shape[0]
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range for {n} classes")
    z = logits - logits.max()
    logsumexp = np.log(np.exp(z).sum())
    loss = logsumexp - z[label]
    grad = np.exp(z - logsumexp)
    grad[label] -= 1.0
    return float(loss), grad


def softmax_cross_entropy_batch(logits, labels):
    """Mean loss over a batch and the gradient w.r.t. the logits.

    logits: (B, N); labels: (B,) int class indices.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    B, n = logits.shape
    if labels.min() < 0 or labels.max() >= n:
        raise ValueError(f"labels outside [0, {n}) in batch")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(B), labels]))
    grad = np.exp(z - logsumexp[:, None])
    grad[np.arange(B), labels] -= 1.0
    return loss, grad / B
