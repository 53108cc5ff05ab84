"""Reconstruction losses and the softmax cross-entropy used by probes.

Both reconstruction losses average over every element of the batch tensor.
Binary cross-entropy clamps predictions to [1e-7, 1 - 1e-7] before the log,
and the clamp zeroes the gradient wherever it was active.
"""

from __future__ import annotations

import numpy as np

BCE_EPS = 1e-7

LOSS_KINDS = ("bce", "mse")


def reconstruction_loss(pred, target, kind="bce"):
    loss, _ = reconstruction_loss_grad(pred, target, kind)
    return loss


def reconstruction_loss_grad(pred, target, kind="bce"):
    """Returns (scalar loss, gradient with respect to ``pred``)."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    n = pred.size
    if kind == "mse":
        diff = pred - target
        loss = float(np.mean(diff * diff))
        return loss, (2.0 / n) * diff
    if kind == "bce":
        p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
        loss = float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))
        grad = (p - target) / (p * (1.0 - p) * n)
        grad = np.where((pred > BCE_EPS) & (pred < 1.0 - BCE_EPS), grad, 0.0)
        return loss, grad.astype(pred.dtype, copy=False)
    raise ValueError(f"unknown loss kind {kind!r}")


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over integer labels; returns (loss, d_logits)."""
    logits = np.asarray(logits)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = float(-log_p[np.arange(n), labels].mean())
    d_logits = np.exp(log_p)
    d_logits[np.arange(n), labels] -= 1.0
    return loss, d_logits / n
