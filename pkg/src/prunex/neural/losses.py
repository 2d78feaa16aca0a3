"""Focal loss for imbalanced binary classification."""
from __future__ import annotations

import numpy as np

P_CLAMP = 1e-7


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def focal_loss(p, y, alpha: float, gamma: float):
    """-a y (1-p)^g log p - (1-a)(1-y) p^g log(1-p), elementwise.

    ``p`` is clamped to [1e-7, 1 - 1e-7] before taking logs.
    """
    p = np.clip(np.asarray(p, dtype=np.float64), P_CLAMP, 1.0 - P_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return -alpha * y * (1.0 - p) ** gamma * np.log(p) - (1.0 - alpha) * (1.0 - y) * p ** gamma * np.log1p(-p)


def focal_grad(p, y, alpha: float, gamma: float):
    """Derivative of :func:`focal_loss` with respect to the logit, with p = sigmoid(logit)."""
    p = np.clip(np.asarray(p, dtype=np.float64), P_CLAMP, 1.0 - P_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    q = 1.0 - p
    pos = alpha * y * q ** gamma * (gamma * p * np.log(p) - q)
    neg = (1.0 - alpha) * (1.0 - y) * p ** gamma * (p - gamma * q * np.log1p(-p))
    return pos + neg


def focal_loss_logits(z, y, alpha: float, gamma: float):
    p = sigmoid(z)
    return focal_loss(p, y, alpha, gamma), focal_grad(p, y, alpha, gamma)
