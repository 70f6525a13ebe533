"""Small shared numerical helpers."""

import numpy as np


def logsumexp(a, axis=None):
    """Stable log(sum(exp(a))) along ``axis`` (None = over everything)."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def normalize_probs(p, floor=1e-10):
    """Clip probabilities to ``floor`` and renormalize to sum 1."""
    p = np.maximum(np.asarray(p, dtype=float), floor)
    return p / p.sum()


def sigmoid(z):
    z = np.clip(z, -35.0, 35.0)
    return 1.0 / (1.0 + np.exp(-z))
