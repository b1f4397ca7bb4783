"""Numerical layer primitives on plain numpy arrays.

These are the reference forms of the operations recorded on the gradient tape;
:mod:`choicenet.core.tape` calls into them for its forward values.
"""
from __future__ import annotations

import numpy as np

from .rng import as_generator

PROB_FLOOR = 1e-15
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _finite(a, name="input"):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def relu(t):
    t = _finite(t)
    return np.maximum(t, 0.0)


def softmax(v, axis=-1):
    v = _finite(v, "utilities")
    if v.shape[axis] < 2:
        raise ValueError("softmax needs at least two alternatives")
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v, axis=-1):
    v = np.asarray(v, dtype=float)
    shifted = v - v.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def logsumexp(v, axis=-1, keepdims=False):
    v = np.asarray(v, dtype=float)
    m = v.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(v - m).sum(axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def cross_entropy(p, y):
    """Negative log-probability of the chosen alternative.

    ``y`` is a one-hot vector (or a batch of them, one per row).  The chosen
    probability is floored at ``PROB_FLOOR`` before taking the log.  For a
    batch the mean loss is returned.
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: p {p.shape} vs y {y.shape}")
    chosen = np.sum(p * y, axis=-1)
    losses = -np.log(np.maximum(chosen, PROB_FLOOR))
    return float(losses) if losses.ndim == 0 else float(losses.mean())


def he_init(rows: int, cols: int, rng) -> np.ndarray:
    """He-normal weights of shape (rows, cols); rows is the fan-in."""
    if rows < 1 or cols < 1:
        raise ValueError(f"dimensions must be positive, got ({rows}, {cols})")
    gen = as_generator(rng)
    return gen.normal(0.0, np.sqrt(2.0 / rows), size=(rows, cols))


def dropout_mask(shape, rate: float, rng) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = as_generator(rng).random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(t, rate: float, mode: str, rng=None):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    t = np.asarray(t, dtype=float)
    if mode == "eval" or rate == 0.0:
        return t.copy()
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    return t * dropout_mask(t.shape, rate, rng)


def batch_norm(x, gamma, beta, running_mean, running_var, mode: str,
               momentum: float = BN_MOMENTUM, eps: float = BN_EPS, axis: int = -2):
    """Batch normalisation over the sample axis.

    Returns ``(out, new_running_mean, new_running_var)``.  In eval mode the
    running statistics are returned unchanged.
    """
    x = np.asarray(x, dtype=float)
    if mode == "train":
        if x.shape[axis] < 2:
            raise ValueError("train-mode batch norm needs a batch of at least 2")
        mean = x.mean(axis=axis, keepdims=True)
        var = x.var(axis=axis, keepdims=True)
        xhat = (x - mean) / np.sqrt(var + eps)
        new_mean = momentum * running_mean + (1.0 - momentum) * mean
        new_var = momentum * running_var + (1.0 - momentum) * var
        return gamma * xhat + beta, new_mean, new_var
    if mode != "eval":
        raise ValueError(f"unknown mode {mode!r}")
    xhat = (x - running_mean) / np.sqrt(running_var + eps)
    return gamma * xhat + beta, running_mean, running_var


def softplus(t):
    return np.logaddexp(0.0, t)
