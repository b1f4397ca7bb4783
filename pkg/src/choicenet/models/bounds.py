"""Norm-based Rademacher complexity bounds for ReLU networks."""
from __future__ import annotations

import math

import numpy as np


def rademacher_bound(depth: int, frobenius_norms, sample_x) -> float:
    """Upper bound on the empirical Rademacher complexity of a depth-D ReLU net.

    (sqrt(2 log D) + 1) * sqrt(mean ||x_i||^2) / sqrt(N) * prod_j M_F(j)
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    norms = np.asarray(frobenius_norms, dtype=float).ravel()
    if norms.size != depth:
        raise ValueError(f"expected {depth} layer norms, got {norms.size}")
    if np.any(norms <= 0):
        raise ValueError("layer norms must be positive")
    x = np.asarray(sample_x, dtype=float)
    if x.size == 0 or len(x) == 0:
        raise ValueError("sample must be nonempty")
    x = x.reshape(len(x), -1)
    n = len(x)
    radius = math.sqrt(float(np.mean(np.sum(x * x, axis=1))))
    return (math.sqrt(2.0 * math.log(depth)) + 1.0) * radius / math.sqrt(n) * float(np.prod(norms))


def bound_ratio_asu_vs_f(depth: int, K: int) -> float:
    """Ratio of the ASU-DNN bound to the F-DNN bound at equal entry cap and width: K^(-D/2)."""
    if depth < 0 or K < 1:
        raise ValueError("need depth >= 0 and K >= 1")
    return float(K) ** (-depth / 2.0)


def layer_norms(model) -> list[float]:
    """Frobenius norms of a model's weight matrices in layer order."""
    return [float(np.linalg.norm(w)) for w in model.weight_matrices()]
