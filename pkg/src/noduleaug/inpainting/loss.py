"""Spatially discounted reconstruction loss."""

from __future__ import annotations

import numpy as np


def reconstruction_loss(
    predicted: np.ndarray,
    target: np.ndarray,
    weights: np.ndarray,
    norm: str = "l1",
) -> float:
    """Weighted mean reconstruction error over the hole.

    sum(w * |pred - target|^p) / sum(w) with p=1 (default) or p=2, so a
    constant offset gives back exactly that offset regardless of weights.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if predicted.shape != target.shape or predicted.shape != weights.shape:
        raise ValueError(
            f"shape mismatch: pred {predicted.shape}, target {target.shape}, "
            f"weights {weights.shape}"
        )
    err = np.abs(predicted - target)
    if norm == "l2":
        err = err**2
    elif norm != "l1":
        raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")
    return float((weights * err).sum() / weights.sum())
