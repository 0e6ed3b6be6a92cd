"""Task losses: frequency-balanced class weights and the multi-task mix."""

import math
from dataclasses import dataclass

import numpy as np

LAMBDA = 1.2  # offset keeping 1 / ln(lambda + f) positive and finite


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss weights derived from label frequencies.

    w_c = 1 / ln(lambda + f_c) with f_c the class's share of non-ignored
    labels; unseen classes get the maximum weight 1 / ln(lambda).
    """

    weights: np.ndarray
    source_frequencies: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.weights).all() or (self.weights <= 0).any():
            raise ValueError("class weights must be finite and positive")


def inverse_log_frequency_weights(counts, ignore_index=None) -> ClassWeights:
    """Inverse-log-frequency weights over non-ignored classes."""
    counts = np.asarray(counts, dtype=np.float64).copy()
    if ignore_index is not None:
        counts[ignore_index] = 0
    total = counts.sum()
    if total <= 0:
        raise ValueError("all label counts are zero")
    freq = counts / total
    weights = 1.0 / np.log(LAMBDA + freq)
    if ignore_index is not None:
        # never selected by the loss; keep the array well-formed
        weights[ignore_index] = 1.0 / math.log(LAMBDA)
        freq[ignore_index] = 0.0
    return ClassWeights(weights=weights, source_frequencies=freq)


def multitask_loss(cls_loss, seg_loss, beta: float):
    """Convex task mix: beta * classification + (1 - beta) * segmentation."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return beta * cls_loss + (1.0 - beta) * seg_loss
