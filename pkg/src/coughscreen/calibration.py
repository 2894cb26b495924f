"""Isotonic probability calibration, calibration diagnostics, and Youden thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_ECE_BINS = 10


@dataclass(frozen=True)
class IsotonicMap:
    """Nondecreasing score -> probability map fitted by pool-adjacent-violators.

    ``scores`` are the distinct breakpoint abscissae in increasing order and
    ``values`` the fitted probabilities. Evaluation interpolates linearly
    between breakpoints and clamps outside the fitted range.
    """

    scores: np.ndarray
    values: np.ndarray


def fit_isotonic(scores, labels) -> IsotonicMap:
    """Least-squares nondecreasing fit of labels ordered by score (PAVA).

    Samples with tied scores are pooled into one breakpoint before the
    violator sweep, so ties always share a single fitted value.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and aligned")
    if scores.size < 2:
        raise ValueError("isotonic fit needs at least 2 samples")
    if labels.min() == labels.max():
        raise ValueError("isotonic fit needs both classes present")

    xs, inverse = np.unique(scores, return_inverse=True)
    w = np.bincount(inverse).astype(np.float64)
    ys = np.bincount(inverse, weights=labels) / w

    # Pool adjacent violators: merge blocks while any block mean decreases.
    vals = list(ys)
    weights = list(w)
    sizes = [1] * len(vals)
    i = 0
    while i < len(vals) - 1:
        if vals[i] > vals[i + 1]:
            tot = weights[i] + weights[i + 1]
            vals[i] = (vals[i] * weights[i] + vals[i + 1] * weights[i + 1]) / tot
            weights[i] = tot
            sizes[i] += sizes[i + 1]
            del vals[i + 1], weights[i + 1], sizes[i + 1]
            if i > 0:
                i -= 1
        else:
            i += 1
    fitted = np.repeat(vals, sizes)
    return IsotonicMap(scores=xs, values=fitted)


def apply_isotonic(mapping: IsotonicMap, scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    return np.interp(scores, mapping.scores, mapping.values)


def brier(probs, labels) -> float:
    """Mean squared error of probabilities against 0/1 labels."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape or probs.size == 0:
        raise ValueError("probs and labels must be nonempty and aligned")
    return float(np.mean((probs - labels) ** 2))


def ece(probs, labels, n_bins: int = DEFAULT_ECE_BINS) -> float:
    """Expected calibration error over equal-width probability bins.

    Weighted absolute gap between mean confidence and empirical accuracy
    per bin; empty bins contribute nothing.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape or probs.size == 0:
        raise ValueError("probs and labels must be nonempty and aligned")
    bins = np.minimum((probs * n_bins).astype(int), n_bins - 1)
    total = 0.0
    for b in range(n_bins):
        mask = bins == b
        n_b = int(mask.sum())
        if n_b == 0:
            continue
        total += n_b / probs.size * abs(labels[mask].mean() - probs[mask].mean())
    return float(total)


def youden_threshold(probs, labels):
    """Threshold maximizing J = sensitivity + specificity - 1.

    Candidates are 0, 1, and the midpoints between consecutive distinct
    probabilities; prediction is positive at p >= tau. Ties in J break
    toward the lower threshold (higher sensitivity), matching a screening
    operating point. Returns (tau, J).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape != labels.shape or probs.size == 0:
        raise ValueError("probs and labels must be nonempty and aligned")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("Youden threshold needs both classes present")

    distinct = np.unique(probs)
    candidates = np.concatenate([[0.0], 0.5 * (distinct[:-1] + distinct[1:]), [1.0]])
    # suffix counts of positives/negatives with prob >= v for each distinct v
    order = np.argsort(probs, kind="stable")
    sorted_labels = labels[order]
    sorted_probs = probs[order]
    pos_suffix = np.concatenate([np.cumsum((sorted_labels == 1)[::-1])[::-1], [0]])
    neg_suffix = np.concatenate([np.cumsum((sorted_labels == 0)[::-1])[::-1], [0]])
    idx = np.searchsorted(sorted_probs, candidates, side="left")
    tp = pos_suffix[idx].astype(np.int64)
    fp = neg_suffix[idx].astype(np.int64)
    # J = tp/n_pos - fp/n_neg; compare via the integer numerator over the
    # common denominator so ties are detected exactly, free of float noise
    numerator = tp * n_neg - fp * n_pos
    best = int(np.argmax(numerator))  # argmax takes the first (lowest) tau on ties
    j = tp[best] / n_pos - fp[best] / n_neg
    return float(candidates[best]), float(j)


def reliability_bins(probs, labels, n_bins: int = DEFAULT_ECE_BINS):
    """Reliability-diagram rows: (bin_center, mean_confidence, accuracy, count)."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    bins = np.minimum((probs * n_bins).astype(int), n_bins - 1)
    rows = []
    for b in range(n_bins):
        mask = bins == b
        center = (b + 0.5) / n_bins
        if mask.any():
            rows.append((center, float(probs[mask].mean()),
                         float(labels[mask].mean()), int(mask.sum())))
        else:
            rows.append((center, math.nan, math.nan, 0))
    return rows
