"""Split conformal prediction at the cougher level.

Nonconformity of a calibration example is one minus the calibrated
probability assigned to its true label. For a miscoverage target alpha,
the quantile is the k-th smallest calibration score with
k = ceil((n + 1) (1 - alpha)); a label enters the prediction set when its
probability is >= 1 - qhat. Empty sets are allowed (and count as coverage
misses): they flag inputs more atypical than anything seen in calibration.

Coverage is only meaningful when calibration and test units are
exchangeable. Recordings from one cougher are not exchangeable with each
other, so this module refuses to operate at any level other than
"cougher"; callers must aggregate waveform probabilities first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

COUGHER_LEVEL = "cougher"


def nonconformity(p_pos, label):
    """1 - p_pos for positives, p_pos for negatives (vectorized)."""
    p_pos = np.asarray(p_pos, dtype=np.float64)
    label = np.asarray(label)
    return np.where(label == 1, 1.0 - p_pos, p_pos)


def fit_quantile(calib_p_pos, calib_labels, alpha: float) -> float:
    """Finite-sample conformal quantile from calibration scores.

    With k = ceil((n + 1)(1 - alpha)) the quantile is the k-th smallest
    score; when k exceeds n (tiny calibration sets) the quantile is 1,
    which degenerates to always predicting both labels — conservative and
    still valid.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    scores = np.sort(nonconformity(calib_p_pos, calib_labels))
    n = scores.size
    if n == 0:
        raise ValueError("empty calibration set")
    k = math.ceil((n + 1) * (1.0 - alpha))
    if k > n:
        return 1.0
    return float(scores[k - 1])


@dataclass(frozen=True)
class PredictionSet:
    labels: frozenset
    alpha: float
    p_pos: float

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def is_singleton(self) -> bool:
        return len(self.labels) == 1

    @property
    def is_ambiguous(self) -> bool:
        return len(self.labels) == 2


def predict_set(p_pos: float, qhat: float, alpha: float = math.nan) -> PredictionSet:
    """Label set at quantile qhat: include y iff p_y >= 1 - qhat."""
    members = set()
    if p_pos >= 1.0 - qhat:
        members.add(1)
    if 1.0 - p_pos >= 1.0 - qhat:
        members.add(0)
    return PredictionSet(labels=frozenset(members), alpha=alpha, p_pos=float(p_pos))


@dataclass
class ConformalCalibrator:
    """Sorted calibration scores plus the quantile for each requested alpha."""

    sorted_scores: np.ndarray
    quantiles: dict = field(default_factory=dict)
    level: str = COUGHER_LEVEL

    def prediction_sets(self, p_pos, alpha: float) -> list:
        q = self.quantiles[alpha]
        return [predict_set(p, q, alpha) for p in np.asarray(p_pos, dtype=np.float64)]


def fit_conformal(calib_p_pos, calib_labels, alphas, level: str = COUGHER_LEVEL) -> ConformalCalibrator:
    if level != COUGHER_LEVEL:
        raise ValueError(f"conformal calibration is only valid at the "
                         f"{COUGHER_LEVEL!r} level, got {level!r}: waveform-level "
                         "examples from one cougher are not exchangeable")
    scores = np.sort(nonconformity(calib_p_pos, calib_labels))
    quantiles = {float(a): fit_quantile(calib_p_pos, calib_labels, a) for a in alphas}
    return ConformalCalibrator(sorted_scores=scores, quantiles=quantiles, level=level)


def evaluate_sets(sets, labels) -> dict:
    """Coverage, mean set size, singleton rate, and empty-set rate."""
    labels = np.asarray(labels)
    if len(sets) != labels.size or labels.size == 0:
        raise ValueError("sets and labels must be nonempty and aligned")
    covered = np.array([int(y) in s.labels for s, y in zip(sets, labels)])
    sizes = np.array([s.size for s in sets])
    return {
        "coverage": float(covered.mean()),
        "mean_size": float(sizes.mean()),
        "singleton_rate": float(np.mean(sizes == 1)),
        "empty_rate": float(np.mean(sizes == 0)),
    }


def selective_metrics(point_preds, sets, labels) -> dict:
    """Selective (reject-option) evaluation treating singletons as accepted.

    Returns overall point accuracy, accuracy conditional on singleton and
    on ambiguous (two-label) sets, and the fraction of correct point
    predictions returned as singletons. Conditional accuracies are NaN
    sentinels when their condition never occurs.
    """
    point_preds = np.asarray(point_preds)
    labels = np.asarray(labels)
    if not (len(sets) == labels.size == point_preds.size) or labels.size == 0:
        raise ValueError("point_preds, sets, and labels must be nonempty and aligned")
    correct = point_preds == labels
    singleton = np.array([s.is_singleton for s in sets])
    ambiguous = np.array([s.is_ambiguous for s in sets])

    def _cond(mask):
        return float(correct[mask].mean()) if mask.any() else math.nan

    n_correct = int(correct.sum())
    return {
        "accuracy": float(correct.mean()),
        "accuracy_singleton": _cond(singleton),
        "accuracy_ambiguous": _cond(ambiguous),
        "p_singleton_given_correct": (float(singleton[correct].mean())
                                      if n_correct else math.nan),
        "n": int(labels.size),
        "n_singleton": int(singleton.sum()),
        "n_ambiguous": int(ambiguous.sum()),
        "n_correct": n_correct,
        "n_correct_singleton": int(np.sum(correct & singleton)),
        "n_correct_ambiguous": int(np.sum(correct & ambiguous)),
    }
