"""Biometric attack-detection metrics.

Scores are oriented so that larger means more attack-like.  At a threshold
theta, a sample is called an attack when its score is >= theta; the attack
classification error rate (apcer) is the fraction of attacks scored below
theta, and the bona fide classification error rate (bpcer) is the fraction
of bona fide samples scored at or above it.  The detection equal error
rate is the crossing of the two curves, linearly interpolated between the
two adjacent operating points when no threshold achieves exact equality.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

ATTACK = 1
BONA_FIDE_LABEL = 0


@dataclass(frozen=True)
class ScoreSet:
    """Detection scores with binary ground truth (1 = attack)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).ravel()
        y = np.asarray(self.labels, dtype=np.int64).ravel()
        if s.shape != y.shape:
            raise ValueError("scores and labels must be aligned")
        if s.size == 0:
            raise ValueError("empty score set")
        if not np.all(np.isfinite(s)):
            raise ValueError("scores contain non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 (bona fide) or 1 (attack)")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)

    @property
    def attack_scores(self) -> np.ndarray:
        return self.scores[self.labels == ATTACK]

    @property
    def bona_fide_scores(self) -> np.ndarray:
        return self.scores[self.labels == BONA_FIDE_LABEL]

    def require_both_classes(self):
        if self.attack_scores.size == 0 or self.bona_fide_scores.size == 0:
            raise ValueError("score set must contain both classes")


def compute_apcer_bpcer(scores: ScoreSet, threshold: float) -> Tuple[float, float]:
    """Error rates at one operating threshold."""
    scores.require_both_classes()
    apcer = float(np.mean(scores.attack_scores < threshold))
    bpcer = float(np.mean(scores.bona_fide_scores >= threshold))
    return apcer, bpcer


def compute_acer(apcer: float, bpcer: float) -> float:
    for name, v in (("apcer", apcer), ("bpcer", bpcer)):
        if not (0.0 <= v <= 1.0):
            raise ValueError("%s must lie in [0, 1], got %r" % (name, v))
    return (apcer + bpcer) / 2.0


def _candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints between adjacent distinct scores, plus outer sentinels.

    Every achievable (apcer, bpcer) operating point appears exactly once.
    """
    distinct = np.unique(scores)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate([[distinct[0] - 1.0], mids, [distinct[-1] + 1.0]])


def compute_eer(scores: ScoreSet) -> Tuple[float, float]:
    """Detection equal error rate and its threshold.

    apcer is non-decreasing and bpcer non-increasing in the threshold, so
    their difference crosses zero exactly once over the candidate sweep.
    When no candidate achieves equality the crossing is interpolated
    linearly between the two adjacent operating points; the interpolated
    value is independent of how finely thresholds are swept once both
    sides of the jump are present.
    """
    scores.require_both_classes()
    cands = _candidate_thresholds(scores.scores)
    ap = np.array([np.mean(scores.attack_scores < t) for t in cands])
    bp = np.array([np.mean(scores.bona_fide_scores >= t) for t in cands])
    diff = ap - bp
    i = int(np.argmax(diff >= 0.0))  # first crossing; diff[0] = -1, diff[-1] = +1
    if diff[i] == 0.0:
        return float(ap[i]), float(cands[i])
    a1, a2 = ap[i - 1], ap[i]
    b1, b2 = bp[i - 1], bp[i]
    t1, t2 = cands[i - 1], cands[i]
    frac = (b1 - a1) / ((a2 - a1) - (b2 - b1))
    return float(a1 + (a2 - a1) * frac), float(t1 + (t2 - t1) * frac)


def compute_accuracy(pred: Sequence[int], true: Sequence[int]) -> float:
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError("pred and true must be aligned and non-empty")
    return float(np.mean(pred == true))


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(c < 0):
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0


def confusion_matrix(pred: Sequence[int], true: Sequence[int],
                     num_classes: int) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError("pred and true must be aligned")
    if np.any((pred < 0) | (pred >= num_classes) | (true < 0) | (true >= num_classes)):
        raise ValueError("labels outside [0, %d)" % num_classes)
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts=counts)
