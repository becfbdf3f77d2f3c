"""Evaluation report assembly and serialization.

Reports carry fractions internally and render percentages with two
decimals.  Serialization is canonical (sorted keys, fixed indentation) so
identical results produce identical bytes.
"""

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .metrics import (
    ConfusionMatrix,
    ScoreSet,
    compute_acer,
    compute_apcer_bpcer,
    compute_eer,
    confusion_matrix,
)


def _pct(x: float) -> str:
    return "%.2f" % (100.0 * x)


@dataclass(frozen=True)
class EvalReport:
    """Final numbers for one protocol run.

    apcer/bpcer are evaluated at ``threshold`` (the equal-error operating
    point); ``d_eer`` is the interpolated crossing value itself.  acer is
    exactly the mean of apcer and bpcer.
    """

    task: str
    num_classes: int
    accuracy: float
    d_eer: float
    apcer: float
    bpcer: float
    acer: float
    threshold: float
    confusion: ConfusionMatrix

    def __post_init__(self):
        for name in ("accuracy", "d_eer", "apcer", "bpcer", "acer"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError("%s must lie in [0, 1], got %r" % (name, v))
        if self.acer != (self.apcer + self.bpcer) / 2.0:
            raise ValueError("acer must equal the exact mean of apcer and bpcer")

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "num_classes": self.num_classes,
            "accuracy": self.accuracy,
            "d_eer": self.d_eer,
            "apcer": self.apcer,
            "bpcer": self.bpcer,
            "acer": self.acer,
            "threshold": self.threshold,
            "confusion": self.confusion.counts.tolist(),
            "percent": {
                "accuracy": _pct(self.accuracy),
                "d_eer": _pct(self.d_eer),
                "apcer": _pct(self.apcer),
                "bpcer": _pct(self.bpcer),
                "acer": _pct(self.acer),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(task=d["task"], num_classes=d["num_classes"],
                   accuracy=d["accuracy"], d_eer=d["d_eer"], apcer=d["apcer"],
                   bpcer=d["bpcer"], acer=d["acer"], threshold=d["threshold"],
                   confusion=ConfusionMatrix(np.asarray(d["confusion"])))

    @classmethod
    def load(cls, path: str) -> "EvalReport":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def build_report(task: str, pred: Sequence[int], true: Sequence[int],
                 num_classes: int, attack_scores: Optional[ScoreSet] = None) -> EvalReport:
    """Assemble a report from predictions plus binary detection scores.

    ``attack_scores`` holds the larger-is-more-attack-like score per sample
    with the binarized ground truth; when omitted the binary metrics
    degenerate to the multiclass error split by predicted bona fide vs not.
    """
    cm = confusion_matrix(pred, true, num_classes)
    if attack_scores is None:
        pred_attack = (np.asarray(pred) != 0).astype(np.float64)
        attack_scores = ScoreSet(scores=pred_attack,
                                 labels=(np.asarray(true) != 0).astype(np.int64))
    d_eer, threshold = compute_eer(attack_scores)
    apcer, bpcer = compute_apcer_bpcer(attack_scores, threshold)
    return EvalReport(task=task, num_classes=num_classes, accuracy=cm.accuracy,
                      d_eer=d_eer, apcer=apcer, bpcer=bpcer,
                      acer=compute_acer(apcer, bpcer), threshold=threshold,
                      confusion=cm)
