"""
 Copyright Duel 2025
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
import pandas as pd

from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)


class ThresholdCriterion(str, Enum):
    YOUDEN = "youden"
    DISTANCE = "distance"


@dataclass(frozen=True)
class RocCurve:
    """
    ROC curve with thresholds in descending order, from +inf (nothing positive) to -inf
    (everything positive). A sample is called positive when its score is >= the threshold.
    """
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    positives: int
    negatives: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"threshold": self.thresholds, "fpr": self.fpr, "tpr": self.tpr})


@dataclass(frozen=True)
class ThresholdChoice:
    criterion: ThresholdCriterion
    threshold: float
    tpr: float
    fpr: float
    value: float

    def as_dict(self) -> dict:
        return {"criterion": self.criterion.value, "threshold": self.threshold, "tpr": self.tpr,
                "fpr": self.fpr, "value": self.value}


def validate_scores(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise DomainError(f"scores {scores.shape} and labels {labels.shape} must be aligned vectors")
    if not np.all(np.isfinite(scores)):
        raise DomainError("scores contain non-finite values")
    if not np.all(np.isin(labels, (0, 1))):
        raise DomainError("labels must be binary")
    labels = labels.astype(np.int64)
    if labels.sum() == 0 or labels.sum() == len(labels):
        raise DomainError("ROC analysis needs at least one positive and one negative label")
    return scores, labels


def roc_auc(scores, labels) -> RocCurve:
    """
    ROC curve over every distinct score plus the two infinite sentinels, and its trapezoidal area
    (equal to the Mann-Whitney statistic with ties counted one half).
    :param scores: Real-valued scores.
    :param labels: Binary labels aligned with the scores.
    :return: The curve.
    """
    scores, labels = validate_scores(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # last index of each block of equal scores
    distinct = np.flatnonzero(np.diff(sorted_scores)) if len(scores) > 1 else np.array([], dtype=np.int64)
    ends = np.concatenate((distinct, [len(scores) - 1]))
    tps = np.cumsum(sorted_labels)[ends]
    fps = (ends + 1) - tps

    positives = int(labels.sum())
    negatives = len(labels) - positives
    thresholds = np.concatenate(([np.inf], sorted_scores[ends], [-np.inf]))
    tpr = np.concatenate(([0.0], tps / positives, [1.0]))
    fpr = np.concatenate(([0.0], fps / negatives, [1.0]))
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=auc, positives=positives, negatives=negatives)


def pairwise_auc(scores, labels) -> float:
    """
    O(n_pos * n_neg) Mann-Whitney AUC.
    """
    scores, labels = validate_scores(scores, labels)
    pos = scores[labels == 1][:, None]
    neg = scores[labels == 0][None, :]
    return float(np.mean((pos > neg) + 0.5 * (pos == neg)))


def choose_threshold(curve: RocCurve, criterion: ThresholdCriterion = ThresholdCriterion.YOUDEN) -> ThresholdChoice:
    """
    Pick t* on the curve: youden maximises TPR - FPR, distance minimises the distance to (0, 1).
    Ties go to the larger threshold; an observed score is preferred over an infinite sentinel
    that only ties with it.
    :param curve: A ROC curve.
    :param criterion: youden or distance.
    :return: The choice.
    """
    criterion = ThresholdCriterion(criterion)
    if criterion == ThresholdCriterion.YOUDEN:
        values = curve.tpr - curve.fpr
        optimal = values == values.max()
    else:
        values = np.sqrt(curve.fpr ** 2 + (1.0 - curve.tpr) ** 2)
        optimal = values == values.min()
    finite = optimal & np.isfinite(curve.thresholds)
    # thresholds are descending: the first optimal index is the largest threshold
    best = int(np.argmax(finite)) if finite.any() else int(np.argmax(optimal))
    return ThresholdChoice(criterion=criterion, threshold=float(curve.thresholds[best]), tpr=float(curve.tpr[best]),
                           fpr=float(curve.fpr[best]), value=float(values[best]))
