"""
 Copyright Duel 2025
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erfc
from scipy.stats import rankdata

from src.metrics.roc import validate_scores
from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeLongResult:
    """
    One-sided comparison of two correlated AUCs. The alternative is AUC_b > AUC_a.
    """
    auc_a: float
    auc_b: float
    z: float
    p_value: float
    variance: float
    degenerate: bool = False
    alternative: str = "auc_b > auc_a"

    def as_dict(self) -> dict:
        return asdict(self)


def _placements(scores: np.ndarray, labels: np.ndarray):
    """
    Midrank AUC and structural components (placement values) of one classifier.
    """
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    m, n = len(pos), len(neg)
    all_ranks = rankdata(np.concatenate((pos, neg)))
    pos_ranks = rankdata(pos)
    neg_ranks = rankdata(neg)
    auc = (all_ranks[:m].sum() / m - (m + 1) / 2.0) / n
    v10 = (all_ranks[:m] - pos_ranks) / n
    v01 = 1.0 - (all_ranks[m:] - neg_ranks) / m
    return auc, v10, v01


def normal_sf(z: float) -> float:
    """
    1 - Phi(z) via the complementary error function.
    """
    return float(0.5 * erfc(z / np.sqrt(2.0)))


def delong_one_sided(scores_a, scores_b, labels) -> DeLongResult:
    """
    DeLong's test for paired AUCs on the same samples, one-sided for AUC_b > AUC_a.
    :param scores_a: Scores of classifier a.
    :param scores_b: Scores of classifier b, aligned with a.
    :param labels: Binary labels.
    :return: z = (AUC_b - AUC_a) / sqrt(var) and p = 1 - Phi(z).
    """
    scores_a, labels = validate_scores(scores_a, labels)
    scores_b, _ = validate_scores(scores_b, labels)
    if scores_a.shape != scores_b.shape:
        raise DomainError("both classifiers must score the same samples")

    auc_a, v10_a, v01_a = _placements(scores_a, labels)
    auc_b, v10_b, v01_b = _placements(scores_b, labels)
    m, n = len(v10_a), len(v01_a)
    s10 = np.cov(np.vstack((v10_a, v10_b))) if m > 1 else np.zeros((2, 2))
    s01 = np.cov(np.vstack((v01_a, v01_b))) if n > 1 else np.zeros((2, 2))
    covariance = s10 / m + s01 / n
    variance = float(covariance[0, 0] + covariance[1, 1] - 2.0 * covariance[0, 1])
    difference = float(auc_b - auc_a)

    if np.array_equal(scores_a, scores_b) or (variance <= 0 and difference == 0):
        return DeLongResult(auc_a=float(auc_a), auc_b=float(auc_b), z=0.0, p_value=0.5, variance=max(variance, 0.0),
                            degenerate=variance <= 0)
    if variance <= 0:
        logger.warning("DeLong variance is zero with unequal AUCs (%.6f vs %.6f)", auc_a, auc_b)
        z = float(np.copysign(np.inf, difference))
        return DeLongResult(auc_a=float(auc_a), auc_b=float(auc_b), z=z, p_value=0.0 if difference > 0 else 1.0,
                            variance=0.0, degenerate=True)
    z = difference / np.sqrt(variance)
    return DeLongResult(auc_a=float(auc_a), auc_b=float(auc_b), z=float(z), p_value=normal_sf(z), variance=variance)
