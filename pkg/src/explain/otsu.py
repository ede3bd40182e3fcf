"""
 Copyright Duel 2025
"""
from typing import Tuple

import numpy as np

from src.utilities.errors import DomainError

OTSU_BINS = 256


def otsu_threshold(values, bins: int = OTSU_BINS) -> float:
    """
    Threshold maximising the between-class variance over a histogram of the value range.
    Class one is every bin above the split, so the threshold is the upper edge of the split bin.
    A constant grid returns that constant.
    :param values: Non-empty finite grid.
    :param bins: Histogram bins.
    :return: The threshold.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DomainError("Otsu threshold of an empty grid")
    if not np.all(np.isfinite(values)):
        raise DomainError("Otsu threshold of a grid with non-finite values")
    low, high = float(values.min()), float(values.max())
    if low == high:
        return low

    counts, edges = np.histogram(values, bins=bins, range=(low, high))
    p = counts / counts.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    omega = np.cumsum(p)[:-1]
    mu = np.cumsum(p * centers)[:-1]
    mu_total = float(np.sum(p * centers))
    denominator = omega * (1.0 - omega)
    between = np.zeros_like(omega)
    valid = denominator > 0
    between[valid] = (mu_total * omega[valid] - mu[valid]) ** 2 / denominator[valid]
    split = int(np.argmax(between))
    return float(edges[split + 1])


def otsu_mask(values) -> Tuple[float, np.ndarray]:
    """
    :return: (threshold, grid >= threshold); the mask of a constant grid is empty.
    """
    values = np.asarray(values, dtype=np.float64)
    threshold = otsu_threshold(values)
    if values.min() == values.max():
        return threshold, np.zeros(values.shape, dtype=bool)
    return threshold, values >= threshold
