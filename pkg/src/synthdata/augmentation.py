"""
 Copyright Duel 2025
"""
import logging
from dataclasses import dataclass
from math import comb
from typing import Iterable, Optional

import numpy as np

from src.models.bag import Bag
from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)

DEFAULT_MIN_K = 10


def sample_subset_indices(r: int, min_k: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw k uniformly from [min_k, r], then k sorted indices without replacement.
    :param r: Bag length.
    :param min_k: Smallest subset size; clipped to r.
    :param rng: Random stream.
    :return: Sorted indices.
    """
    if r < 1 or min_k < 1:
        raise DomainError(f"invalid subsample bounds r={r}, min_k={min_k}")
    low = min(min_k, r)
    k = int(rng.integers(low, r + 1))
    if k == r:
        return np.arange(r)
    return np.sort(rng.choice(r, size=k, replace=False))


def subsample_bag(bag: Bag, min_k: int, rng: np.random.Generator) -> Bag:
    """
    Examination-level augmentation: keep a random, order-preserving subset of the instances.

    The bag label is copied from the parent, accepting the p_flip risk. When the parent
    carries instance labels and K > r - min_k the label cannot flip; that is asserted.
    :param bag: Parent bag.
    :param min_k: Smallest subset size (must not exceed r).
    :param rng: Random stream.
    :return: The augmented bag.
    """
    r = len(bag)
    if min_k > r:
        raise DomainError(f"min_k={min_k} exceeds bag length {r}")
    indices = sample_subset_indices(r, min_k, rng)
    if len(indices) == r:
        return bag
    labels = bag.instance_labels()
    if labels is not None and labels.sum() > r - min_k:
        assert labels[indices].any(), "pigeonhole guarantee violated"
    return bag.subset(indices.tolist(), bag_id=f"{bag.id}~sub", keep_label=True)


def p_flip(r: int, K: int, k: int) -> float:
    """
    Probability that a uniform size-k subset of a bag with K positives out of r has no positive:
    C(r - K, k) / C(r, k).
    """
    if not (0 <= K <= r) or not (1 <= k <= r):
        raise DomainError(f"invalid p_flip bounds r={r}, K={K}, k={k}")
    if k > r - K:
        return 0.0
    return comb(r - K, k) / comb(r, k)


@dataclass
class PFlipSummary:
    """
    p_flip over the positive bags of a dataset, each bag averaged over uniform k in [min_k, r].
    """
    max: float
    mean: float
    bags: int
    min_k: int
    averaging: str = "per-bag mean over uniform k in [min_k, r], then max/mean over positive bags"


def bag_pflip(r: int, K: int, min_k: int) -> float:
    low = min(min_k, r)
    return float(np.mean([p_flip(r, K, k) for k in range(low, r + 1)]))


def estimate_dataset_pflip(bags: Iterable[Bag], min_k: int = DEFAULT_MIN_K) -> PFlipSummary:
    """
    Estimate the flip probability of subsampling augmentation over the positive bags.
    :param bags: Bags carrying instance labels.
    :param min_k: Smallest subset size used by the augmentation.
    :return: Max and mean over positive bags.
    """
    values = []
    for bag in bags:
        labels = bag.instance_labels()
        if labels is None:
            raise DomainError(f"bag {bag.id} has no instance labels; p_flip needs them")
        if bag.bag_label == 1:
            values.append(bag_pflip(len(bag), int(labels.sum()), min_k))
    if not values:
        return PFlipSummary(max=0.0, mean=0.0, bags=0, min_k=min_k)
    return PFlipSummary(max=float(np.max(values)), mean=float(np.mean(values)), bags=len(values), min_k=min_k)


def stratified_sample(labels: np.ndarray, m: int, rng: np.random.Generator,
                      minimum_per_class: Optional[int] = 1) -> np.ndarray:
    """
    Sample m indices without replacement keeping the label proportions (largest remainder).
    :param labels: Binary labels of the population.
    :param m: Number of indices to draw.
    :param rng: Random stream.
    :param minimum_per_class: Each present class gets at least this many draws when m allows.
    :return: Sorted sampled indices.
    """
    labels = np.asarray(labels)
    if m > len(labels) or m < 1:
        raise DomainError(f"cannot sample {m} labels from a population of {len(labels)}")
    classes = [np.flatnonzero(labels == c) for c in (0, 1)]
    exact = [m * len(idx) / len(labels) for idx in classes]
    counts = [int(np.floor(e)) for e in exact]
    remainder = m - sum(counts)
    for c in sorted((0, 1), key=lambda c: exact[c] - counts[c], reverse=True)[:remainder]:
        counts[c] += 1
    if minimum_per_class:
        for c in (0, 1):
            other = 1 - c
            need = min(minimum_per_class, len(classes[c]))
            while counts[c] < need and counts[other] > need:
                counts[c] += 1
                counts[other] -= 1
    picks = [rng.choice(idx, size=n, replace=False) for idx, n in zip(classes, counts) if n]
    return np.sort(np.concatenate(picks)) if picks else np.array([], dtype=np.int64)
