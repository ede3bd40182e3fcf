"""
 Copyright Duel 2025
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)

# Minimal sequence lengths per estimator
MIN_LENGTH_STRONG = 4
MIN_LENGTH_ATTENTION = 2
MIN_LENGTH_SHAPLEY = 3
DEFAULT_MIN_LENGTHS = {"strong": MIN_LENGTH_STRONG, "attention": MIN_LENGTH_ATTENTION, "shapley": MIN_LENGTH_SHAPLEY}
SWEEP_LENGTHS = tuple(range(1, 9))


@dataclass(frozen=True)
class SequenceSet:
    """
    Disjoint, sorted, inclusive [start, end] index ranges within a bag of length r.
    """
    ranges: Tuple[Tuple[int, int], ...]
    length: int

    def __post_init__(self):
        previous_end = -1
        for start, end in self.ranges:
            if start > end:
                raise DomainError(f"empty range [{start}, {end}]")
            if start <= previous_end:
                raise DomainError(f"ranges overlap or are unsorted at [{start}, {end}]")
            if start < 0 or end >= self.length:
                raise DomainError(f"range [{start}, {end}] outside [0, {self.length})")
            previous_end = end

    def __len__(self) -> int:
        return len(self.ranges)

    def __iter__(self):
        return iter(self.ranges)

    @classmethod
    def of(cls, ranges: Iterable[Sequence[int]], length: int) -> "SequenceSet":
        return cls(ranges=tuple((int(s), int(e)) for s, e in ranges), length=int(length))


def extract_sequences(flags, min_len: int = 1) -> SequenceSet:
    """
    Maximal runs of consecutive ones of length >= min_len.
    :param flags: Binary vector.
    :param min_len: Minimal run length, >= 1.
    :return: The runs as inclusive ranges.
    """
    if min_len < 1:
        raise DomainError(f"minimal sequence length must be >= 1, got {min_len}")
    flags = np.asarray(flags).astype(bool).astype(np.int8)
    padded = np.concatenate(([0], flags, [0]))
    edges = np.flatnonzero(np.diff(padded))
    ranges = [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2]) if b - a >= min_len]
    return SequenceSet.of(ranges, len(flags))


@dataclass
class DetectionReport:
    """
    Exam-level sequence detection counts of one bag.
    """
    tp: int
    fp: int
    true_count: int
    precision: float
    recall: float
    f1: float
    # predicted sequence -> index of its estimator argmax
    argmaxes: List[int] = field(default_factory=list)
    ties: bool = False
    # per true sequence: (length, detected)
    true_sequences: List[Tuple[int, bool]] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)
    bag_id: Optional[str] = None

    @property
    def pp(self) -> int:
        return self.tp + self.fp

    def as_row(self) -> dict:
        return {"bag_id": self.bag_id, "tp": self.tp, "fp": self.fp, "pp": self.pp, "true": self.true_count,
                "precision": self.precision, "recall": self.recall, "f1": self.f1, "ties": self.ties,
                "flags": ";".join(self.flags)}


def _f1(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)


def sequence_detection_report(true: SequenceSet, predicted: SequenceSet, estimator,
                              bag_id: Optional[str] = None) -> DetectionReport:
    """
    Count a true positive for each true sequence containing the estimator argmax of some predicted
    sequence, and a false positive for each predicted sequence whose argmax hits no true sequence.
    Argmax ties go to the lowest index.
    :param true: True sequences T.
    :param predicted: Predicted sequences P.
    :param estimator: Per-instance scores S used to locate each predicted sequence.
    :param bag_id: Optional id carried into the report.
    :return: The report.
    """
    estimator = np.asarray(estimator, dtype=np.float64)
    if estimator.ndim != 1 or not np.all(np.isfinite(estimator)):
        raise DomainError("estimator must be a finite vector")
    for sequences in (true, predicted):
        if sequences.ranges and sequences.ranges[-1][1] >= len(estimator):
            raise DomainError(f"range {sequences.ranges[-1]} outside an estimator of length {len(estimator)}")

    argmaxes, ties = [], False
    for start, end in predicted:
        window = estimator[start:end + 1]
        argmaxes.append(start + int(np.argmax(window)))
        ties = ties or int(np.sum(window == window.max())) > 1

    detected = [any(start <= k <= end for k in argmaxes) for start, end in true]
    tp = int(sum(detected))
    fp = sum(1 for k in argmaxes if not any(start <= k <= end for start, end in true))
    flags = []
    if len(true) == 0 and len(predicted) == 0:
        precision, recall, f1 = 1.0, 1.0, 1.0
        flags.append("empty")
    else:
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / len(true) if len(true) else 0.0
        f1 = _f1(precision, recall)
    return DetectionReport(tp=tp, fp=fp, true_count=len(true), precision=precision, recall=recall, f1=f1,
                           argmaxes=argmaxes, ties=ties,
                           true_sequences=[(end - start + 1, d) for (start, end), d in zip(true, detected)],
                           flags=flags, bag_id=bag_id)


def missed_report(true: SequenceSet, bag_id: Optional[str] = None) -> DetectionReport:
    """
    Report for a positive bag the upstream classifier called negative: every true sequence missed.
    """
    return DetectionReport(tp=0, fp=0, true_count=len(true), precision=0.0, recall=0.0, f1=0.0,
                           true_sequences=[(end - start + 1, False) for start, end in true],
                           flags=["predicted_negative"], bag_id=bag_id)


def aggregate_reports(reports: Sequence[DetectionReport]) -> dict:
    """
    Micro-averaged counts plus the mean per-bag f1.
    """
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    true_count = sum(r.true_count for r in reports)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / true_count if true_count else 0.0
    return {"bags": len(reports), "tp": tp, "fp": fp, "pp": tp + fp, "true": true_count, "precision": precision,
            "recall": recall, "f1": _f1(precision, recall),
            "mean_f1": float(np.mean([r.f1 for r in reports])) if reports else float("nan")}


def reports_frame(reports: Sequence[DetectionReport]) -> pd.DataFrame:
    """
    One row per bag plus an aggregate row.
    """
    rows = [r.as_row() for r in reports]
    aggregate = aggregate_reports(reports)
    rows.append({"bag_id": "ALL", "tp": aggregate["tp"], "fp": aggregate["fp"], "pp": aggregate["pp"],
                 "true": aggregate["true"], "precision": aggregate["precision"], "recall": aggregate["recall"],
                 "f1": aggregate["mean_f1"], "ties": any(r.ties for r in reports), "flags": "aggregate"})
    return pd.DataFrame(rows)


def recall_by_sequence_length(reports: Iterable[DetectionReport]) -> pd.DataFrame:
    """
    Average recall as a function of the true sequence length.
    """
    rows = [{"length": length, "detected": int(detected)} for r in reports for length, detected in r.true_sequences]
    if not rows:
        return pd.DataFrame(columns=["length", "sequences", "recall"])
    frame = pd.DataFrame(rows).groupby("length")["detected"].agg(sequences="count", recall="mean").reset_index()
    return frame


def detect(selected, true: SequenceSet, estimator, min_len: int, bag_id: Optional[str] = None) -> DetectionReport:
    """
    Sequence detection from a boolean selection of instances.
    """
    return sequence_detection_report(true, extract_sequences(selected, min_len), estimator, bag_id=bag_id)


def min_length_sweep(cases: Dict[str, List[Tuple[np.ndarray, SequenceSet, np.ndarray]]],
                     lengths: Sequence[int] = SWEEP_LENGTHS) -> pd.DataFrame:
    """
    Mean exam-level f1 per estimator as a function of the minimal sequence length.
    :param cases: estimator name -> list of (selection flags, true sequences, estimator values);
        a None selection marks a bag predicted negative.
    :param lengths: Minimal lengths to evaluate.
    :return: Columns estimator, min_length, f1, mean_f1.
    """
    rows = []
    for name, items in cases.items():
        for length in lengths:
            reports = [detect(flags, true, values, length) if flags is not None else missed_report(true)
                       for flags, true, values in items]
            aggregate = aggregate_reports(reports)
            rows.append({"estimator": name, "min_length": length, "f1": aggregate["f1"],
                         "mean_f1": aggregate["mean_f1"]})
    return pd.DataFrame(rows)


def pixel_f1(mask, truth) -> float:
    """
    Pixel-level f1 = 2|mask & truth| / (|mask| + |truth|); 1 when both are empty.
    """
    mask = np.asarray(mask, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if mask.shape != truth.shape:
        raise DomainError(f"mask {mask.shape} and truth {truth.shape} differ in shape")
    total = int(mask.sum()) + int(truth.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(mask, truth).sum()) / total
