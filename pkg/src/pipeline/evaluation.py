"""
 Copyright Duel 2025
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.explain.attribution import AttributionResult, select_by_attention
from src.explain.saliency import SpatialExplainConfig, hshap_pixels, instance_batch_predictor
from src.explain.shapley import BagGame, hshap_instances
from src.metrics.detection import (DEFAULT_MIN_LENGTHS, DetectionReport, SequenceSet, aggregate_reports, detect,
                                   min_length_sweep, missed_report, pixel_f1)
from src.metrics.roc import RocCurve, ThresholdChoice, ThresholdCriterion, choose_threshold, roc_auc
from src.models.bag import Bag
from src.models.mil_model import MILNetwork
from src.models.model_params import LearnerKind, ModelParams
from src.synthdata.generator import SynthDataset
from src.utilities.errors import ConfigError

logger = logging.getLogger(__name__)

WEAK_ESTIMATORS = ("attention", "shapley")


@dataclass
class BagOutputs:
    """
    Everything a learner says about one bag.
    """
    probability: float
    instance_scores: np.ndarray
    attention: Optional[np.ndarray] = None
    shapley: Optional[AttributionResult] = None


@dataclass
class EvaluationResult:
    roc: RocCurve
    thresholds: Dict[str, ThresholdChoice]
    instance_threshold: Optional[ThresholdChoice]
    detection: Dict[str, Dict[str, List[DetectionReport]]] = field(default_factory=dict)
    sweep: Optional[pd.DataFrame] = None
    pixel_scores: List[dict] = field(default_factory=list)
    # "calibration" when thresholds come from a separate split; "evaluated" when chosen in-sample
    threshold_source: str = "evaluated"

    def summary(self) -> dict:
        summary = {
            "auc": self.roc.auc,
            "positives": self.roc.positives,
            "negatives": self.roc.negatives,
            "thresholds": {name: choice.as_dict() for name, choice in self.thresholds.items()},
            "instance_threshold": self.instance_threshold.as_dict() if self.instance_threshold else None,
            "threshold_source": self.threshold_source,
            "thresholds_optimistic": self.threshold_source == "evaluated",
            "detection": {criterion: {name: aggregate_reports(reports) for name, reports in per.items()}
                          for criterion, per in self.detection.items()},
        }
        if self.pixel_scores:
            values = [p["f1"] for p in self.pixel_scores]
            summary["pixel_f1"] = {"images": len(values), "median": float(np.median(values)),
                                   "mean": float(np.mean(values))}
        return summary


def default_estimators(kind: LearnerKind) -> List[str]:
    return ["strong"] if LearnerKind(kind) == LearnerKind.STRONG else list(WEAK_ESTIMATORS)


class Evaluator:
    """
    Scores a dataset with one learner and derives every evaluation artefact from those scores.
    """

    def __init__(self, params: ModelParams, estimators: Optional[Sequence[str]] = None, shapley_tolerance: float = 0.0):
        """
        Constructor
        :param params: The learner.
        :param estimators: Instance estimators to evaluate; defaults by learner kind.
        :param shapley_tolerance: Tolerance of the hierarchical Shapley recursion.
        """
        self.params = params
        self.network = MILNetwork(params)
        self.estimators = list(estimators or default_estimators(params.learner_kind))
        if params.learner_kind == LearnerKind.STRONG and set(self.estimators) & set(WEAK_ESTIMATORS):
            raise ConfigError(f"estimators {sorted(set(self.estimators) & set(WEAK_ESTIMATORS))} need a weak "
                              f"learner; the checkpoint holds a strong one")
        self.shapley_tolerance = shapley_tolerance

    def score_bag(self, bag: Bag, with_shapley: bool) -> BagOutputs:
        features, _ = self.network.encode(bag.stacked())
        instance_scores = np.asarray(self.network.classify(features), dtype=np.float64)
        if self.params.learner_kind == LearnerKind.STRONG:
            return BagOutputs(probability=float(instance_scores.max()), instance_scores=instance_scores)
        bag_feature, weights = self.network.pool(features)
        outputs = BagOutputs(probability=float(self.network.classify(bag_feature)), instance_scores=instance_scores,
                             attention=np.asarray(weights, dtype=np.float64))
        if with_shapley:
            game = BagGame(lambda idx: self.network.bag_probability_from_features(features[list(idx)]),
                           len(features))
            outputs.shapley = hshap_instances(None, bag, game=game, tolerance=self.shapley_tolerance)
        return outputs

    def score(self, dataset: SynthDataset) -> List[BagOutputs]:
        with_shapley = "shapley" in self.estimators
        return [self.score_bag(bag, with_shapley) for bag in dataset.bags]

    def bag_scores(self, dataset: SynthDataset) -> np.ndarray:
        return np.array([self.score_bag(bag, False).probability for bag in dataset.bags])

    def _selection(self, name: str, outputs: BagOutputs, instance_threshold: Optional[float]):
        """
        (selected flags, estimator values) of one estimator on one bag.
        """
        r = len(outputs.instance_scores)
        flags = np.zeros(r, dtype=bool)
        if name == "strong":
            flags[outputs.instance_scores >= instance_threshold] = True
            return flags, outputs.instance_scores
        values = outputs.attention if name == "attention" else np.asarray(outputs.shapley.scores)
        flags[select_by_attention(values)] = True
        return flags, values

    def evaluate(self, dataset: SynthDataset, criteria: Sequence[ThresholdCriterion] = (ThresholdCriterion.YOUDEN,),
                 min_lengths: Optional[Dict[str, int]] = None, sweep_lengths: bool = True,
                 pixel_images: int = 0, spatial: Optional[SpatialExplainConfig] = None,
                 calibration: Optional[SynthDataset] = None) -> EvaluationResult:
        """
        Bag ROC, thresholds, sequence detection per estimator and criterion, the minimal-length sweep
        and pixel f1 on image datasets.

        Detection is scored on every positive bag: bags predicted negative count as all-missed.
        :param dataset: Labelled dataset with ground truth.
        :param criteria: Threshold criteria for the bag decision.
        :param min_lengths: Minimal sequence length per estimator.
        :param sweep_lengths: Also evaluate minimal lengths 1..8.
        :param pixel_images: At most this many selected positive images get pixel attribution.
        :param spatial: Pixel attribution configuration.
        :param calibration: Split the bag and instance thresholds are chosen on. Without it they are
            chosen on the evaluated bags themselves and the summary marks them optimistic.
        :return: The result.
        """
        min_lengths = {**DEFAULT_MIN_LENGTHS, **(min_lengths or {})}
        outputs = self.score(dataset)
        labels = dataset.bag_labels
        roc = roc_auc([o.probability for o in outputs], labels)
        reference, reference_outputs, reference_roc = dataset, outputs, roc
        if calibration is not None:
            reference = calibration
            reference_outputs = [self.score_bag(bag, with_shapley=False) for bag in calibration.bags]
            reference_roc = roc_auc([o.probability for o in reference_outputs], calibration.bag_labels)
        thresholds = {ThresholdCriterion(c).value: choose_threshold(reference_roc, c) for c in criteria}

        instance_choice = None
        if "strong" in self.estimators:
            instance_labels = np.concatenate([truth.instance_labels for truth in reference.truth.bags])
            instance_scores = np.concatenate([o.instance_scores for o in reference_outputs])
            instance_choice = choose_threshold(roc_auc(instance_scores, instance_labels), ThresholdCriterion.YOUDEN)

        result = EvaluationResult(roc=roc, thresholds=thresholds, instance_threshold=instance_choice,
                                  threshold_source="evaluated" if calibration is None else "calibration")
        if calibration is None:
            logger.info("Thresholds chosen on the evaluated bags; detection scores are optimistic")
        positives = [i for i, label in enumerate(labels) if label == 1]
        t_s = instance_choice.threshold if instance_choice else None
        for criterion, choice in thresholds.items():
            per_estimator: Dict[str, List[DetectionReport]] = {}
            sweep_cases: Dict[str, list] = {}
            for name in self.estimators:
                reports, cases = [], []
                for i in positives:
                    truth = dataset.truth.bags[i]
                    true = SequenceSet.of(truth.sequences, len(truth.instance_labels))
                    if outputs[i].probability < choice.threshold:
                        reports.append(missed_report(true, bag_id=truth.id))
                        cases.append((None, true, None))
                        continue
                    flags, values = self._selection(name, outputs[i], t_s)
                    reports.append(detect(flags, true, values, min_lengths[name], bag_id=truth.id))
                    cases.append((flags, true, values))
                per_estimator[name] = reports
                sweep_cases[f"{name}"] = cases
            result.detection[criterion] = per_estimator
            if sweep_lengths:
                frame = min_length_sweep(sweep_cases)
                frame.insert(0, "criterion", criterion)
                result.sweep = frame if result.sweep is None else pd.concat([result.sweep, frame], ignore_index=True)

        if pixel_images and dataset.config.kind == "image":
            primary = next(iter(thresholds.values())).threshold
            result.pixel_scores = self._pixel_scores(dataset, outputs, primary, t_s, pixel_images, spatial)
        return result

    def _pixel_scores(self, dataset: SynthDataset, outputs: List[BagOutputs], bag_threshold: float,
                      instance_threshold: Optional[float], limit: int,
                      spatial: Optional[SpatialExplainConfig]) -> List[dict]:
        """
        Pixel f1 on true-positive images that the learner both predicts positive and selects.
        """
        spatial = spatial or SpatialExplainConfig()
        if spatial.baseline is None:
            spatial = spatial.model_copy(update={"baseline": mean_instance(dataset)})
        predictor = instance_batch_predictor(self.params)
        name = "strong" if "strong" in self.estimators else ("shapley" if "shapley" in self.estimators else "attention")
        scores = []
        for bag, truth, output in zip(dataset.bags, dataset.truth.bags, outputs):
            if len(scores) >= limit:
                break
            if bag.bag_label != 1 or output.probability < bag_threshold:
                continue
            flags, _ = self._selection(name, output, instance_threshold)
            for i in np.flatnonzero(flags):
                if len(scores) >= limit:
                    break
                if i not in truth.masks:
                    continue
                saliency = hshap_pixels(predictor, bag.instances[i].features, spatial)
                scores.append({"bag_id": bag.id, "instance": int(i), "f1": pixel_f1(saliency.mask, truth.masks[i])})
        if not scores:
            logger.info("No selected true-positive images to score at pixel level")
        return scores


def mean_instance(dataset: SynthDataset) -> np.ndarray:
    """
    Per-pixel (or per-feature) mean over every instance of a dataset.
    """
    total = sum(bag.stacked().sum(axis=0, dtype=np.float64) for bag in dataset.bags)
    return total / dataset.instance_count
