"""
 Copyright Duel 2025
"""
import numpy as np
import pytest

from src.metrics.roc import ThresholdCriterion, choose_threshold, roc_auc
from src.models.model_params import EncoderSpec, LearnerKind, ModelParams
from src.models.train_config import TrainConfig
from src.pipeline.evaluation import Evaluator, default_estimators, mean_instance
from src.pipeline.trainer import MILTrainer
from src.synthdata.generator import SynthConfig, generate_bags, split_dataset
from src.utilities.errors import ConfigError

ARCHITECTURE = EncoderSpec.for_instances((8,), hidden=16, attention_hidden=8)


@pytest.fixture(scope="module")
def dataset():
    return generate_bags(SynthConfig(seed=6, bags=20, dimension=8, min_length=8, max_length=12))


@pytest.fixture(scope="module")
def weak_params():
    return ModelParams.initialise(ARCHITECTURE, LearnerKind.WEAK, seed=3, dtype=np.float64)


def test_weak_estimators_need_a_weak_learner():
    strong = ModelParams.initialise(ARCHITECTURE, LearnerKind.STRONG)
    with pytest.raises(ConfigError):
        Evaluator(strong, ["shapley"])
    assert Evaluator(strong).estimators == ["strong"]
    assert default_estimators(LearnerKind.WEAK) == ["attention", "shapley"]


def test_weak_bag_outputs(dataset, weak_params):
    outputs = Evaluator(weak_params).score_bag(dataset.bags[0], with_shapley=True)
    assert outputs.attention.sum() == pytest.approx(1.0)
    assert outputs.shapley.bag_id == dataset.bags[0].id
    assert outputs.shapley.full_value == pytest.approx(outputs.probability)
    assert len(outputs.instance_scores) == len(dataset.bags[0])


def test_weak_evaluation_structure(dataset, weak_params):
    result = Evaluator(weak_params).evaluate(dataset, criteria=(ThresholdCriterion.YOUDEN, ThresholdCriterion.DISTANCE))
    assert set(result.detection) == {"youden", "distance"}
    positives = dataset.positive_count
    for per_estimator in result.detection.values():
        assert set(per_estimator) == {"attention", "shapley"}
        assert all(len(reports) == positives for reports in per_estimator.values())
    assert len(result.sweep) == 2 * 2 * 8
    assert set(result.sweep["criterion"]) == {"youden", "distance"}
    summary = result.summary()
    assert 0.0 <= summary["auc"] <= 1.0
    assert summary["instance_threshold"] is None
    assert summary["positives"] + summary["negatives"] == len(dataset)


def test_bags_below_threshold_count_as_missed(dataset):
    params = ModelParams.initialise(ARCHITECTURE, LearnerKind.WEAK, seed=3)
    result = Evaluator(params, ["attention"]).evaluate(dataset, sweep_lengths=False)
    threshold = result.thresholds["youden"].threshold
    scores = Evaluator(params, ["attention"]).bag_scores(dataset)
    missed = [r for r in result.detection["youden"]["attention"] if "predicted_negative" in r.flags]
    positives_below = sum(1 for s, y in zip(scores, dataset.bag_labels) if y == 1 and s < threshold)
    assert len(missed) == positives_below
    assert result.sweep is None


def test_strong_evaluation_uses_an_instance_threshold(dataset):
    params = ModelParams.initialise(ARCHITECTURE, LearnerKind.STRONG, seed=2)
    result = Evaluator(params).evaluate(dataset, sweep_lengths=False)
    assert result.instance_threshold is not None
    assert set(result.detection["youden"]) == {"strong"}
    scores = Evaluator(params).bag_scores(dataset)
    for bag, score in zip(dataset.bags, scores):
        assert score == pytest.approx(Evaluator(params).score_bag(bag, False).instance_scores.max())


def test_thresholds_come_from_the_calibration_split(dataset):
    calibration, held_out = split_dataset(dataset, 0.5, np.random.default_rng(0))
    params = ModelParams.initialise(ARCHITECTURE, LearnerKind.STRONG, seed=2)
    evaluator = Evaluator(params)
    result = evaluator.evaluate(held_out, sweep_lengths=False, calibration=calibration)

    outputs = [evaluator.score_bag(bag, False) for bag in calibration.bags]
    bag_choice = choose_threshold(roc_auc([o.probability for o in outputs], calibration.bag_labels))
    instance_labels = np.concatenate([t.instance_labels for t in calibration.truth.bags])
    instance_choice = choose_threshold(roc_auc(np.concatenate([o.instance_scores for o in outputs]),
                                               instance_labels))
    assert result.thresholds["youden"].threshold == bag_choice.threshold
    assert result.instance_threshold.threshold == instance_choice.threshold
    assert result.roc.auc == pytest.approx(roc_auc(evaluator.bag_scores(held_out), held_out.bag_labels).auc)
    summary = result.summary()
    assert summary["threshold_source"] == "calibration"
    assert not summary["thresholds_optimistic"]


def test_in_sample_thresholds_are_flagged(dataset):
    params = ModelParams.initialise(ARCHITECTURE, LearnerKind.STRONG, seed=2)
    summary = Evaluator(params).evaluate(dataset, sweep_lengths=False).summary()
    assert summary["threshold_source"] == "evaluated"
    assert summary["thresholds_optimistic"]


def test_pixel_scores_on_images():
    images = generate_bags(SynthConfig(seed=1, bags=6, kind="image", image_side=8, min_length=3, max_length=5,
                                       positive_rate=0.5))
    params = ModelParams.initialise(EncoderSpec.for_instances((8, 8), channels=(2, 2)), LearnerKind.WEAK,
                                    zero_classifier=True)
    result = Evaluator(params, ["attention"]).evaluate(images, sweep_lengths=False, pixel_images=2)
    assert len(result.pixel_scores) <= 2
    assert all(0.0 <= row["f1"] <= 1.0 for row in result.pixel_scores)


def test_mean_instance(dataset):
    everything = np.concatenate([bag.stacked() for bag in dataset.bags])
    assert np.allclose(mean_instance(dataset), everything.mean(axis=0))


@pytest.mark.slow
def test_trained_weak_learner_finds_the_blobs():
    images = generate_bags(SynthConfig(seed=2, bags=400, kind="image", image_side=16, min_length=10, max_length=20))
    train_set, held_out = split_dataset(images, 0.2, np.random.default_rng(2))
    params = ModelParams.initialise(EncoderSpec.for_instances(images.config.instance_shape), LearnerKind.WEAK, seed=2)
    trained = MILTrainer(TrainConfig.for_mode(LearnerKind.WEAK, patience=3), LearnerKind.WEAK).train(
        params, train_set.bags).best
    summary = Evaluator(trained, ["attention"]).evaluate(held_out, sweep_lengths=False, pixel_images=20,
                                                         calibration=train_set).summary()
    assert summary["pixel_f1"]["images"] > 0
    assert summary["pixel_f1"]["median"] >= 0.4
