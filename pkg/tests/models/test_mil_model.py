"""
 Copyright Duel 2025
"""
import numpy as np
import pytest

from src.models.bag import Bag
from src.models.mil_model import (LossSettings, MILNetwork, predict_bag, predict_bag_any, predict_bag_strong,
                                  predict_instance)
from src.models.model_params import EncoderSpec, LearnerKind, ModelParams
from src.nn import layers
from src.utilities.errors import CheckpointError, DomainError


@pytest.fixture
def dense_spec():
    return EncoderSpec.for_instances((8,), hidden=16, attention_hidden=8)


@pytest.fixture
def weak_params(dense_spec):
    return ModelParams.initialise(dense_spec, LearnerKind.WEAK, seed=5)


def test_single_instance_bag_matches_instance_prediction(weak_params):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        x = rng.normal(size=8).astype(np.float32) * 3
        probability, weights = predict_bag(weak_params, x[None])
        assert probability == predict_instance(weak_params, x)
        assert weights.tolist() == [1.0]


def test_single_instance_equivalence_conv():
    params = ModelParams.initialise(EncoderSpec.for_instances((8, 8), channels=(2, 3)), LearnerKind.WEAK, seed=1)
    x = np.random.default_rng(1).normal(size=(8, 8)).astype(np.float32)
    assert predict_bag(params, x[None])[0] == predict_instance(params, x)


def test_attention_weights_are_sparse_probabilities(weak_params):
    bag = np.random.default_rng(2).normal(size=(12, 8))
    _, weights = predict_bag(weak_params, bag)
    assert weights.sum() == pytest.approx(1.0, abs=1e-6)
    assert np.all(weights >= 0)


def test_zero_classifier_predicts_one_half(dense_spec):
    params = ModelParams.initialise(dense_spec, LearnerKind.WEAK, zero_classifier=True)
    bag = np.random.default_rng(3).normal(size=(4, 8))
    assert predict_bag(params, bag)[0] == 0.5
    assert predict_instance(params, bag[0]) == 0.5


def test_strong_bag_prediction_is_max_of_instances(dense_spec):
    params = ModelParams.initialise(dense_spec, LearnerKind.STRONG, seed=9)
    bag = Bag.from_arrays("b", np.random.default_rng(4).normal(size=(5, 8)), bag_label=0)
    expected = max(predict_instance(params, x) for x in bag.stacked())
    assert predict_bag_strong(params, bag) == pytest.approx(expected)
    assert predict_bag_any(params, bag) == pytest.approx(expected)


def test_learner_kind_guards(dense_spec, weak_params):
    strong = ModelParams.initialise(dense_spec, LearnerKind.STRONG)
    bag = np.zeros((2, 8))
    with pytest.raises(DomainError):
        predict_bag(strong, bag)
    with pytest.raises(DomainError):
        predict_bag_strong(weak_params, bag)


def test_empty_bag_is_refused(weak_params):
    with pytest.raises(DomainError):
        predict_bag(weak_params, np.zeros((0, 8)))


def test_empty_bag_value_is_classifier_at_zero(weak_params):
    network = MILNetwork(weak_params)
    expected = float(network.classify(np.zeros(256, dtype=np.float32)))
    assert network.bag_probability_from_features(np.zeros((0, 256))) == expected


def test_wrong_instance_shape_is_refused(weak_params):
    with pytest.raises(DomainError, match="shape"):
        predict_instance(weak_params, np.zeros(5))


def test_initialisation_is_seeded(dense_spec):
    a = ModelParams.initialise(dense_spec, LearnerKind.WEAK, seed=3)
    b = ModelParams.initialise(dense_spec, LearnerKind.WEAK, seed=3)
    assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)


def test_strong_learner_does_not_train_attention(dense_spec):
    strong = ModelParams.initialise(dense_spec, LearnerKind.STRONG)
    assert not any(name.startswith("attention.") for name in strong.trainable())
    assert set(strong.trainable()) | set(strong.attention) == set(strong.tensors)


def test_architecture_is_recovered_from_tensors(dense_spec, weak_params):
    assert EncoderSpec.infer(weak_params.tensors) == dense_spec
    conv = EncoderSpec.for_instances((12, 12), channels=(4, 6))
    assert EncoderSpec.infer(ModelParams.initialise(conv, LearnerKind.STRONG).tensors) == conv
    with pytest.raises(CheckpointError):
        EncoderSpec.infer({})


def test_conv_encoder_needs_sides_divisible_by_four():
    with pytest.raises(ValueError):
        EncoderSpec.for_instances((10, 10))


def test_bag_prediction_ignores_instance_order(weak_params):
    rng = np.random.default_rng(11)
    for _ in range(100):
        bag = rng.normal(size=(int(rng.integers(2, 20)), 8)).astype(np.float32)
        probability, weights = predict_bag(weak_params, bag)
        for _ in range(100):
            order = rng.permutation(len(bag))
            shuffled, shuffled_weights = predict_bag(weak_params, bag[order])
            assert abs(shuffled - probability) <= 1e-6
            assert np.allclose(shuffled_weights, weights[order], atol=1e-6)


def test_identical_instances_share_attention(weak_params):
    x = np.random.default_rng(12).normal(size=8).astype(np.float32)
    _, weights = predict_bag(weak_params, np.stack([x, x]))
    assert weights.tolist() == pytest.approx([0.5, 0.5], abs=1e-7)


def test_strong_bag_score_never_drops_when_an_instance_is_added(dense_spec):
    params = ModelParams.initialise(dense_spec, LearnerKind.STRONG, seed=6, dtype=np.float64)
    rng = np.random.default_rng(13)
    for _ in range(100):
        bag = rng.normal(size=(int(rng.integers(1, 15)), 8))
        extended = np.concatenate([bag, rng.normal(size=(1, 8))])
        assert predict_bag_strong(params, extended) >= predict_bag_strong(params, bag) - 1e-12


def test_default_dropout_rates():
    settings = LossSettings()
    assert settings.feature_dropout == 0.5
    assert settings.attention_dropout == 0.25


@pytest.mark.parametrize("mode, expected", [(LearnerKind.WEAK, [0.25, 0.5]), (LearnerKind.STRONG, [0.5])])
def test_training_objectives_apply_dropout(dense_spec, monkeypatch, mode, expected):
    rates = []
    original = layers.dropout_forward

    def recording(x, rate, training, rng):
        rates.append(rate)
        return original(x, rate, training, rng)

    monkeypatch.setattr(layers, "dropout_forward", recording)
    network = MILNetwork(ModelParams.initialise(dense_spec, mode, seed=7))
    rng = np.random.default_rng(14)
    bag = rng.normal(size=(6, 8)).astype(np.float32)
    if mode == LearnerKind.WEAK:
        network.weak_loss_and_grads(bag, 1, LossSettings(), rng)
    else:
        network.strong_loss_and_grads(bag, np.array([0, 1, 0, 0, 1, 0]), LossSettings(), rng)
    assert rates == expected
