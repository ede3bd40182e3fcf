"""
 Copyright Duel 2025
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.models.bag import Bag, Instance
from src.models.model_params import LearnerKind, ModelParams
from src.nn import layers
from src.nn.functional import focal_loss, focal_loss_grad, sigmoid, sigmoid_backward, sparsemax, sparsemax_backward
from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)

FEATURE_DROPOUT = 0.50
ATTENTION_DROPOUT = 0.25


@dataclass
class LossSettings:
    """
    Focal loss constants and dropout rates used by the training objectives.
    """
    alpha: float = 0.25
    gamma: float = 2.0
    feature_dropout: float = FEATURE_DROPOUT
    attention_dropout: float = ATTENTION_DROPOUT


class MILNetwork:
    """
    The strong learner h(x) = g(f(x)) and the weak learner H(X) = g(a([f(x1) ... f(xr)]))
    over one shared ModelParams record.

    The network reads the parameter arrays it is given and never copies them, so an optimizer
    updating ``params.tensors`` in place is immediately visible here.
    """

    def __init__(self, params: ModelParams):
        """
        Constructor
        :param params: The weights to evaluate.
        """
        self.params = params
        self.t = params.tensors
        self.spec = params.architecture

    # Encoder f

    def _as_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.params.dtype)
        expected = tuple(self.spec.input_shape)
        if x.shape[1:] != expected:
            raise DomainError(f"instances have shape {x.shape[1:]}, the encoder expects {expected}")
        return x

    def encode(self, x: np.ndarray) -> Tuple[np.ndarray, list]:
        """
        Encode a batch of instances into 256-dimensional features.
        :param x: Array of shape (n, *input_shape).
        :return: Features of shape (n, 256) and the backward cache.
        """
        x = self._as_batch(x)
        caches = []
        t = self.t
        if self.spec.kind == "dense":
            h, c = layers.dense_forward(x, t["encoder.fc1.weight"], t["encoder.fc1.bias"])
            caches.append(c)
            h, c = layers.relu_forward(h)
            caches.append(c)
            h, c = layers.dense_forward(h, t["encoder.fc2.weight"], t["encoder.fc2.bias"])
            caches.append(c)
            h, c = layers.relu_forward(h)
            caches.append(c)
            return h, caches

        h = x[:, None, :, :]
        for stage in ("conv1", "conv2"):
            h, c = layers.conv2d_forward(h, t[f"encoder.{stage}.weight"], t[f"encoder.{stage}.bias"])
            caches.append(c)
            h, c = layers.relu_forward(h)
            caches.append(c)
            h, c = layers.maxpool2_forward(h)
            caches.append(c)
        caches.append(h.shape)
        h = h.reshape(h.shape[0], -1)
        h, c = layers.dense_forward(h, t["encoder.fc.weight"], t["encoder.fc.bias"])
        caches.append(c)
        h, c = layers.relu_forward(h)
        caches.append(c)
        return h, caches

    def encode_backward(self, grad: np.ndarray, caches: list) -> Dict[str, np.ndarray]:
        grads: Dict[str, np.ndarray] = {}
        if self.spec.kind == "dense":
            g = layers.relu_backward(grad, caches[3])
            g, grads["encoder.fc2.weight"], grads["encoder.fc2.bias"] = layers.dense_backward(g, caches[2])
            g = layers.relu_backward(g, caches[1])
            _, grads["encoder.fc1.weight"], grads["encoder.fc1.bias"] = layers.dense_backward(g, caches[0])
            return grads

        g = layers.relu_backward(grad, caches[8])
        g, grads["encoder.fc.weight"], grads["encoder.fc.bias"] = layers.dense_backward(g, caches[7])
        g = g.reshape(caches[6])
        for offset, stage in ((3, "conv2"), (0, "conv1")):
            g = layers.maxpool2_backward(g, caches[offset + 2])
            g = layers.relu_backward(g, caches[offset + 1])
            g, grads[f"encoder.{stage}.weight"], grads[f"encoder.{stage}.bias"] = layers.conv2d_backward(
                g, caches[offset])
        return grads

    # Classifier g

    def classify_logit(self, features: np.ndarray) -> np.ndarray:
        """
        Logit of g for one feature vector (256,) or a batch (n, 256).
        """
        return features @ self.t["classifier.weight"][:, 0] + self.t["classifier.bias"][0]

    def classify(self, features: np.ndarray):
        return sigmoid(self.classify_logit(features))

    # Attention a

    def attention_scores(self, features: np.ndarray, training: bool = False,
                         rng: Optional[np.random.Generator] = None, dropout: float = 0.0):
        t = self.t
        pre, c_hidden = layers.dense_forward(features, t["attention.hidden.weight"], t["attention.hidden.bias"])
        act, c_tanh = layers.tanh_forward(pre)
        act, c_drop = layers.dropout_forward(act, dropout, training, rng)
        scores, c_score = layers.dense_forward(act, t["attention.score.weight"], t["attention.score.bias"])
        return scores[:, 0], (c_hidden, c_tanh, c_drop, c_score)

    def attention_backward(self, grad_scores: np.ndarray, cache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        c_hidden, c_tanh, c_drop, c_score = cache
        grads: Dict[str, np.ndarray] = {}
        g, grads["attention.score.weight"], grads["attention.score.bias"] = layers.dense_backward(
            grad_scores[:, None], c_score)
        g = layers.dropout_backward(g, c_drop)
        g = layers.tanh_backward(g, c_tanh)
        g, grads["attention.hidden.weight"], grads["attention.hidden.bias"] = layers.dense_backward(g, c_hidden)
        return g, grads

    def pool(self, features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Sparsemax attention pooling of instance features.
        :param features: Array (r, 256), r >= 1.
        :return: (bag feature (256,), attention weights (r,))
        """
        if features.shape[0] == 0:
            raise DomainError("cannot pool an empty bag")
        if features.shape[0] == 1:
            return features[0], np.ones(1, dtype=features.dtype)
        scores, _ = self.attention_scores(features)
        weights = sparsemax(scores)
        return weights @ features, weights

    def bag_probability_from_features(self, features: np.ndarray) -> float:
        """
        H on pre-computed instance features. The empty bag maps to g(0).
        """
        if features.shape[0] == 0:
            return float(self.classify(np.zeros(self.spec.feature_dim, dtype=self.params.dtype)))
        bag_feature, _ = self.pool(features)
        return float(self.classify(bag_feature))

    # Predictions

    def predict_instances(self, x: np.ndarray) -> np.ndarray:
        features, _ = self.encode(x)
        return self.classify(features)

    def predict_instance(self, x: np.ndarray) -> float:
        features, _ = self.encode(np.asarray(x)[None])
        return float(self.classify(features[0]))

    def predict_bag(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        if len(x) == 0:
            raise DomainError("cannot predict on an empty bag")
        features, _ = self.encode(x)
        bag_feature, weights = self.pool(features)
        return float(self.classify(bag_feature)), weights

    def predict_bag_strong(self, x: np.ndarray) -> float:
        if len(x) == 0:
            raise DomainError("cannot predict on an empty bag")
        return float(np.max(self.predict_instances(x)))

    # Training objectives

    def strong_loss_and_grads(self, x: np.ndarray, y: np.ndarray, settings: LossSettings,
                              rng: Optional[np.random.Generator], training: bool = True):
        """
        Mean focal loss over a batch of labelled instances and its gradients.
        :param x: Instances (n, *input_shape).
        :param y: Instance labels (n,).
        :param settings: Loss constants and dropout rates.
        :param rng: Stream for dropout masks.
        :param training: Apply dropout.
        :return: (loss, gradients keyed by tensor name, probabilities)
        """
        features, enc_cache = self.encode(x)
        dropped, drop_cache = layers.dropout_forward(features, settings.feature_dropout, training, rng)
        logits = self.classify_logit(dropped)
        probabilities = sigmoid(logits)
        n = len(y)
        loss = float(np.mean(focal_loss(probabilities, y, settings.alpha, settings.gamma)))

        d_prob = focal_loss_grad(probabilities, y, settings.alpha, settings.gamma) / n
        d_logit = sigmoid_backward(logits, probabilities, d_prob).astype(features.dtype)
        grads = {
            "classifier.weight": (dropped.T @ d_logit)[:, None],
            "classifier.bias": np.array([d_logit.sum()], dtype=features.dtype),
        }
        d_features = np.outer(d_logit, self.t["classifier.weight"][:, 0])
        d_features = layers.dropout_backward(d_features, drop_cache)
        grads.update(self.encode_backward(d_features, enc_cache))
        return loss, grads, probabilities

    def weak_loss_and_grads(self, x: np.ndarray, bag_label: int, settings: LossSettings,
                            rng: Optional[np.random.Generator], training: bool = True):
        """
        Focal loss of one bag and its gradients.
        :param x: Instances of the bag (r, *input_shape).
        :param bag_label: Bag label Y.
        :param settings: Loss constants and dropout rates.
        :param rng: Stream for dropout masks.
        :param training: Apply dropout.
        :return: (loss, gradients keyed by tensor name, probability)
        """
        features, enc_cache = self.encode(x)
        scores, att_cache = self.attention_scores(features, training, rng, settings.attention_dropout)
        weights = sparsemax(scores)
        bag_feature = weights @ features
        dropped, drop_cache = layers.dropout_forward(bag_feature, settings.feature_dropout, training, rng)
        logit = self.classify_logit(dropped)
        probability = sigmoid(logit)
        y = np.asarray(bag_label)
        loss = float(focal_loss(probability, y, settings.alpha, settings.gamma))

        d_prob = focal_loss_grad(probability, y, settings.alpha, settings.gamma)
        d_logit = float(sigmoid_backward(logit, probability, d_prob))
        dtype = features.dtype
        grads = {
            "classifier.weight": (dropped * d_logit)[:, None].astype(dtype),
            "classifier.bias": np.array([d_logit], dtype=dtype),
        }
        d_bag = layers.dropout_backward(d_logit * self.t["classifier.weight"][:, 0], drop_cache)
        d_weights = features @ d_bag
        d_features = np.outer(weights, d_bag)
        d_scores = sparsemax_backward(scores, d_weights)
        d_feat_att, att_grads = self.attention_backward(d_scores.astype(dtype), att_cache)
        grads.update(att_grads)
        grads.update(self.encode_backward((d_features + d_feat_att).astype(dtype), enc_cache))
        return loss, grads, float(probability)


# Functional front end

def _features(x) -> np.ndarray:
    if isinstance(x, Instance):
        return x.features
    return np.asarray(x)


def _bag_features(bag) -> np.ndarray:
    if isinstance(bag, Bag):
        return bag.stacked()
    return np.asarray(bag)


def predict_instance(params: ModelParams, x) -> float:
    """
    g(f(x)) for one instance; valid for both learner kinds.
    """
    return MILNetwork(params).predict_instance(_features(x))


def predict_bag(params: ModelParams, bag) -> Tuple[float, np.ndarray]:
    """
    Weak-learner bag probability and its sparsemax attention weights.
    """
    if params.learner_kind != LearnerKind.WEAK:
        raise DomainError("predict_bag needs a weak learner; use predict_bag_strong for strong learners")
    return MILNetwork(params).predict_bag(_bag_features(bag))


def predict_bag_strong(params: ModelParams, bag) -> float:
    """
    Max-pooled strong-learner bag probability.
    """
    if params.learner_kind != LearnerKind.STRONG:
        raise DomainError("predict_bag_strong needs a strong learner")
    return MILNetwork(params).predict_bag_strong(_bag_features(bag))


def predict_bag_any(params: ModelParams, bag) -> float:
    """
    Bag probability with the pooling that matches the learner kind.
    """
    if params.learner_kind == LearnerKind.WEAK:
        return predict_bag(params, bag)[0]
    return predict_bag_strong(params, bag)
