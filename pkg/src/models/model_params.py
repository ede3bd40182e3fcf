"""
 Copyright Duel 2025
"""
import logging
from enum import Enum
from typing import Dict, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.nn.layers import he_uniform
from src.utilities.errors import CheckpointError

logger = logging.getLogger(__name__)

FEATURE_DIM = 256
ENCODER_PREFIX = "encoder."
ATTENTION_PREFIX = "attention."
CLASSIFIER_PREFIX = "classifier."


class LearnerKind(str, Enum):
    STRONG = "strong"
    WEAK = "weak"


class EncoderSpec(BaseModel):
    """
    Architecture of the instance encoder f and the attention width.

    Vector instances go through two dense layers; 2-D instances through two conv+pool
    stages followed by one dense layer. Both end in a 256-dimensional feature.
    """
    model_config = ConfigDict(extra="forbid")

    kind: Literal["dense", "conv"] = "dense"
    input_shape: Tuple[int, ...]
    hidden: int = Field(default=128, ge=1)
    channels: Tuple[int, int] = (8, 16)
    kernel: int = 3
    feature_dim: int = FEATURE_DIM
    attention_hidden: int = Field(default=128, ge=1)

    @field_validator("input_shape")
    @classmethod
    def validate_input_shape(cls, value):
        if len(value) not in (1, 2) or any(v < 1 for v in value):
            raise ValueError(f"input shape must be (d,) or (h, w), got {value}")
        return tuple(value)

    @field_validator("feature_dim")
    @classmethod
    def validate_feature_dim(cls, value):
        if value != FEATURE_DIM:
            raise ValueError(f"the encoder output is fixed at {FEATURE_DIM} features")
        return value

    @model_validator(mode="after")
    def validate_kind_matches_shape(self):
        if self.kind == "dense" and len(self.input_shape) != 1:
            raise ValueError("dense encoders take vector instances")
        if self.kind == "conv":
            if len(self.input_shape) != 2 or any(v % 4 for v in self.input_shape):
                raise ValueError(f"conv encoders take 2-D instances with sides divisible by 4, got {self.input_shape}")
            if self.kernel % 2 == 0:
                raise ValueError("conv kernel size must be odd")
        return self

    @classmethod
    def for_instances(cls, instance_shape: Tuple[int, ...], **overrides) -> "EncoderSpec":
        kind = "dense" if len(instance_shape) == 1 else "conv"
        return cls(kind=kind, input_shape=tuple(instance_shape), **overrides)

    def tensor_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """
        :return: Name -> shape of every tensor of the encoder, attention and classifier.
        """
        shapes: Dict[str, Tuple[int, ...]] = {}
        if self.kind == "dense":
            d = self.input_shape[0]
            shapes["encoder.fc1.weight"] = (d, self.hidden)
            shapes["encoder.fc1.bias"] = (self.hidden,)
            shapes["encoder.fc2.weight"] = (self.hidden, self.feature_dim)
            shapes["encoder.fc2.bias"] = (self.feature_dim,)
        else:
            h, w = self.input_shape
            c1, c2 = self.channels
            shapes["encoder.conv1.weight"] = (c1, 1, self.kernel, self.kernel)
            shapes["encoder.conv1.bias"] = (c1,)
            shapes["encoder.conv2.weight"] = (c2, c1, self.kernel, self.kernel)
            shapes["encoder.conv2.bias"] = (c2,)
            shapes["encoder.fc.weight"] = (c2 * (h // 4) * (w // 4), self.feature_dim)
            shapes["encoder.fc.bias"] = (self.feature_dim,)
        shapes["attention.hidden.weight"] = (self.feature_dim, self.attention_hidden)
        shapes["attention.hidden.bias"] = (self.attention_hidden,)
        shapes["attention.score.weight"] = (self.attention_hidden, 1)
        shapes["attention.score.bias"] = (1,)
        shapes["classifier.weight"] = (self.feature_dim, 1)
        shapes["classifier.bias"] = (1,)
        return shapes

    @classmethod
    def infer(cls, tensors: Dict[str, np.ndarray]) -> "EncoderSpec":
        """
        Recover the architecture from tensor shapes (checkpoints carry no architecture record).
        Conv encoders are assumed to take square instances.
        """
        attention = tensors.get("attention.hidden.weight")
        attention_hidden = attention.shape[1] if attention is not None else 128
        if "encoder.fc1.weight" in tensors:
            d, hidden = tensors["encoder.fc1.weight"].shape
            return cls(kind="dense", input_shape=(d,), hidden=hidden, attention_hidden=attention_hidden)
        if "encoder.conv1.weight" in tensors and "encoder.conv2.weight" in tensors and "encoder.fc.weight" in tensors:
            c1, _, k, _ = tensors["encoder.conv1.weight"].shape
            c2 = tensors["encoder.conv2.weight"].shape[0]
            cells = tensors["encoder.fc.weight"].shape[0] // c2
            side = int(round(np.sqrt(cells))) * 4
            return cls(kind="conv", input_shape=(side, side), channels=(c1, c2), kernel=k,
                       attention_hidden=attention_hidden)
        raise CheckpointError("cannot infer encoder architecture: no encoder tensors found")


def _fan_in(name: str, shape: Tuple[int, ...]) -> int:
    if len(shape) == 4:
        return shape[1] * shape[2] * shape[3]
    return shape[0]


class ModelParams(BaseModel):
    """
    Every weight of the encoder f, the attention a and the classifier g.

    Strong and weak learners share the same record; strong learners simply never read the
    attention tensors.
    """
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    learner_kind: LearnerKind
    architecture: EncoderSpec
    tensors: Dict[str, np.ndarray]

    @classmethod
    def initialise(cls, architecture: EncoderSpec, learner_kind: LearnerKind, seed: int = 0,
                   dtype=np.float32, zero_classifier: bool = False) -> "ModelParams":
        """
        He-style uniform fan-in initialisation, seeded deterministically. Biases start at zero.
        :param architecture: Encoder/attention architecture.
        :param learner_kind: strong or weak.
        :param seed: Seed of the initialisation stream.
        :param dtype: float32 for training, float64 for verification.
        :param zero_classifier: Start g at zero, so every prediction is exactly 0.5.
        :return: The new parameters.
        """
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in architecture.tensor_shapes().items():
            if name.endswith(".bias") or (zero_classifier and name.startswith(CLASSIFIER_PREFIX)):
                tensors[name] = np.zeros(shape, dtype=dtype)
                continue
            # ReLU layers get the He gain, tanh/linear outputs the unit gain
            gain = 2.0 if name.startswith(ENCODER_PREFIX) else 1.0
            tensors[name] = he_uniform(rng, _fan_in(name, shape), shape, gain=gain, dtype=dtype)
        return cls(learner_kind=LearnerKind(learner_kind), architecture=architecture, tensors=tensors)

    def fresh_attention(self, seed: int = 0) -> Dict[str, np.ndarray]:
        """
        Newly initialised attention tensors for this architecture (used when a strong
        checkpoint is promoted to a weak learner).
        """
        fresh = ModelParams.initialise(self.architecture, LearnerKind.WEAK, seed=seed, dtype=self.dtype)
        return {k: v for k, v in fresh.tensors.items() if k.startswith(ATTENTION_PREFIX)}

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    @property
    def encoder(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if k.startswith(ENCODER_PREFIX)}

    @property
    def attention(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if k.startswith(ATTENTION_PREFIX)}

    @property
    def classifier(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if k.startswith(CLASSIFIER_PREFIX)}

    def trainable(self) -> Dict[str, np.ndarray]:
        """
        Tensors the learner actually uses: strong learners exclude attention.
        """
        if self.learner_kind == LearnerKind.STRONG:
            return {k: v for k, v in self.tensors.items() if not k.startswith(ATTENTION_PREFIX)}
        return dict(self.tensors)

    def copy(self, dtype=None, learner_kind: Optional[LearnerKind] = None) -> "ModelParams":
        """
        Deep copy, optionally casting every tensor and/or switching the learner kind.
        """
        tensors = {k: np.array(v, dtype=dtype or v.dtype, copy=True) for k, v in self.tensors.items()}
        return ModelParams(learner_kind=learner_kind or self.learner_kind, architecture=self.architecture,
                           tensors=tensors)
