"""
 Copyright Duel 2025
"""
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from src.models.model_params import LearnerKind
from src.nn.optim import OptimizerKind

# stop once validation accuracy has not improved for more than this many epochs
DEFAULT_PATIENCE = 3


class TrainConfig(BaseModel):
    """
    Training hyper-parameters shared by both learners.
    """
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=15, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    decay_factor: float = Field(default=0.3, gt=0, le=1)
    decay_period: int = Field(default=3, ge=1)
    batch_size: int = Field(default=64, ge=1)
    # None trains for the full epoch budget
    patience: Optional[int] = Field(default=DEFAULT_PATIENCE, ge=0)
    seed: int = 0
    alpha: float = Field(default=0.25, gt=0, le=1)
    gamma: float = Field(default=2.0, ge=0)
    optimizer: OptimizerKind = OptimizerKind.ADAM
    weight_decay: float = Field(default=1e-7, ge=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    feature_dropout: float = Field(default=0.50, ge=0, lt=1)
    attention_dropout: float = Field(default=0.25, ge=0, lt=1)
    # Weak learners: subsample between subsample_min_k and r instances per bag each step
    subsample_min_k: Optional[int] = Field(default=10, ge=1)
    # Strong learners: additive Gaussian noise on every training instance
    noise_std: float = Field(default=0.0, ge=0)
    validation_fraction: float = Field(default=0.1, ge=0, lt=1)

    @classmethod
    def for_mode(cls, mode: LearnerKind, **overrides) -> "TrainConfig":
        """
        Desk-scale defaults per learner. Optimiser family, weight decay, batch size, dropout and
        schedule follow the published recipe; learning rates are raised because the encoder
        is trained from scratch.
        """
        if LearnerKind(mode) == LearnerKind.STRONG:
            base = dict(optimizer=OptimizerKind.ADAM, learning_rate=1e-3, weight_decay=1e-7, batch_size=64,
                        subsample_min_k=None)
        else:
            base = dict(optimizer=OptimizerKind.SGD, learning_rate=5e-3, weight_decay=1e-4, batch_size=1,
                        momentum=0.9, subsample_min_k=10)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def published(cls, mode: LearnerKind, **overrides) -> "TrainConfig":
        """
        The exact published constants (pretrained-encoder regime).
        """
        if LearnerKind(mode) == LearnerKind.STRONG:
            base = dict(optimizer=OptimizerKind.ADAM, learning_rate=1e-5, weight_decay=1e-7, batch_size=64,
                        subsample_min_k=None)
        else:
            base = dict(optimizer=OptimizerKind.SGD, learning_rate=1e-3, weight_decay=1e-4, batch_size=1,
                        momentum=0.9, subsample_min_k=10)
        base.update(overrides)
        return cls(**base)
