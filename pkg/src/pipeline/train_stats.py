"""
 Copyright Duel 2025
"""
from dataclasses import asdict, dataclass, field
from typing import List, Optional


@dataclass
class EpochMetrics:
    """
    One row of the per-epoch training log.
    """
    epoch: int
    learning_rate: float
    train_loss: float
    validation_loss: float
    validation_accuracy: float
    improved: bool
    seconds: float

    def as_row(self) -> dict:
        return asdict(self)


@dataclass
class TrainStats:
    """
    Simple stats for a single training run.
    """
    mode: str = ""
    labels_used: int = 0
    steps: int = 0
    epochs_run: int = 0
    best_epoch: Optional[int] = None
    best_validation_accuracy: float = float("-inf")
    stopped_early: bool = False
    history: List[EpochMetrics] = field(default_factory=list)
