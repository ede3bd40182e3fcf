"""
 Copyright Duel 2025
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.model_params import LearnerKind

PUBLISHED_BUDGETS = [12, 24, 40, 52, 64, 80, 100, 152, 200, 252, 520, 796, 1000, 10_000, 17_000]
DESK_BUDGETS = [12, 24, 52, 100, 252, 520, 1000]


def published_repetitions(budget: int) -> int:
    """
    Repetitions per label budget used by the label-complexity protocol.
    """
    if budget <= 252:
        return 20
    if budget <= 520:
        return 15
    if budget <= 1000:
        return 10
    if budget < 17_000:
        return 6
    return 1


class SweepPlan(BaseModel):
    """
    Label budgets, repetitions and learners of a label-complexity sweep.
    Budgets count instances for strong learners and bags for weak learners.
    """
    model_config = ConfigDict(extra="forbid")

    budgets: List[int] = Field(default_factory=lambda: list(DESK_BUDGETS))
    repetitions: int = Field(default=5, ge=1)
    modes: List[LearnerKind] = Field(default_factory=lambda: [LearnerKind.STRONG, LearnerKind.WEAK])
    eval_size: int = Field(default=1000, ge=2)
    published_schedule: bool = False
    # per-budget repetition counts, overriding both the flat count and the published schedule
    schedule: Optional[Dict[int, int]] = None

    @field_validator("budgets")
    @classmethod
    def validate_budgets(cls, value):
        if not value:
            raise ValueError("a sweep needs at least one label budget")
        if any(b < 1 for b in value):
            raise ValueError(f"label budgets must be positive, got {value}")
        if list(value) != sorted(set(value)):
            raise ValueError(f"label budgets must be strictly ascending, got {value}")
        return value

    @field_validator("schedule")
    @classmethod
    def validate_schedule(cls, value):
        if value is not None and any(r < 1 for r in value.values()):
            raise ValueError("repetitions must be positive")
        return value

    @model_validator(mode="after")
    def validate_modes(self):
        if not self.modes:
            raise ValueError("a sweep needs at least one learner kind")
        return self

    def repetitions_for(self, budget: int) -> int:
        if self.schedule and budget in self.schedule:
            return self.schedule[budget]
        if self.published_schedule:
            return published_repetitions(budget)
        return self.repetitions

    def runs(self) -> List[tuple]:
        """
        Every (mode, budget, repetition) of the plan in a fixed order.
        """
        return [(LearnerKind(mode), budget, rep) for mode in self.modes for budget in self.budgets
                for rep in range(self.repetitions_for(budget))]

    @classmethod
    def published(cls, **overrides) -> "SweepPlan":
        return cls(**{"budgets": list(PUBLISHED_BUDGETS), "published_schedule": True, **overrides})
