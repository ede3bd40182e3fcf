"""
 Copyright Duel 2025
"""
import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.explain.otsu import otsu_mask
from src.utilities.errors import DomainError
from src.utilities.io_utils import IOUtils

logger = logging.getLogger(__name__)

# float32 attention weights land within this of 1/r when uniform
SELECTION_TOLERANCE = 1e-6


def select_by_attention(weights, t: Optional[float] = None) -> List[int]:
    """
    Indices whose score is at least t - SELECTION_TOLERANCE (default t = 1/r). The slack admits
    uniform float32 weights whose rounding puts them a few ulps below 1/r; scores further below t
    are never selected.
    :param weights: Attention weights or Shapley coefficients, length r.
    :param t: Threshold.
    :return: Selected indices, ascending.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or weights.size == 0:
        raise DomainError("selection needs a non-empty score vector")
    t = 1.0 / len(weights) if t is None else t
    return np.flatnonzero(weights >= t - SELECTION_TOLERANCE).astype(int).tolist()


class AttributionResult(BaseModel):
    """
    Instance-level attribution of one bag prediction.
    """
    model_config = ConfigDict(extra="forbid")

    bag_id: str
    method: Literal["attention", "shapley"]
    scores: List[float]
    threshold: float
    selected: List[int]
    full_value: Optional[float] = None
    # v of the empty bag: g applied to the all-zero bag feature
    empty_value: Optional[float] = None
    exact: bool = True
    groups_evaluated: int = 0
    notes: List[str] = Field(default_factory=list)

    @field_validator("scores")
    @classmethod
    def validate_scores(cls, value):
        if not value or not np.all(np.isfinite(value)):
            raise ValueError("attribution scores must be a non-empty finite vector")
        return value

    @model_validator(mode="after")
    def validate_selection(self):
        expected = select_by_attention(self.scores, self.threshold)
        if sorted(self.selected) != expected:
            raise ValueError(f"bag {self.bag_id}: selected {self.selected} differs from scores >= t {expected}")
        return self

    @classmethod
    def from_scores(cls, bag_id: str, method: str, scores, t: Optional[float] = None, **kwargs) -> "AttributionResult":
        scores = np.asarray(scores, dtype=np.float64)
        t = 1.0 / len(scores) if t is None else float(t)
        return cls(bag_id=bag_id, method=method, scores=scores.tolist(), threshold=t,
                   selected=select_by_attention(scores, t), **kwargs)

    def flags(self) -> np.ndarray:
        flags = np.zeros(len(self.scores), dtype=bool)
        flags[self.selected] = True
        return flags

    def efficiency_gap(self) -> Optional[float]:
        if self.full_value is None or self.empty_value is None:
            return None
        return float(np.sum(self.scores) - (self.full_value - self.empty_value))


@dataclass
class SaliencyMap:
    """
    Pixel attribution of one instance with its Otsu-binarised mask.
    """
    grid: np.ndarray
    mask: np.ndarray
    threshold: float
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_grid(cls, grid: np.ndarray, metadata: Optional[dict] = None) -> "SaliencyMap":
        grid = np.asarray(grid, dtype=np.float64)
        if not np.all(np.isfinite(grid)):
            raise DomainError("saliency grid contains non-finite values")
        threshold, mask = otsu_mask(grid)
        return cls(grid=grid, mask=mask, threshold=threshold, metadata=dict(metadata or {}))

    def to_json(self) -> dict:
        return {
            "shape": list(self.grid.shape),
            "grid": self.grid.tolist(),
            "threshold": self.threshold,
            "mask": IOUtils.rle_encode(self.mask),
            "metadata": self.metadata,
        }
