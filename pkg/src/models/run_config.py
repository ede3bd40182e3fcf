"""
 Copyright Duel 2025
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import json5
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.metrics.detection import MIN_LENGTH_ATTENTION, MIN_LENGTH_SHAPLEY, MIN_LENGTH_STRONG
from src.metrics.roc import ThresholdCriterion
from src.models.model_params import LearnerKind
from src.models.sweep_plan import SweepPlan
from src.models.train_config import DEFAULT_PATIENCE, TrainConfig
from src.synthdata.generator import SynthConfig
from src.utilities.errors import ConfigError

logger = logging.getLogger(__name__)

COMMANDS = ("synth", "train", "eval", "explain", "sweep")
ESTIMATORS = ("strong", "attention", "shapley")


class TrainSection(BaseModel):
    """
    Training command settings. Any TrainConfig field may appear here and overrides the recipe.
    """
    model_config = ConfigDict(extra="allow")

    dataset: Optional[str] = None
    mode: LearnerKind = LearnerKind.WEAK
    # instances for strong learners, bags for weak learners; None uses every label
    labels: Optional[int] = Field(default=None, ge=1)
    recipe: Literal["desk", "published"] = "desk"
    init: Optional[str] = None
    # stratified share of bags kept out of training for the held-out AUC
    holdout_fraction: float = Field(default=0.2, ge=0, lt=1)
    show_progress: bool = False

    def train_config(self, seed: int) -> TrainConfig:
        overrides: Dict[str, Any] = dict(self.model_extra or {})
        unknown = sorted(set(overrides) - set(TrainConfig.model_fields))
        if unknown:
            raise ConfigError(f"unknown train settings: {', '.join(unknown)}")
        overrides.setdefault("seed", seed)
        factory = TrainConfig.published if self.recipe == "published" else TrainConfig.for_mode
        try:
            return factory(self.mode, **overrides)
        except ValidationError as exc:
            raise ConfigError(f"invalid train settings: {exc}") from exc


class ExplainSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: Optional[str] = None
    checkpoint: Optional[str] = None
    oracle: bool = False
    max_bags: Optional[int] = Field(default=None, ge=1)
    bag_threshold: float = Field(default=0.5, ge=0, le=1)
    tolerance: float = Field(default=0.0, ge=0)
    pixels: bool = True
    min_size: int = Field(default=4, ge=1)
    pixel_tolerance: float = Field(default=0.0, ge=0)
    n_rho: int = Field(default=3, ge=1)
    n_alpha: int = Field(default=12, ge=1)
    pgm: bool = True


class EvalSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: Optional[str] = None
    checkpoint: Optional[str] = None
    # second checkpoint: DeLong tests AUC(compare) > AUC(checkpoint)
    compare: Optional[str] = None
    split: Literal["all", "validation"] = "all"
    validation_fraction: float = Field(default=0.2, gt=0, lt=1)
    criteria: List[ThresholdCriterion] = Field(
        default_factory=lambda: [ThresholdCriterion.YOUDEN, ThresholdCriterion.DISTANCE])
    estimators: Optional[List[str]] = None
    min_length_strong: int = Field(default=MIN_LENGTH_STRONG, ge=1)
    min_length_attention: int = Field(default=MIN_LENGTH_ATTENTION, ge=1)
    min_length_shapley: int = Field(default=MIN_LENGTH_SHAPLEY, ge=1)
    pixel_images: int = Field(default=20, ge=0)
    min_size: int = Field(default=4, ge=1)
    n_rho: int = Field(default=3, ge=1)
    n_alpha: int = Field(default=12, ge=1)

    @field_validator("estimators")
    @classmethod
    def validate_estimators(cls, value):
        if value is not None:
            unknown = sorted(set(value) - set(ESTIMATORS))
            if unknown:
                raise ValueError(f"unknown estimators {unknown}; choose from {list(ESTIMATORS)}")
        return value

    def min_lengths(self) -> Dict[str, int]:
        return {"strong": self.min_length_strong, "attention": self.min_length_attention,
                "shapley": self.min_length_shapley}


class SweepSection(SweepPlan):
    model_config = ConfigDict(extra="forbid")

    dataset: Optional[str] = None
    recipe: Literal["desk", "published"] = "desk"
    epochs: Optional[int] = Field(default=None, ge=1)
    patience: Optional[int] = Field(default=DEFAULT_PATIENCE, ge=0)
    weak_estimator: Literal["attention", "shapley"] = "attention"
    show_progress: bool = False

    def plan(self) -> SweepPlan:
        return SweepPlan(**self.model_dump(include=set(SweepPlan.model_fields)))


class RunConfig(BaseModel):
    """
    Resolved configuration of one command: file sections with command-line overrides applied.
    """
    model_config = ConfigDict(extra="forbid")

    command: Literal["synth", "train", "eval", "explain", "sweep"]
    out: str
    seed: int = 0
    workers: int = Field(default=1, ge=1)
    force: bool = False
    synth: SynthConfig = Field(default_factory=SynthConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    explain: ExplainSection = Field(default_factory=ExplainSection)
    sweep: SweepSection = Field(default_factory=SweepSection)

    @staticmethod
    def load_file(path: Optional[Path]) -> Dict[str, Any]:
        """
        Parse a JSON5 config file: one object per section of flat key/value pairs.
        """
        if path is None:
            return {}
        try:
            with open(path, encoding="utf-8") as handle:
                document = json5.load(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config file {path} is not valid JSON5: {exc}") from exc
        if not isinstance(document, dict):
            raise ConfigError(f"config file {path} must hold an object of sections")
        # resolved-config snapshots carry command, out and force as well
        unknown = sorted(set(document) - set(COMMANDS) - {"seed", "workers", "command", "out", "force"})
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
        return document

    @classmethod
    def resolve(cls, command: str, out: str, document: Dict[str, Any], seed: Optional[int] = None,
                workers: Optional[int] = None, force: bool = False,
                section_overrides: Optional[Dict[str, Any]] = None) -> "RunConfig":
        """
        Merge file values and flags. Flags win; the global seed also seeds the synth section
        unless the file sets one there.
        """
        sections = {name: dict(document.get(name) or {}) for name in COMMANDS}
        sections[command].update({k: v for k, v in (section_overrides or {}).items() if v is not None})
        resolved_seed = seed if seed is not None else document.get("seed", 0)
        if seed is not None or "seed" not in sections["synth"]:
            sections["synth"]["seed"] = resolved_seed
        try:
            return cls(command=command, out=str(out), seed=resolved_seed,
                       workers=workers if workers is not None else document.get("workers", 1), force=force,
                       **sections)
        except ValidationError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def snapshot(self) -> dict:
        return self.model_dump(mode="json")
