"""
 Copyright Duel 2025
"""
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from src.models.model_params import LearnerKind, ModelParams
from src.synthdata.generator import SynthDataset


class Datastore(ABC):
    """
    An abstract store for run artefacts: datasets, checkpoints, reports, tables and images
    """

    @abstractmethod
    def connect(self):
        pass

    @abstractmethod
    def disconnect(self):
        pass

    @abstractmethod
    def save_dataset(self, name: str, dataset: SynthDataset) -> Path:
        pass

    @abstractmethod
    def load_dataset(self, name: str) -> SynthDataset:
        pass

    @abstractmethod
    def save_checkpoint(self, name: str, params: ModelParams) -> Path:
        pass

    @abstractmethod
    def load_checkpoint(self, name: str, learner_kind: Optional[LearnerKind] = None) -> ModelParams:
        pass

    @abstractmethod
    def write_json(self, name: str, payload: Any) -> Path:
        pass

    @abstractmethod
    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        pass

    @abstractmethod
    def write_text(self, name: str, text: str) -> Path:
        pass

    @abstractmethod
    def write_image(self, name: str, grid: np.ndarray) -> Path:
        pass
