"""
 Copyright Duel 2025
"""
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from src.datastore.datastore import Datastore
from src.models.model_params import LearnerKind, ModelParams
from src.synthdata.generator import SynthDataset

logger = logging.getLogger(__name__)


class DatastoreManager:
    """
    A datastore manager that acts as an interface for a concrete datastore object
    """

    def __init__(self, datastore: Datastore):
        """
        Constructor
        :param datastore: The datastore object to be used.
        """
        self.datastore = datastore
        self.datastore.connect()

    def __enter__(self):
        """
        Handles the context management for the object.
        :return: The instance of the context manager.
        """
        return self

    def __exit__(self, a, b, c):
        """
        Disconnects the datastore when leaving a `with` block.
        :param a: exception type, if an exception was raised while inside the `with` block.
        :param b: exception value, if an exception was raised while inside the `with` block.
        :param c: traceback object, if an exception was raised while inside the `with` block.
        """
        self.datastore.disconnect()

    def save_dataset(self, name: str, dataset: SynthDataset) -> Path:
        """
        Persist a dataset (manifest, instance binary and ground truth).
        :param name: Dataset directory, relative to the store.
        :param dataset: The dataset.
        :return: The dataset directory.
        """
        return self.datastore.save_dataset(name, dataset)

    def load_dataset(self, name: str) -> SynthDataset:
        dataset = self.datastore.load_dataset(name)
        if not dataset.bags:
            logger.warning(f"Dataset {name} holds no bags")
        return dataset

    def save_checkpoint(self, name: str, params: ModelParams) -> Path:
        return self.datastore.save_checkpoint(name, params)

    def load_checkpoint(self, name: str, learner_kind: Optional[LearnerKind] = None) -> ModelParams:
        """
        Load a checkpoint, optionally as a different learner kind.
        :param name: Checkpoint file, relative to the store.
        :param learner_kind: Kind to load as; defaults to the stored kind.
        :return: The parameters.
        """
        return self.datastore.load_checkpoint(name, learner_kind)

    def write_json(self, name: str, payload: Any) -> Path:
        return self.datastore.write_json(name, payload)

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        """
        Write a table as CSV.
        :param name: File name, relative to the store.
        :param frame: The rows.
        :return: The file path.
        """
        if frame.empty:
            logger.warning(f"Writing empty table {name}")
        return self.datastore.write_table(name, frame)

    def write_text(self, name: str, text: str) -> Path:
        return self.datastore.write_text(name, text)

    def write_image(self, name: str, grid: np.ndarray) -> Path:
        return self.datastore.write_image(name, grid)
