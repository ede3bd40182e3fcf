"""
 Copyright Duel 2025
"""
import logging
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

from src.datastore.checkpoint import load_checkpoint, save_checkpoint
from src.datastore.dataset_files import read_dataset, write_dataset
from src.datastore.datastore import Datastore
from src.models.model_params import LearnerKind, ModelParams
from src.synthdata.generator import SynthDataset
from src.utilities.errors import ConfigError
from src.utilities.io_utils import IOUtils

logger = logging.getLogger(__name__)


class FilesystemDatastore(Datastore):
    """
    Class for managing run artefacts under one output directory. Every write is atomic.
    """

    def __init__(self, root: Union[str, Path], force: bool = False, read_only: bool = False):
        """
        Constructor
        :param root: The output directory. Relative names resolve against it; absolute paths are used as is.
        :param force: Allow writing into an existing non-empty directory.
        :param read_only: Only read artefacts; the directory must exist.
        """
        self.root = Path(root)
        self.force = force
        self.read_only = read_only
        self.connected = False

    def _path(self, name: Union[str, Path]) -> Path:
        return self.root / name

    def connect(self) -> None:
        """
        Check or create the output directory. An existing, non-empty directory is refused unless forced.
        """
        if self.read_only:
            if not self.root.is_dir():
                raise ConfigError(f"directory does not exist: {self.root}")
        else:
            if self.root.exists() and any(self.root.iterdir()) and not self.force:
                raise ConfigError(f"output directory {self.root} exists and is not empty; use --force to overwrite")
            self.root.mkdir(parents=True, exist_ok=True)
        self.connected = True
        logger.debug("Connected filesystem datastore at %s", self.root)

    def disconnect(self) -> None:
        if not self.connected:
            logger.info("FilesystemDatastore not connected")
        self.connected = False

    def save_dataset(self, name: str, dataset: SynthDataset) -> Path:
        return write_dataset(dataset, self._path(name))

    def load_dataset(self, name: str) -> SynthDataset:
        return read_dataset(self._path(name))

    def save_checkpoint(self, name: str, params: ModelParams) -> Path:
        return save_checkpoint(params, self._path(name))

    def load_checkpoint(self, name: str, learner_kind: Optional[LearnerKind] = None) -> ModelParams:
        return load_checkpoint(self._path(name), learner_kind=learner_kind)

    def write_json(self, name: str, payload: Any) -> Path:
        return IOUtils.write_json(self._path(name), payload)

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        return IOUtils.atomic_write_text(self._path(name), frame.to_csv(index=False, lineterminator="\n"))

    def write_text(self, name: str, text: str) -> Path:
        return IOUtils.atomic_write_text(self._path(name), text)

    def write_image(self, name: str, grid: np.ndarray) -> Path:
        return IOUtils.write_pgm(self._path(name), grid)
