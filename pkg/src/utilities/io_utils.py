"""
 Copyright Duel 2025
"""
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Union

import numpy as np

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _to_builtin(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class IOUtils:
    """
     A utilities class for writing run artefacts
    """

    @staticmethod
    def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
        """
        Write to a temporary sibling file and rename it over the target.
        :param path: Destination file.
        :param data: Content.
        :return: The destination path.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(tmp_name, path)
        except BaseException:
            Path(tmp_name).unlink(missing_ok=True)
            raise
        logger.debug("Wrote %d bytes to %s", len(data), path)
        return path

    @staticmethod
    def atomic_write_text(path: PathLike, text: str) -> Path:
        return IOUtils.atomic_write_bytes(path, text.encode("utf-8"))

    @staticmethod
    def dumps_json(payload: Any) -> str:
        return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, default=_to_builtin) + "\n"

    @staticmethod
    def write_json(path: PathLike, payload: Any) -> Path:
        return IOUtils.atomic_write_text(path, IOUtils.dumps_json(payload))

    @staticmethod
    def read_json(path: PathLike) -> Any:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)

    @staticmethod
    def rle_encode(mask: np.ndarray) -> dict:
        """
        Run-length encode a boolean grid in row-major order. Counts alternate between
        false and true runs, starting with a (possibly empty) false run.
        """
        flat = np.asarray(mask, dtype=bool).ravel()
        padded = np.concatenate(([False], flat, [not flat[-1]] if flat.size else [True]))
        changes = np.flatnonzero(padded[1:] != padded[:-1])
        counts = np.diff(np.concatenate(([0], changes)))
        return {"shape": list(np.shape(mask)), "counts": counts.astype(int).tolist()}

    @staticmethod
    def rle_decode(encoded: dict) -> np.ndarray:
        shape = tuple(encoded["shape"])
        values = np.zeros(len(encoded["counts"]), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, encoded["counts"])
        if flat.size != int(np.prod(shape)):
            raise ValueError(f"RLE covers {flat.size} cells, shape {shape} needs {int(np.prod(shape))}")
        return flat.reshape(shape)

    @staticmethod
    def to_pgm(grid: np.ndarray) -> bytes:
        """
        Binary 8-bit PGM of a grid, min-max scaled to 0..255 (a constant grid maps to 0).
        """
        grid = np.asarray(grid, dtype=np.float64)
        if grid.ndim != 2:
            raise ValueError(f"PGM needs a 2-D grid, got shape {grid.shape}")
        low, high = float(grid.min()), float(grid.max())
        scaled = np.zeros_like(grid) if high == low else (grid - low) / (high - low)
        pixels = np.round(scaled * 255).astype(np.uint8)
        header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii")
        return header + pixels.tobytes()

    @staticmethod
    def write_pgm(path: PathLike, grid: np.ndarray) -> Path:
        return IOUtils.atomic_write_bytes(path, IOUtils.to_pgm(grid))
