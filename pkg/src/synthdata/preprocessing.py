"""
 Copyright Duel 2025
"""
import numpy as np

from src.utilities.errors import DomainError

BRAIN_WINDOW_LEVEL = 40.0
BRAIN_WINDOW_WIDTH = 80.0


def window_normalize(raw, level: float = BRAIN_WINDOW_LEVEL, width: float = BRAIN_WINDOW_WIDTH) -> np.ndarray:
    """
    Clamp a grid of Hounsfield units to [level - width/2, level + width/2] and map it onto [0, 1].
    :param raw: Real-valued grid in HU.
    :param level: Window level.
    :param width: Window width, > 0.
    :return: Grid in [0, 1] with the dtype of the input (float32 for integer input).
    """
    if width <= 0:
        raise DomainError(f"window width must be positive, got {width}")
    raw = np.asarray(raw)
    dtype = raw.dtype if np.issubdtype(raw.dtype, np.floating) else np.float32
    low = level - width / 2.0
    clamped = np.clip(raw.astype(np.float64), low, low + width)
    return ((clamped - low) / width).astype(dtype)


def window_denormalize(grid, level: float = BRAIN_WINDOW_LEVEL, width: float = BRAIN_WINDOW_WIDTH) -> np.ndarray:
    """
    Inverse affine map of window_normalize on [0, 1].
    """
    if width <= 0:
        raise DomainError(f"window width must be positive, got {width}")
    grid = np.asarray(grid, dtype=np.float64)
    return grid * width + (level - width / 2.0)
