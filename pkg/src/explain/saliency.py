"""
 Copyright Duel 2025
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from math import ceil, log2
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.explain.attribution import SaliencyMap
from src.explain.shapley import shapley_from_values
from src.models.mil_model import MILNetwork
from src.models.model_params import ModelParams
from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)

# Batch of grids (n, H, W) -> probabilities (n,)
InstancePredictor = Callable[[np.ndarray], np.ndarray]

QUADRANTS = 4
Shift = Tuple[int, int]


class SpatialExplainConfig(BaseModel):
    """
    Quad-tree pixel attribution with cycle spinning.
    """
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    min_size: int = Field(default=4, ge=1)
    tolerance: float = Field(default=0.0, ge=0)
    n_rho: int = Field(default=3, ge=1)
    n_alpha: int = Field(default=12, ge=1)
    # per-pixel masking value, e.g. the training-split mean image; zeros when omitted
    baseline: Optional[np.ndarray] = None
    max_workers: int = Field(default=1, ge=1)

    @classmethod
    def published(cls, **overrides) -> "SpatialExplainConfig":
        """
        Constants used on 512 x 512 slices.
        """
        return cls(**{"min_size": 64, "tolerance": 0.0, "n_rho": 3, "n_alpha": 12, **overrides})


def cycle_shifts(min_size: int, n_rho: int, n_alpha: int) -> List[Shift]:
    """
    Shift vectors (round(rho sin a), round(rho cos a)) with rho = s i / n_rho for i = 1..n_rho
    (only rho = 0 when n_rho = 1) and a = 2 pi j / n_alpha. The unshifted partition comes first;
    duplicates are dropped.
    """
    radii = [0.0] if n_rho == 1 else [min_size * i / n_rho for i in range(1, n_rho + 1)]
    shifts: List[Shift] = [(0, 0)]
    for rho in radii:
        for j in range(n_alpha):
            alpha = 2.0 * np.pi * j / n_alpha
            shift = (int(round(rho * np.sin(alpha))), int(round(rho * np.cos(alpha))))
            if shift not in shifts:
                shifts.append(shift)
    return shifts


def requested_shift_count(n_rho: int, n_alpha: int) -> int:
    """
    Maps cycle spinning would average before rounded shifts are deduplicated.
    """
    return 1 if n_rho == 1 else 1 + n_rho * n_alpha


def partition_frame(shape: Tuple[int, int], min_size: int, shift: Shift) -> Tuple[Tuple[int, int], int]:
    """
    Origin and side of the square quad-tree canvas covering the image for one shift.
    The canvas side is min_size times a power of two, at least 2 * min_size.
    """
    extent = max(shape)
    if shift == (0, 0):
        levels = max(1, ceil(log2(extent / min_size)))
        return (0, 0), min_size * 2 ** levels
    origin = tuple(d if d <= 0 else d - min_size for d in shift)
    levels = max(1, ceil(log2((extent + min_size) / min_size)))
    return origin, min_size * 2 ** levels


class QuadTreeExplainer:
    """
    Hierarchical Shapley over one quad-tree partition of an image. At every node the four quadrants
    play a 4-player game with the rest of the image replaced by the baseline; quadrants scoring above
    the tolerance are explored down to leaves of min_size pixels, whose coefficient is written to
    every pixel they cover.
    """

    def __init__(self, predictor: InstancePredictor, x: np.ndarray, baseline: np.ndarray, min_size: int,
                 tolerance: float):
        self.predictor = predictor
        self.x = x
        self.baseline = baseline
        self.min_size = min_size
        self.tolerance = tolerance
        self.calls = 0

    def _clip(self, top: int, left: int, size: int):
        h, w = self.x.shape
        r0, r1 = max(top, 0), min(top + size, h)
        c0, c1 = max(left, 0), min(left + size, w)
        if r0 >= r1 or c0 >= c1:
            return None
        return r0, r1, c0, c1

    def _quadrants(self, top: int, left: int, size: int):
        half = size // 2
        return [(top, left), (top, left + half), (top + half, left), (top + half, left + half)], half

    def _node_game(self, top: int, left: int, size: int):
        corners, half = self._quadrants(top, left, size)
        boxes = [self._clip(r, c, half) for r, c in corners]
        batch = np.repeat(self.baseline[None], 1 << QUADRANTS, axis=0)
        for mask in range(1 << QUADRANTS):
            for q, box in enumerate(boxes):
                if mask >> q & 1 and box is not None:
                    r0, r1, c0, c1 = box
                    batch[mask, r0:r1, c0:c1] = self.x[r0:r1, c0:c1]
        values = np.asarray(self.predictor(batch), dtype=np.float64).reshape(-1)
        self.calls += 1
        return shapley_from_values(values, QUADRANTS), corners, half, boxes

    def explain(self, origin: Tuple[int, int], side: int) -> np.ndarray:
        grid = np.zeros(self.x.shape, dtype=np.float64)
        stack = [(origin[0], origin[1], side)]
        while stack:
            top, left, size = stack.pop()
            phi, corners, half, boxes = self._node_game(top, left, size)
            for q in range(QUADRANTS):
                if boxes[q] is None or phi[q] <= self.tolerance:
                    continue
                if half <= self.min_size:
                    r0, r1, c0, c1 = boxes[q]
                    grid[r0:r1, c0:c1] = phi[q]
                else:
                    stack.append((corners[q][0], corners[q][1], half))
        return grid


def hshap_pixels(predictor: InstancePredictor, x, config: SpatialExplainConfig) -> SaliencyMap:
    """
    Cycle-spinning quad-tree Shapley saliency of one 2-D instance.

    The unshifted map and one map per distinct shift vector are averaged. Canvases larger than the
    image are padded with the baseline, which the predictor never sees.
    :param predictor: Batched instance predictor.
    :param x: The instance grid.
    :param config: Partition and shift configuration.
    :return: Mean saliency with its Otsu mask.
    """
    x = np.asarray(getattr(x, "features", x), dtype=np.float64)
    if x.ndim != 2:
        raise DomainError(f"pixel attribution needs a 2-D instance, got shape {x.shape}")
    baseline = np.zeros_like(x) if config.baseline is None else np.asarray(config.baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise DomainError(f"baseline {baseline.shape} does not match the instance {x.shape}")

    shifts = cycle_shifts(config.min_size, config.n_rho, config.n_alpha)
    requested = requested_shift_count(config.n_rho, config.n_alpha)
    if len(shifts) < requested:
        logger.info("%d of %d cycle shifts coincide after rounding at min_size %d; averaging %d maps",
                    requested - len(shifts), requested, config.min_size, len(shifts))
    frames = [partition_frame(x.shape, config.min_size, shift) for shift in shifts]
    maps: List[Optional[np.ndarray]] = [None] * len(shifts)
    calls = 0

    def run(index: int):
        origin, side = frames[index]
        explainer = QuadTreeExplainer(predictor, x, baseline, config.min_size, config.tolerance)
        return explainer.explain(origin, side), explainer.calls

    with ThreadPoolExecutor(max_workers=config.max_workers) as executor:
        futures = {executor.submit(run, i): i for i in range(len(shifts))}
        for future in as_completed(futures):
            maps[futures[future]], n = future.result()
            calls += n

    grid = maps[0] if len(maps) == 1 else np.mean(np.stack(maps), axis=0)
    metadata = {
        "shape": list(x.shape),
        "min_size": config.min_size,
        "tolerance": config.tolerance,
        "n_rho": config.n_rho,
        "n_alpha": config.n_alpha,
        "shifts": [list(s) for s in shifts],
        "maps_averaged": len(shifts),
        "maps_requested": requested,
        "duplicate_shifts_dropped": requested - len(shifts),
        "radii": "rho = s * i / n_rho, i = 1..n_rho (0 when n_rho = 1); unshifted map always included",
        "padding": [{"origin": list(origin), "side": side,
                     "padded": side != x.shape[0] or side != x.shape[1] or origin != (0, 0)}
                    for origin, side in frames],
        "predictor_batches": calls,
    }
    if any(p["padded"] for p in metadata["padding"]):
        logger.debug("Saliency canvases padded with baseline for image of shape %s", x.shape)
    return SaliencyMap.from_grid(grid, metadata)


def instance_batch_predictor(params: ModelParams) -> InstancePredictor:
    """
    g(f(x)) over a batch of grids; valid for both learner kinds.
    """
    network = MILNetwork(params)
    return lambda batch: network.predict_instances(np.asarray(batch, dtype=params.dtype))
