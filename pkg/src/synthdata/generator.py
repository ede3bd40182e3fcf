"""
 Copyright Duel 2025
"""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.metrics.detection import extract_sequences
from src.models.bag import Bag
from src.synthdata.preprocessing import window_normalize
from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)

# Inclusive run of consecutive positive instances: [start, end]
Sequence = Tuple[int, int]


class SynthConfig(BaseModel):
    """
    Parameters of the synthetic MIL generator.
    """
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    bags: int = Field(default=1000, ge=1)
    kind: Literal["vector", "image"] = "vector"
    min_length: int = Field(default=10, ge=1)
    max_length: int = Field(default=40, ge=1)
    positive_rate: float = Field(default=0.4, ge=0, le=1)
    run_min: int = Field(default=1, ge=1)
    run_max: int = Field(default=6, ge=1)
    max_runs: int = Field(default=2, ge=1)
    dimension: int = Field(default=32, ge=2)
    image_side: int = Field(default=16, ge=4)
    # Vector instances: N(0, noise_std^2 I) + amplitude * u on positives
    amplitude: float = Field(default=5.0, ge=0)
    noise_std: float = Field(default=1.0, gt=0)
    # Image instances, all in HU before windowing
    background_hu: float = 25.0
    noise_hu: float = Field(default=6.0, ge=0)
    blob_peak_hu: float = 45.0
    blob_radius: float = Field(default=2.0, gt=0)
    # Fraction of bags (either class) carrying a decoy run
    confounder_rate: float = Field(default=0.3, ge=0, le=1)
    decoy_amplitude: float = Field(default=5.0, ge=0)
    decoy_hu: float = 30.0
    decoy_max_run: int = Field(default=3, ge=1)

    @field_validator("image_side")
    @classmethod
    def validate_image_side(cls, value):
        if value % 4:
            raise ValueError(f"image side must be divisible by 4, got {value}")
        return value

    @model_validator(mode="after")
    def validate_ranges(self):
        if self.min_length > self.max_length:
            raise ValueError(f"min_length {self.min_length} exceeds max_length {self.max_length}")
        if self.run_min > self.run_max:
            raise ValueError(f"run_min {self.run_min} exceeds run_max {self.run_max}")
        return self

    @property
    def instance_shape(self) -> Tuple[int, ...]:
        if self.kind == "vector":
            return (self.dimension,)
        return (self.image_side, self.image_side)


class BagTruth(BaseModel):
    """
    Ground truth of one bag: instance labels, maximal positive runs and, for images,
    boolean pixel masks of the positive instances keyed by instance index.
    """
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    id: str
    instance_labels: List[int]
    sequences: List[Sequence]
    masks: Dict[int, np.ndarray] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_sequences(self):
        labels = np.asarray(self.instance_labels)
        expected = list(extract_sequences(labels).ranges)
        if [tuple(s) for s in self.sequences] != expected:
            raise ValueError(f"bag {self.id}: sequences {self.sequences} are not the maximal runs {expected}")
        return self

    @property
    def bag_label(self) -> int:
        return int(any(self.instance_labels))


class GroundTruth(BaseModel):
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    bags: List[BagTruth]

    def take(self, indices) -> "GroundTruth":
        return GroundTruth(bags=[self.bags[i] for i in indices])


@dataclass
class SynthDataset:
    """
    Bags plus their ground truth, aligned by position.
    """
    config: SynthConfig
    bags: List[Bag]
    truth: GroundTruth
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.bags)

    @property
    def bag_labels(self) -> np.ndarray:
        return np.array([bag.bag_label for bag in self.bags], dtype=np.int64)

    @property
    def positive_count(self) -> int:
        return int(self.bag_labels.sum())

    @property
    def instance_count(self) -> int:
        return sum(len(bag) for bag in self.bags)

    def take(self, indices) -> "SynthDataset":
        indices = [int(i) for i in indices]
        return SynthDataset(config=self.config, bags=[self.bags[i] for i in indices],
                            truth=self.truth.take(indices), metadata=dict(self.metadata))


def _place_runs(r: int, lengths: List[int], rng: np.random.Generator) -> List[Sequence]:
    """
    Place non-overlapping, non-adjacent runs of the given lengths uniformly at random.
    """
    while len(lengths) > 1 and sum(lengths) + len(lengths) - 1 > r:
        lengths = lengths[:-1]
    lengths = [min(lengths[0], r)] + lengths[1:]
    free = r - sum(lengths) - (len(lengths) - 1)
    gaps = rng.multinomial(free, [1.0 / (len(lengths) + 1)] * (len(lengths) + 1))
    runs = []
    position = int(gaps[0])
    for i, length in enumerate(lengths):
        runs.append((position, position + length - 1))
        position += length + 1 + int(gaps[i + 1])
    return runs


class _Directions:
    """
    Fixed orthonormal signal/decoy directions for vector instances.
    """

    def __init__(self, dimension: int, rng: np.random.Generator):
        basis, _ = np.linalg.qr(rng.standard_normal((dimension, 2)))
        self.signal = basis[:, 0]
        self.decoy = basis[:, 1]


def _blob(side: int, center: Tuple[float, float], radius: float) -> np.ndarray:
    rows, cols = np.mgrid[0:side, 0:side]
    distance2 = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    return np.exp(-distance2 / (2.0 * radius ** 2))


def _generate_bag(index: int, label: int, config: SynthConfig, directions: Optional[_Directions],
                  seed_seq: np.random.SeedSequence) -> Tuple[Bag, BagTruth]:
    rng = np.random.default_rng(seed_seq)
    low = max(config.min_length, config.run_min) if label else config.min_length
    r = int(rng.integers(low, config.max_length + 1))
    labels = np.zeros(r, dtype=np.int64)
    sequences: List[Sequence] = []
    if label:
        count = int(rng.integers(1, config.max_runs + 1))
        lengths = [int(rng.integers(config.run_min, config.run_max + 1)) for _ in range(count)]
        sequences = _place_runs(r, lengths, rng)
        for start, end in sequences:
            labels[start:end + 1] = 1

    decoy = np.zeros(r, dtype=bool)
    if rng.random() < config.confounder_rate:
        length = int(rng.integers(1, min(config.decoy_max_run, r) + 1))
        start = int(rng.integers(0, r - length + 1))
        decoy[start:start + length] = True

    masks: Dict[int, np.ndarray] = {}
    if config.kind == "vector":
        features = rng.standard_normal((r, config.dimension)) * config.noise_std
        features += np.outer(labels, directions.signal) * config.amplitude
        features += np.outer(decoy, directions.decoy) * config.decoy_amplitude
    else:
        side = config.image_side
        hu = config.background_hu + config.noise_hu * rng.standard_normal((r, side, side))
        half_max_radius2 = 2.0 * config.blob_radius ** 2 * np.log(2.0)
        margin = min(config.blob_radius, (side - 1) / 2.0)
        for i in np.flatnonzero(labels):
            center = tuple(rng.uniform(margin, side - 1 - margin, size=2))
            blob = _blob(side, center, config.blob_radius)
            hu[i] += config.blob_peak_hu * blob
            rows, cols = np.mgrid[0:side, 0:side]
            masks[int(i)] = (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= half_max_radius2
        for i in np.flatnonzero(decoy):
            column = int(rng.integers(0, side - 1))
            hu[i, :, column:column + 2] += config.decoy_hu
        features = window_normalize(hu)

    bag_id = f"bag-{index:06d}"
    bag = Bag.from_arrays(bag_id, features.astype(np.float32), instance_labels=labels)
    truth = BagTruth(id=bag_id, instance_labels=labels.tolist(), sequences=list(extract_sequences(labels).ranges),
                      masks=masks)
    assert bag.bag_label == int(labels.any()) == label, f"{bag_id} violates Y = OR(y)"
    return bag, truth


def stream_metadata(config: SynthConfig) -> dict:
    return {
        "bit_generator": "PCG64",
        "seed": config.seed,
        "streams": "SeedSequence(seed).spawn(bags + 1): child 0 global, child i + 1 bag i",
    }


def generate_bags(config: SynthConfig, max_workers: int = 1) -> SynthDataset:
    """
    Generate a dataset satisfying the binary MIL assumption.

    Exactly round(positive_rate * bags) bags are positive. Each bag draws from its own
    substream, so the output is identical for any worker count.
    :param config: Generator configuration.
    :param max_workers: Threads used across bags.
    :return: The dataset with its ground truth.
    """
    if config.run_min > config.max_length:
        raise DomainError(f"positive runs of length {config.run_min} cannot fit in bags of at most "
                          f"{config.max_length} instances")
    children = np.random.SeedSequence(config.seed).spawn(config.bags + 1)
    global_rng = np.random.default_rng(children[0])
    directions = _Directions(config.dimension, global_rng) if config.kind == "vector" else None
    positives = int(round(config.positive_rate * config.bags))
    labels = np.zeros(config.bags, dtype=np.int64)
    labels[global_rng.permutation(config.bags)[:positives]] = 1

    results: List[Optional[Tuple[Bag, BagTruth]]] = [None] * config.bags
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        futures = {
            executor.submit(_generate_bag, i, int(labels[i]), config, directions, children[i + 1]): i
            for i in range(config.bags)
        }
        for future in as_completed(futures):
            results[futures[future]] = future.result()

    bags = [bag for bag, _ in results]
    truth = GroundTruth(bags=[t for _, t in results])
    logger.info("Generated %d %s bags (%d positive, %d instances)", config.bags, config.kind, positives,
                sum(len(b) for b in bags))
    return SynthDataset(config=config, bags=bags, truth=truth, metadata=stream_metadata(config))


def split_indices(labels, validation_fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stratified split of bag indices into (train, validation).
    """
    labels = np.asarray(labels)
    if not 0 <= validation_fraction < 1:
        raise DomainError(f"validation fraction must be in [0, 1), got {validation_fraction}")
    validation = []
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n = int(round(validation_fraction * len(idx)))
        validation.extend(idx[:n].tolist())
    validation_idx = np.sort(np.array(validation, dtype=np.int64))
    train_idx = np.setdiff1d(np.arange(len(labels)), validation_idx)
    return train_idx, validation_idx


def split_dataset(dataset: SynthDataset, validation_fraction: float,
                  rng: np.random.Generator) -> Tuple[SynthDataset, SynthDataset]:
    train_idx, validation_idx = split_indices(dataset.bag_labels, validation_fraction, rng)
    return dataset.take(train_idx), dataset.take(validation_idx)
