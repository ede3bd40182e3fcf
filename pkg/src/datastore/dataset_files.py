"""
 Copyright Duel 2025
"""
import hashlib
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from src.models.bag import Bag
from src.synthdata.generator import BagTruth, GroundTruth, SynthConfig, SynthDataset
from src.utilities.errors import DatasetError, DomainError
from src.utilities.io_utils import IOUtils

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
INSTANCES_NAME = "instances.bin"
TRUTH_NAME = "ground_truth.json"
INSTANCES_MAGIC = b"MILD"
INSTANCES_VERSION = 1


def encode_instances(dataset: SynthDataset) -> bytes:
    """
    Little-endian binary: magic, version u32, bag count u32, instance rank u8, extents u32,
    then (bags + 1) u64 instance offsets, then every instance as raw 32-bit reals.
    """
    shape = dataset.bags[0].instance_shape
    lengths = [len(bag) for bag in dataset.bags]
    offsets = np.concatenate(([0], np.cumsum(lengths))).astype("<u8")
    header = INSTANCES_MAGIC + struct.pack("<IIB", INSTANCES_VERSION, len(dataset.bags), len(shape))
    header += struct.pack(f"<{len(shape)}I", *shape)
    data = np.concatenate([bag.stacked() for bag in dataset.bags]).astype("<f4")
    return header + offsets.tobytes() + data.tobytes()


def decode_instances(raw: bytes):
    """
    :return: List of per-bag float32 arrays.
    """
    if raw[:4] != INSTANCES_MAGIC:
        raise DatasetError(f"bad magic {raw[:4]!r} in instance file")
    try:
        version, count, rank = struct.unpack_from("<IIB", raw, 4)
        position = 4 + struct.calcsize("<IIB")
        shape = struct.unpack_from(f"<{rank}I", raw, position)
        position += 4 * rank
        offsets = np.frombuffer(raw, dtype="<u8", count=count + 1, offset=position).astype(np.int64)
        position += 8 * (count + 1)
    except (struct.error, ValueError) as exc:
        raise DatasetError(f"truncated instance file header: {exc}") from exc
    if version != INSTANCES_VERSION:
        raise DatasetError(f"unsupported instance file version {version}")
    per_instance = int(np.prod(shape))
    expected = position + 4 * per_instance * int(offsets[-1])
    if len(raw) != expected:
        raise DatasetError(f"instance file has {len(raw)} bytes, the offset table implies {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=position).astype(np.float32).reshape((-1,) + tuple(shape))
    return [data[offsets[i]:offsets[i + 1]] for i in range(count)]


def encode_truth(dataset: SynthDataset) -> str:
    payload = {
        "bags": [
            {
                "id": truth.id,
                "bag_label": bag.bag_label,
                "instance_labels": truth.instance_labels,
                "sequences": [list(s) for s in truth.sequences],
                "masks": {str(i): IOUtils.rle_encode(mask) for i, mask in sorted(truth.masks.items())},
            }
            for bag, truth in zip(dataset.bags, dataset.truth.bags)
        ]
    }
    return IOUtils.dumps_json(payload)


def write_dataset(dataset: SynthDataset, directory: Union[str, Path]) -> Path:
    """
    Write manifest, instance binary and ground truth into a directory. The manifest is written
    last and carries a sha256 over the other two files.
    """
    directory = Path(directory)
    instances = encode_instances(dataset)
    truth = encode_truth(dataset).encode("utf-8")
    IOUtils.atomic_write_bytes(directory / INSTANCES_NAME, instances)
    IOUtils.atomic_write_bytes(directory / TRUTH_NAME, truth)
    manifest = {
        "format": "mil-dataset",
        "version": INSTANCES_VERSION,
        "config": dataset.config.model_dump(),
        "seed": dataset.config.seed,
        "streams": dataset.metadata,
        "counts": {
            "bags": len(dataset),
            "positive_bags": dataset.positive_count,
            "instances": dataset.instance_count,
            "positive_instances": int(sum(sum(t.instance_labels) for t in dataset.truth.bags)),
        },
        "checksum": "sha256:" + hashlib.sha256(instances + truth).hexdigest(),
    }
    IOUtils.write_json(directory / MANIFEST_NAME, manifest)
    logger.info("Wrote dataset of %d bags to %s", len(dataset), directory)
    return directory


def read_dataset(directory: Union[str, Path]) -> SynthDataset:
    """
    Read a dataset directory back, verifying the checksum and the OR constraint.
    """
    directory = Path(directory)
    try:
        manifest = IOUtils.read_json(directory / MANIFEST_NAME)
        instances = (directory / INSTANCES_NAME).read_bytes()
        truth_bytes = (directory / TRUTH_NAME).read_bytes()
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read dataset at {directory}: {exc}") from exc

    checksum = "sha256:" + hashlib.sha256(instances + truth_bytes).hexdigest()
    if manifest.get("checksum") != checksum:
        raise DatasetError(f"checksum mismatch for dataset at {directory}")

    arrays = decode_instances(instances)
    records = IOUtils.read_json(directory / TRUTH_NAME)["bags"]
    if len(records) != len(arrays):
        raise DatasetError(f"ground truth lists {len(records)} bags, the instance file {len(arrays)}")
    unlabelled = [record.get("id") for record in records if record.get("bag_label") is None]
    if unlabelled:
        raise DomainError(f"{len(unlabelled)} bag(s) have no bag label, first {unlabelled[0]}; "
                          f"weak supervision needs every bag labelled")
    bags, truths = [], []
    try:
        for features, record in zip(arrays, records):
            labels = record.get("instance_labels")
            bags.append(Bag.from_arrays(record["id"], features, instance_labels=labels,
                                        bag_label=record["bag_label"]))
            truths.append(BagTruth(
                id=record["id"], instance_labels=labels or [],
                sequences=[tuple(s) for s in record.get("sequences", [])],
                masks={int(i): IOUtils.rle_decode(m) for i, m in record.get("masks", {}).items()},
            ))
        config = SynthConfig(**manifest["config"])
    except (ValidationError, ValueError, KeyError) as exc:
        raise DatasetError(f"invalid dataset at {directory}: {exc}") from exc
    return SynthDataset(config=config, bags=bags, truth=GroundTruth(bags=truths), metadata=manifest.get("streams", {}))
