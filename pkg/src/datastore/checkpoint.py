"""
 Copyright Duel 2025
"""
import logging
import struct
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from src.models.model_params import ATTENTION_PREFIX, EncoderSpec, LearnerKind, ModelParams
from src.utilities.errors import CheckpointError
from src.utilities.io_utils import IOUtils

logger = logging.getLogger(__name__)

MAGIC = b"MILB"
FORMAT_VERSION = 1
_KIND_CODES = {LearnerKind.STRONG: 0, LearnerKind.WEAK: 1}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


def encode_checkpoint(params: ModelParams) -> bytes:
    """
    Serialise the tensors a learner uses. Strong learners never read attention, so it is omitted.
    """
    tensors = params.trainable()
    if params.dtype != np.float32:
        logger.debug("Casting %s tensors to float32 for the checkpoint", params.dtype)
    chunks = [MAGIC, struct.pack("<IBI", FORMAT_VERSION, _KIND_CODES[params.learner_kind], len(tensors))]
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes, learner_kind: Optional[LearnerKind] = None,
                      architecture: Optional[EncoderSpec] = None, seed: int = 0) -> ModelParams:
    """
    Parse checkpoint bytes.
    :param data: File content.
    :param learner_kind: Load as this kind; a strong checkpoint loaded as weak gets fresh attention.
    :param architecture: Expected architecture; inferred from the tensors when omitted.
    :param seed: Seed for freshly initialised attention.
    :return: The parameters.
    """
    reader = _Reader(data)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, kind_code, count = reader.unpack("<IBI", "header")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {FORMAT_VERSION}")
    if kind_code not in _CODE_KINDS:
        raise CheckpointError(f"unknown learner kind code {kind_code}")
    stored_kind = _CODE_KINDS[kind_code]

    tensors: Dict[str, np.ndarray] = {}
    for index in range(count):
        (length,) = reader.unpack("<H", f"name length of tensor #{index}")
        name = reader.take(length, f"name of tensor #{index}").decode("utf-8")
        (rank,) = reader.unpack("<B", f"rank of tensor '{name}'")
        shape = reader.unpack(f"<{rank}I", f"extents of tensor '{name}'")
        size = int(np.prod(shape)) if rank else 1
        raw = reader.take(4 * size, f"data of tensor '{name}'")
        tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)
    if reader.offset != len(data):
        raise CheckpointError(f"{len(data) - reader.offset} trailing bytes after the last tensor")

    architecture = architecture or EncoderSpec.infer(tensors)
    expected = architecture.tensor_shapes()
    for name, tensor in tensors.items():
        if name not in expected:
            raise CheckpointError(f"unexpected tensor '{name}'")
        if tuple(tensor.shape) != tuple(expected[name]):
            raise CheckpointError(f"shape mismatch for tensor '{name}': stored {tuple(tensor.shape)}, "
                                  f"architecture expects {tuple(expected[name])}")

    target = LearnerKind(learner_kind) if learner_kind is not None else stored_kind
    missing = [name for name in expected if name not in tensors]
    missing_required = [n for n in missing if not n.startswith(ATTENTION_PREFIX)]
    if missing_required:
        raise CheckpointError(f"missing tensor '{missing_required[0]}'")
    params = ModelParams(learner_kind=target, architecture=architecture, tensors=tensors)
    if missing:
        if target == LearnerKind.WEAK:
            logger.warning("Checkpoint holds a %s learner without attention; initialising attention afresh",
                           stored_kind.value)
        params.tensors.update(params.fresh_attention(seed))
    return params


def save_checkpoint(params: ModelParams, path: Union[str, Path]) -> Path:
    """
    Write a checkpoint atomically.
    """
    return IOUtils.atomic_write_bytes(path, encode_checkpoint(params))


def load_checkpoint(path: Union[str, Path], learner_kind: Optional[LearnerKind] = None,
                    architecture: Optional[EncoderSpec] = None, seed: int = 0) -> ModelParams:
    """
    Read a checkpoint back; see decode_checkpoint.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data, learner_kind=learner_kind, architecture=architecture, seed=seed)
