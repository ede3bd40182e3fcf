"""
 Copyright Duel 2025
"""
import logging

import numpy as np
import pytest

from src.datastore.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from src.models.mil_model import predict_bag
from src.models.model_params import EncoderSpec, LearnerKind, ModelParams
from src.utilities.errors import CheckpointError


@pytest.fixture
def architecture():
    return EncoderSpec.for_instances((6,), hidden=12, attention_hidden=5)


@pytest.fixture
def weak_params(architecture):
    return ModelParams.initialise(architecture, LearnerKind.WEAK, seed=4)


def test_round_trip_keeps_every_tensor(tmp_path, weak_params):
    path = save_checkpoint(weak_params, tmp_path / "model.milb")
    loaded = load_checkpoint(path)
    assert loaded.learner_kind == LearnerKind.WEAK
    assert loaded.architecture == weak_params.architecture
    assert sorted(loaded.tensors) == sorted(weak_params.tensors)
    for name, tensor in weak_params.tensors.items():
        assert np.array_equal(loaded.tensors[name], tensor)
    bag = np.random.default_rng(0).normal(size=(4, 6))
    assert predict_bag(loaded, bag)[0] == predict_bag(weak_params, bag)[0]


def test_conv_round_trip():
    params = ModelParams.initialise(EncoderSpec.for_instances((8, 8), channels=(2, 3)), LearnerKind.WEAK, seed=1)
    loaded = decode_checkpoint(encode_checkpoint(params))
    assert loaded.architecture == params.architecture


def test_strong_checkpoints_omit_attention(architecture):
    params = ModelParams.initialise(architecture, LearnerKind.STRONG, seed=4)
    loaded = decode_checkpoint(encode_checkpoint(params), architecture=architecture)
    assert loaded.learner_kind == LearnerKind.STRONG
    assert b"attention." not in encode_checkpoint(params)
    assert len(encode_checkpoint(params)) < len(encode_checkpoint(params.copy(learner_kind=LearnerKind.WEAK)))


def test_strong_checkpoint_promoted_to_weak_gets_fresh_attention(architecture, caplog):
    params = ModelParams.initialise(architecture, LearnerKind.STRONG, seed=4)
    with caplog.at_level(logging.WARNING):
        loaded = decode_checkpoint(encode_checkpoint(params), learner_kind=LearnerKind.WEAK, architecture=architecture)
    assert loaded.learner_kind == LearnerKind.WEAK
    assert loaded.tensors["attention.hidden.weight"].shape == (256, 5)
    assert np.array_equal(loaded.tensors["encoder.fc1.weight"], params.tensors["encoder.fc1.weight"])
    assert "initialising attention afresh" in caplog.text


def test_bad_magic(weak_params):
    data = encode_checkpoint(weak_params)
    with pytest.raises(CheckpointError, match="bad magic"):
        decode_checkpoint(b"XXXX" + data[4:])


def test_truncation_names_the_tensor(weak_params):
    data = encode_checkpoint(weak_params)
    with pytest.raises(CheckpointError, match="truncated checkpoint while reading data of tensor 'encoder.fc1.weight'"):
        decode_checkpoint(data[:60])


def test_trailing_bytes(weak_params):
    with pytest.raises(CheckpointError, match="trailing"):
        decode_checkpoint(encode_checkpoint(weak_params) + b"\x00")


def test_shape_mismatch_names_the_tensor(weak_params):
    other = EncoderSpec.for_instances((6,), hidden=7, attention_hidden=5)
    with pytest.raises(CheckpointError, match="shape mismatch for tensor 'encoder.fc1.weight'"):
        decode_checkpoint(encode_checkpoint(weak_params), architecture=other)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read checkpoint"):
        load_checkpoint(tmp_path / "absent.milb")
