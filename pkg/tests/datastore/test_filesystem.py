"""
 Copyright Duel 2025
"""
import numpy as np
import pandas as pd
import pytest

from src.datastore.dataset_files import INSTANCES_NAME, MANIFEST_NAME, TRUTH_NAME
from src.datastore.datastore_manager import DatastoreManager
from src.datastore.filesystem import FilesystemDatastore
from src.models.model_params import EncoderSpec, LearnerKind, ModelParams
from src.synthdata.generator import SynthConfig, generate_bags
from src.utilities.errors import ConfigError, DatasetError
from src.utilities.io_utils import IOUtils


@pytest.fixture
def store(tmp_path):
    """A connected datastore over a fresh directory."""
    ds = FilesystemDatastore(tmp_path / "run")
    ds.connect()
    yield ds
    ds.disconnect()


@pytest.fixture(scope="module")
def image_dataset():
    return generate_bags(SynthConfig(seed=2, bags=6, kind="image", min_length=3, max_length=6, image_side=8,
                                     positive_rate=0.5))


def test_non_empty_directory_is_refused(tmp_path):
    (tmp_path / "stale.txt").write_text("x")
    with pytest.raises(ConfigError, match="--force"):
        FilesystemDatastore(tmp_path).connect()
    FilesystemDatastore(tmp_path, force=True).connect()


def test_read_only_needs_an_existing_directory(tmp_path):
    with pytest.raises(ConfigError):
        FilesystemDatastore(tmp_path / "missing", read_only=True).connect()


def test_dataset_round_trip(store, image_dataset):
    store.save_dataset("data", image_dataset)
    loaded = store.load_dataset("data")
    assert len(loaded) == len(image_dataset)
    assert loaded.config == image_dataset.config
    for a, b in zip(loaded.bags, image_dataset.bags):
        assert a.id == b.id and a.bag_label == b.bag_label
        assert np.array_equal(a.stacked(), b.stacked())
    for a, b in zip(loaded.truth.bags, image_dataset.truth.bags):
        assert a.sequences == b.sequences
        assert sorted(a.masks) == sorted(b.masks)
        for i, mask in b.masks.items():
            assert np.array_equal(a.masks[i], mask)


def test_manifest_counts(store, image_dataset):
    path = store.save_dataset("data", image_dataset)
    manifest = IOUtils.read_json(path / MANIFEST_NAME)
    assert manifest["counts"]["bags"] == 6
    assert manifest["counts"]["positive_bags"] == 3
    assert manifest["seed"] == 2
    assert manifest["checksum"].startswith("sha256:")


@pytest.mark.parametrize("name", [INSTANCES_NAME, TRUTH_NAME])
def test_tampering_is_detected(store, image_dataset, name):
    path = store.save_dataset("data", image_dataset)
    raw = bytearray((path / name).read_bytes())
    raw[-2] ^= 0xFF
    (path / name).write_bytes(bytes(raw))
    with pytest.raises(DatasetError, match="checksum"):
        store.load_dataset("data")


def test_missing_dataset(store):
    with pytest.raises(DatasetError):
        store.load_dataset("nowhere")


def test_manager_writes_artefacts(tmp_path):
    with DatastoreManager(FilesystemDatastore(tmp_path / "out")) as manager:
        params = ModelParams.initialise(EncoderSpec.for_instances((4,), hidden=4, attention_hidden=2),
                                        LearnerKind.WEAK)
        manager.save_checkpoint("checkpoints/w.milb", params)
        manager.write_json("report.json", {"auc": np.float64(0.75), "runs": np.arange(2)})
        manager.write_table("table.csv", pd.DataFrame({"a": [1, 2]}))
        manager.write_image("map.pgm", np.eye(3))
        loaded = manager.load_checkpoint("checkpoints/w.milb")
    assert loaded.learner_kind == LearnerKind.WEAK
    assert IOUtils.read_json(tmp_path / "out" / "report.json") == {"auc": 0.75, "runs": [0, 1]}
    assert (tmp_path / "out" / "table.csv").read_text() == "a\n1\n2\n"
    assert (tmp_path / "out" / "map.pgm").read_bytes().startswith(b"P5\n3 3\n255\n")
