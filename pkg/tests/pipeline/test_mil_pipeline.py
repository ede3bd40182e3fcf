"""
 Copyright Duel 2025
"""
import hashlib
import json
import shutil

import pandas as pd
import pytest

from src.pipeline.mil_pipeline import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, MILPipeline, main
from src.utilities.io_utils import IOUtils

SMALL = ["--bags", "30", "--dimension", "8", "--min-length", "10", "--max-length", "14"]


def run(*argv) -> int:
    return MILPipeline([str(a) for a in argv]).run()


def error_payload(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A synthetic dataset with one weak and one strong checkpoint trained on it."""
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--out", root / "data", "--seed", 1, *SMALL) == EXIT_OK
    for mode in ("weak", "strong"):
        assert run("train", "--dataset", root / "data", "--out", root / mode, "--mode", mode,
                   "--epochs", 1) == EXIT_OK
    return root


def test_synth_writes_the_dataset(workspace):
    data = workspace / "data"
    for name in ("manifest.json", "instances.bin", "ground_truth.json", "class_balance.csv", "synth_report.json",
                 "resolved_config.json"):
        assert (data / name).exists()
    balance = pd.read_csv(data / "class_balance.csv").set_index("level")
    assert balance.loc["bags", "positive"] == 12
    assert balance.loc["bags", "total"] == 30
    report = IOUtils.read_json(data / "synth_report.json")
    assert 0.0 <= report["pflip"]["max"] <= 1.0


def test_synth_prints_the_class_balance(tmp_path, capsys):
    assert run("synth", "--out", tmp_path / "d", *SMALL) == EXIT_OK
    assert "positive_rate" in capsys.readouterr().out


def test_resolved_config_replays_the_run(workspace, tmp_path):
    snapshot = workspace / "data" / "resolved_config.json"
    assert run("synth", "--config", snapshot, "--out", tmp_path / "again") == EXIT_OK
    assert (tmp_path / "again" / "instances.bin").read_bytes() == (workspace / "data" / "instances.bin").read_bytes()


def test_invalid_rate_is_a_usage_error(tmp_path, capsys):
    assert run("synth", "--out", tmp_path / "d", "--positive-rate", 1.5) == EXIT_USAGE
    payload = error_payload(capsys)
    assert payload["error"] == "ConfigError"
    assert payload["exit_code"] == EXIT_USAGE
    assert not (tmp_path / "d").exists()


def test_json5_config_file(tmp_path):
    config = tmp_path / "run.json5"
    config.write_text("{\n  // tiny dataset\n  seed: 3,\n  synth: {bags: 10, dimension: 4, min_length: 10, "
                      "max_length: 12,},\n}\n")
    assert run("synth", "--config", config, "--out", tmp_path / "d") == EXIT_OK
    resolved = IOUtils.read_json(tmp_path / "d" / "resolved_config.json")
    assert resolved["seed"] == 3 and resolved["synth"]["bags"] == 10


def test_usage_errors(tmp_path, capsys):
    assert run("synth", *SMALL) == EXIT_USAGE
    assert "--out" in error_payload(capsys)["message"]
    assert run("frobnicate") == EXIT_USAGE
    assert error_payload(capsys)["error"] == "ConfigError"
    assert run("synth", "--out", tmp_path / "d", "--bags", "many") == EXIT_USAGE


def test_non_empty_output_is_refused(workspace, capsys):
    assert run("synth", "--out", workspace / "data", *SMALL) == EXIT_USAGE
    assert "--force" in error_payload(capsys)["message"]


def test_force_overwrites(tmp_path):
    (tmp_path / "d").mkdir()
    (tmp_path / "d" / "old.txt").write_text("x")
    assert run("synth", "--out", tmp_path / "d", "--force", *SMALL) == EXIT_OK


def test_train_outputs(workspace):
    weak = workspace / "weak"
    for name in ("best.milb", "final.milb", "metrics.csv", "train_report.json", "resolved_config.json"):
        assert (weak / name).exists()
    report = IOUtils.read_json(weak / "train_report.json")
    assert report["mode"] == "weak"
    assert report["epochs_run"] == 1
    assert report["holdout_bags"] == 6
    assert report["holdout_auc"] is None or 0.0 <= report["holdout_auc"] <= 1.0


def test_label_budget_beyond_the_pool(workspace, tmp_path, capsys):
    assert run("train", "--dataset", workspace / "data", "--out", tmp_path / "t", "--mode", "weak",
               "--labels", 1000) == EXIT_USAGE
    assert error_payload(capsys)["error"] == "DomainError"


def test_train_with_a_label_budget(workspace, tmp_path):
    assert run("train", "--dataset", workspace / "data", "--out", tmp_path / "t", "--mode", "strong",
               "--labels", 40, "--epochs", 1) == EXIT_OK
    assert IOUtils.read_json(tmp_path / "t" / "train_report.json")["labels_used"] <= 40


def test_missing_dataset_is_a_runtime_error(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert run("train", "--dataset", tmp_path / "empty", "--out", tmp_path / "t") == EXIT_RUNTIME
    assert error_payload(capsys)["error"] == "DatasetError"


def test_weak_dataset_without_bag_labels_is_a_usage_error(workspace, tmp_path, capsys):
    data = tmp_path / "unlabelled"
    shutil.copytree(workspace / "data", data)
    truth = IOUtils.read_json(data / "ground_truth.json")
    del truth["bags"][0]["bag_label"]
    truth_bytes = json.dumps(truth).encode("utf-8")
    (data / "ground_truth.json").write_bytes(truth_bytes)
    manifest = IOUtils.read_json(data / "manifest.json")
    digest = hashlib.sha256((data / "instances.bin").read_bytes() + truth_bytes).hexdigest()
    manifest["checksum"] = "sha256:" + digest
    IOUtils.write_json(data / "manifest.json", manifest)

    assert run("train", "--dataset", data, "--out", tmp_path / "t", "--mode", "weak", "--epochs", 1) == EXIT_USAGE
    payload = error_payload(capsys)
    assert payload["error"] == "DomainError"
    assert "bag label" in payload["message"]


def test_eval_weak_with_comparison(workspace, tmp_path):
    out = tmp_path / "eval"
    assert run("eval", "--dataset", workspace / "data", "--checkpoint", workspace / "weak" / "best.milb",
               "--compare", workspace / "strong" / "best.milb", "--out", out) == EXIT_OK
    report = IOUtils.read_json(out / "eval_report.json")
    assert report["learner"] == "weak"
    assert 0.0 <= report["auc"] <= 1.0
    assert set(report["detection"]) == {"youden", "distance"}
    assert 0.0 <= report["delong"]["p_value"] <= 1.0
    for name in ("roc.csv", "detection_youden_attention.csv", "detection_distance_shapley.csv",
                 "recall_by_length.csv", "min_length_sweep.csv"):
        assert (out / name).exists()


def test_eval_on_the_validation_split(workspace, tmp_path):
    out = tmp_path / "eval"
    assert run("eval", "--dataset", workspace / "data", "--checkpoint", workspace / "strong" / "best.milb",
               "--split", "validation", "--out", out) == EXIT_OK
    report = IOUtils.read_json(out / "eval_report.json")
    assert report["bags"] == 6
    assert report["estimators"] == ["strong"]


def test_strong_checkpoint_with_attention_estimator(workspace, tmp_path, capsys):
    assert run("eval", "--dataset", workspace / "data", "--checkpoint", workspace / "strong" / "best.milb",
               "--estimators", "attention", "--out", tmp_path / "e") == EXIT_USAGE
    assert error_payload(capsys)["error"] == "ConfigError"


def test_corrupt_checkpoint(workspace, tmp_path, capsys):
    broken = tmp_path / "broken.milb"
    broken.write_bytes((workspace / "weak" / "best.milb").read_bytes()[:100])
    assert run("eval", "--dataset", workspace / "data", "--checkpoint", broken, "--out", tmp_path / "e") == EXIT_RUNTIME
    assert error_payload(capsys)["error"] == "CheckpointError"


def test_explain_needs_a_weak_learner(workspace, tmp_path, capsys):
    assert run("explain", "--dataset", workspace / "data", "--checkpoint", workspace / "strong" / "best.milb",
               "--out", tmp_path / "x") == EXIT_USAGE
    assert "weak" in error_payload(capsys)["message"]


def test_explain_with_oracle(workspace, tmp_path):
    out = tmp_path / "x"
    assert run("explain", "--dataset", workspace / "data", "--checkpoint", workspace / "weak" / "best.milb",
               "--oracle", "--max-bags", 4, "--out", out) == EXIT_OK
    entries = IOUtils.read_json(out / "attributions.json")
    assert len(entries) <= 4
    for entry in entries:
        assert entry["shapley"]["method"] == "shapley"
        assert "oracle_max_diff" in entry


def test_oracle_refuses_long_bags(workspace, tmp_path, capsys):
    assert run("synth", "--out", tmp_path / "long", "--bags", 4, "--dimension", 8, "--min-length", 22,
               "--max-length", 24) == EXIT_OK
    capsys.readouterr()
    assert run("explain", "--dataset", tmp_path / "long", "--checkpoint", workspace / "weak" / "best.milb",
               "--oracle", "--out", tmp_path / "x") == EXIT_USAGE
    message = error_payload(capsys)["message"]
    assert "predictor calls" in message
    assert not (tmp_path / "x").exists()


def test_main_exits_with_the_code(tmp_path):
    with pytest.raises(SystemExit) as exit_info:
        main(["synth", "--out", str(tmp_path / "d"), "--positive-rate", "2"])
    assert exit_info.value.code == EXIT_USAGE


@pytest.mark.slow
def test_sweep_end_to_end(workspace, tmp_path):
    out = tmp_path / "sweep"
    assert run("sweep", "--dataset", workspace / "data", "--budgets", 6, 12, "--repetitions", 1,
               "--eval-size", 10, "--epochs", 1, "--out", out) == EXIT_OK
    runs = pd.read_csv(out / "runs.csv")
    assert len(runs) == 4
    summary = pd.read_csv(out / "summary.csv")
    assert summary["auc_ci_low"].isna().all()
    for name in ("auc_vs_m.svg", "f1_vs_m.svg", "sweep_report.json"):
        assert (out / name).exists()
    assert len(list((out / "checkpoints").glob("*.milb"))) == 4
