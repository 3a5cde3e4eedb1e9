import os

import pandas as pd
import pytest
import yaml

from main import main
from streamlines.tck_io import read_tck

TESTS_CONFIG = os.path.join(os.path.dirname(__file__), "tests_config.yaml")

PHANTOM_FILES = ("dwi.nii", "bvals", "bvecs", "wm_mask.nii", "fa.nii", "reference.tck")


def _run(command, output_dir, *extra):
    return main([command, "--config", TESTS_CONFIG, "--output-dir", str(output_dir), *extra])


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("phantom")
    assert _run("phantom", out) == 0
    return out


def test_phantom_writes_inputs_and_ground_truth(phantom_dir):
    for name in PHANTOM_FILES:
        assert (phantom_dir / name).is_file(), name
    gt_dir = phantom_dir / "ground_truth"
    index = yaml.safe_load((gt_dir / "bundles.yaml").read_text())
    assert [b["name"] for b in index["bundles"]] == ["line_x", "line_y"]
    assert (gt_dir / "line_x_head.nii").is_file()
    assert (gt_dir / "phantom_spec.yaml").is_file()
    assert len(read_tck(phantom_dir / "reference.tck")) == 8


def test_phantom_is_deterministic(tmp_path, phantom_dir):
    assert _run("phantom", tmp_path) == 0
    for name in PHANTOM_FILES:
        assert (tmp_path / name).read_bytes() == (phantom_dir / name).read_bytes(), name


def test_missing_output_dir_exits_2(tmp_path):
    assert _run("phantom", tmp_path / "does_not_exist") == 2


def test_missing_config_exits_2(tmp_path):
    assert main(["phantom", "--config", str(tmp_path / "nope.yaml"), "--output-dir", str(tmp_path)]) == 2


def test_bad_config_value_exits_2(tmp_path):
    config = tmp_path / "bad.yaml"
    config.write_text("sphere:\n  k: 50\n  shape: round\n")
    assert main(["phantom", "--config", str(config), "--output-dir", str(tmp_path)]) == 2


def test_eval_reference_scores_perfectly(phantom_dir, capsys):
    assert _run("eval", phantom_dir, "--candidate", str(phantom_dir / "reference.tck")) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "----- TRACTOMETER SCORES -----" in lines
    assert "VC=100.000000" in lines
    assert "OL=100.000000" in lines
    assert "OR=0.000000" in lines
    assert "F1=100.000000" in lines
    assert (phantom_dir / "scores.txt").is_file()
    table = pd.read_csv(phantom_dir / "bundle_scores.csv")
    assert table["bundle"].tolist() == ["line_x", "line_y"]


def test_eval_malformed_tck_exits_2(phantom_dir, tmp_path):
    broken = tmp_path / "broken.tck"
    broken.write_bytes(b"not a tractogram\n")
    assert _run("eval", phantom_dir, "--candidate", str(broken)) == 2


def test_eval_missing_candidate_exits_2(phantom_dir, tmp_path):
    assert _run("eval", phantom_dir, "--candidate", str(tmp_path / "missing.tck")) == 2


def test_track_without_checkpoint_exits_2(phantom_dir, tmp_path):
    assert _run("track", phantom_dir, "--checkpoint", str(tmp_path / "none.ttrk")) == 2


def test_train_track_eval(tmp_path, capsys):
    assert _run("phantom", tmp_path) == 0
    assert _run("train", tmp_path) == 0
    metrics = pd.read_csv(tmp_path / "metrics.csv")
    assert metrics["epoch"].tolist() == [0, 1, 2]
    assert (tmp_path / "model.ttrk").is_file()

    assert _run("track", tmp_path) == 0
    tractogram = read_tck(tmp_path / "output.tck")
    reasons = yaml.safe_load((tmp_path / "output_stop_reasons.yaml").read_text())
    assert sum(reasons.values()) == 10
    assert len(tractogram) == 10 - reasons["Failed"]
    first_tck = (tmp_path / "output.tck").read_bytes()

    # tracking output does not depend on the worker count
    assert _run("track", tmp_path, "--threads", "3") == 0
    assert (tmp_path / "output.tck").read_bytes() == first_tck

    capsys.readouterr()
    assert _run("eval", tmp_path) == 0
    out = capsys.readouterr().out
    assert any(line.startswith("VC=") for line in out.splitlines())


def test_training_is_deterministic(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        out.mkdir()
        assert _run("phantom", out) == 0
        assert _run("train", out) == 0
    assert (first / "metrics.csv").read_bytes() == (second / "metrics.csv").read_bytes()
    assert (first / "model.ttrk").read_bytes() == (second / "model.ttrk").read_bytes()


def test_track_rejects_mismatched_checkpoint(tmp_path):
    assert _run("phantom", tmp_path) == 0
    assert _run("train", tmp_path) == 0
    assert _run("track", tmp_path, "--no-cnn3d") == 2


@pytest.mark.slow
def test_ablation_writes_results(tmp_path):
    assert _run("ablate", tmp_path) == 0
    results = pd.read_csv(tmp_path / "ablation_results.csv")
    assert results["variant"].tolist() == ["full", "no_cnn3d", "no_reverse_aug", "no_smooth_labels"]
    assert (results.loc[results["variant"] == "full", "delta_F1"] == 0).all()
    for name in results["variant"]:
        assert (tmp_path / name / "model.ttrk").is_file()
