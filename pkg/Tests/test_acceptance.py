"""
Full-size phantom runs with the repository config. Each takes minutes on a CPU, so they
only run with `pytest -m slow`.
"""
import os

import pytest

from pipeline import cmd_eval, cmd_phantom, cmd_track, cmd_train
from utils.helpers import load_config
from utils.run_config import RunConfig

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))

pytestmark = pytest.mark.slow


def _run_config(output_dir, **ablation):
    run = RunConfig.from_sources(load_config(os.path.join(ROOT, "config.yaml")),
                                 {"paths": {"output_dir": str(output_dir)}})
    return run.with_ablation(**ablation) if ablation else run


def _phantom_scores(output_dir, **ablation):
    run = _run_config(output_dir, **ablation)
    cmd_phantom(run)
    cmd_train(run)
    cmd_track(run)
    return cmd_eval(run)


@pytest.fixture(scope="module")
def full_scores(tmp_path_factory):
    return _phantom_scores(tmp_path_factory.mktemp("full"))


def test_default_phantom_scores(full_scores):
    assert full_scores["VC"] >= 70.0
    assert full_scores["OL"] >= 80.0
    assert full_scores["F1"] >= 70.0


def test_linear_embedding_lowers_valid_connections(full_scores, tmp_path):
    ablated = _phantom_scores(tmp_path, use_cnn3d=False)
    assert ablated["VC"] < full_scores["VC"]
