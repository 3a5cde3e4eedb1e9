import os

import pytest

from utils.errors import ConfigError
from utils.helpers import deep_merge, load_config
from utils.run_config import DEFAULT_PATHS, RunConfig

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))


def test_defaults():
    run = RunConfig.from_sources({}, {})
    assert run.model.k == 724
    assert run.model.g_in == 100
    assert run.model.n_classes == 725
    assert run.tracking.step_size == 0.5
    assert run.phantom.step_size == 0.5
    assert run.paths == DEFAULT_PATHS
    assert run.threads == 1


def test_repository_config_matches_defaults():
    run = RunConfig.from_sources(load_config(os.path.join(ROOT, "config.yaml")), {})
    defaults = RunConfig.from_sources({}, {})
    assert run.model == defaults.model
    assert run.training == defaults.training
    assert run.tracking == defaults.tracking
    assert run.phantom.to_dict() == defaults.phantom.to_dict()


def test_cross_section_propagation():
    run = RunConfig.from_sources({
        "seed": 5,
        "sphere": {"k": 50},
        "preprocessing": {"n_directions": 20},
        "streamlines": {"step_size": 0.8},
        "training": {"use_cnn3d": False, "max_len": 40},
    }, {})
    assert (run.model.k, run.model.g_in, run.model.use_cnn3d, run.model.max_len) == (50, 20, False, 40)
    assert run.model.seed == run.training.seed == run.tracking.rng_seed == run.phantom.rng_seed == 5
    assert run.tracking.step_size == run.phantom.step_size == 0.8


def test_overrides_win_and_none_is_ignored():
    file_cfg = {"training": {"epochs": 30, "batch_size": 4}, "logging": {"level": "DEBUG"}}
    run = RunConfig.from_sources(file_cfg, {"training": {"epochs": 3, "use_cnn3d": None},
                                            "logging": {"level": None}, "threads": 4})
    assert run.training.epochs == 3
    assert run.training.batch_size == 4
    assert run.training.use_cnn3d is True
    assert run.log_level == "DEBUG"
    assert run.threads == 4


def test_override_only_sections_drop_none_values():
    run = RunConfig.from_sources({}, {"training": {"epochs": None}, "tracking": {"n_seeds": 7},
                                      "paths": {"output_dir": "runs/a", "dwi": None}})
    assert run.training.epochs == 30
    assert run.tracking.n_seeds == 7
    assert run.paths["output_dir"] == "runs/a"
    assert run.paths["dwi"] == "dwi.nii"


@pytest.mark.parametrize("file_cfg", [
    {"optimizer": {}},
    {"sphere": {"k": 10, "kind": "fibonacci"}},
    {"streamlines": {"step": 1.0}},
    {"paths": {"tmp": "x"}},
    {"preprocessing": {"order": 4}},
    {"training": "fast"},
])
def test_unknown_keys_are_config_errors(file_cfg):
    with pytest.raises(ConfigError):
        RunConfig.from_sources(file_cfg, {})


def test_with_ablation():
    run = RunConfig.from_sources({}, {})
    ablated = run.with_ablation(use_cnn3d=False, use_smooth_labels=False)
    assert ablated.model.use_cnn3d is False
    assert ablated.training.use_cnn3d is False
    assert ablated.training.use_smooth_labels is False
    assert ablated.training.use_reverse_aug is True
    assert run.model.use_cnn3d is True


def test_deep_merge():
    base = {"a": {"b": 1, "c": 2}, "d": 3}
    merged = deep_merge(base, {"a": {"b": 10, "c": None}, "e": {"f": None, "g": 1}})
    assert merged == {"a": {"b": 10, "c": 2}, "d": 3, "e": {"g": 1}}
    assert base == {"a": {"b": 1, "c": 2}, "d": 3}
