import numpy as np
import pytest
import torch

from model.checkpoint import MAGIC, config_hash, config_json, load_checkpoint, save_checkpoint
from model.tracto_transformer import ModelConfig, build_model
from utils.errors import CheckpointError, CheckpointMismatchError


def test_round_trip_restores_every_parameter(tmp_path, tiny_model_config):
    model = build_model(tiny_model_config)
    with torch.no_grad():
        for param in model.parameters():
            param.add_(0.01)
    path = tmp_path / "model.ttrk"
    save_checkpoint(model, path, extras={"n_directions": 4, "step_size": 0.5})
    loaded, extras = load_checkpoint(path, expected_config=tiny_model_config)
    assert extras == {"n_directions": 4, "step_size": 0.5}
    assert loaded.config == tiny_model_config
    for (name, a), (_, b) in zip(model.named_parameters(), loaded.named_parameters()):
        assert torch.equal(a, b), name
    assert not loaded.training


def test_seed_difference_is_not_a_mismatch(tmp_path, tiny_model_config):
    path = tmp_path / "model.ttrk"
    save_checkpoint(build_model(tiny_model_config), path)
    other_seed = ModelConfig.from_dict({**tiny_model_config.to_dict(), "seed": 99})
    load_checkpoint(path, expected_config=other_seed)


def test_architecture_mismatch(tmp_path, tiny_model_config):
    path = tmp_path / "model.ttrk"
    save_checkpoint(build_model(tiny_model_config), path)
    no_cnn = ModelConfig.from_dict({**tiny_model_config.to_dict(), "use_cnn3d": False})
    with pytest.raises(CheckpointMismatchError):
        load_checkpoint(path, expected_config=no_cnn)


def test_corrupt_checkpoints(tmp_path, tiny_model_config):
    path = tmp_path / "model.ttrk"
    save_checkpoint(build_model(tiny_model_config), path)
    raw = path.read_bytes()

    bad_magic = tmp_path / "magic.ttrk"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad_magic)

    truncated = tmp_path / "short.ttrk"
    truncated.write_bytes(raw[:-9])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated)

    trailing = tmp_path / "long.ttrk"
    trailing.write_bytes(raw + b"\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(trailing)

    tampered = bytearray(raw)
    tampered[14] ^= 0x01
    tampered_path = tmp_path / "hash.ttrk"
    tampered_path.write_bytes(bytes(tampered))
    with pytest.raises(CheckpointError):
        load_checkpoint(tampered_path)

    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ttrk")


def test_loaded_model_predicts_identically(tmp_path, tiny_model_config):
    model = build_model(tiny_model_config)
    model.eval()
    path = tmp_path / "model.ttrk"
    save_checkpoint(model, path)
    loaded, _ = load_checkpoint(path)
    cubes = torch.as_tensor(np.random.default_rng(0).normal(size=(1, 6, 3, 3, 3, 4)))
    with torch.no_grad():
        assert torch.equal(model(cubes), loaded(cubes))


def test_header_stores_config_json_and_its_hash(tmp_path, tiny_model_config):
    path = tmp_path / "model.ttrk"
    save_checkpoint(build_model(tiny_model_config), path)
    raw = path.read_bytes()
    cfg_bytes = config_json(tiny_model_config)
    assert raw[:4] == MAGIC
    assert int.from_bytes(raw[8:12], "little") == len(cfg_bytes)
    assert raw[12:12 + len(cfg_bytes)] == cfg_bytes
    assert raw[12 + len(cfg_bytes):44 + len(cfg_bytes)] == config_hash(cfg_bytes)
