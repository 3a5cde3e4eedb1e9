# File: model/checkpoint.py
"""
Checkpoint layout (all integers little-endian):

    magic        4 bytes  b"TTRK"
    version      uint32
    config_len   uint32   + sorted-key JSON of ModelConfig (utf-8)
    config_hash  32 bytes SHA-256 of that JSON
    extras_len   uint32   + sorted-key JSON of preprocessing/training extras
    n_params     uint32
    per parameter, in declaration order:
        name_len uint16 + name (utf-8)
        ndim     uint8  + ndim x uint32 shape
        payload  float64 little-endian, C order
"""

import hashlib
import json
import logging
import os
import struct

import numpy as np
import torch

from model.tracto_transformer import DTYPE, ModelConfig, TractoTransformer
from utils.errors import CheckpointError, CheckpointMismatchError

MAGIC = b"TTRK"
FORMAT_VERSION = 1


def config_json(config: ModelConfig) -> bytes:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_hash(cfg_bytes: bytes) -> bytes:
    """SHA-256 of the serialised config, stored right after it."""
    return hashlib.sha256(cfg_bytes).digest()


def _architecture(config: ModelConfig) -> dict:
    # seed only affects initialisation
    return {k: v for k, v in config.to_dict().items() if k != "seed"}


def save_checkpoint(model: TractoTransformer, path, extras: dict = None):
    path = os.fspath(path)
    cfg_bytes = config_json(model.config)
    extras_bytes = json.dumps(extras or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = list(model.named_parameters())
    chunks = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", len(cfg_bytes)), cfg_bytes,
        config_hash(cfg_bytes),
        struct.pack("<I", len(extras_bytes)), extras_bytes,
        struct.pack("<I", len(params)),
    ]
    for name, param in params:
        encoded = name.encode("utf-8")
        values = param.detach().cpu().numpy().astype("<f8", copy=False)
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(np.ascontiguousarray(values).tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))
    logging.info(f"Saved checkpoint with {len(params)} parameter arrays to {path}")


class _Reader:
    def __init__(self, raw: bytes, path: str):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, expected_config: ModelConfig = None):
    """
    Returns (model, extras). Raises CheckpointMismatchError when expected_config is given
    and differs from the stored config in anything but the seed.
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    reader = _Reader(raw, path)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a TractoTransformer checkpoint (bad magic)")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = reader.unpack("<I")
    cfg_bytes = reader.take(cfg_len)
    stored_hash = reader.take(32)
    if config_hash(cfg_bytes) != stored_hash:
        raise CheckpointError(f"{path}: config hash does not match the stored config")
    config = ModelConfig.from_dict(json.loads(cfg_bytes.decode("utf-8")))
    if expected_config is not None and _architecture(config) != _architecture(expected_config):
        raise CheckpointMismatchError(
            f"{path}: checkpoint config {config.to_dict()} does not match expected {expected_config.to_dict()}")
    (extras_len,) = reader.unpack("<I")
    extras = json.loads(reader.take(extras_len).decode("utf-8"))

    model = TractoTransformer(config)
    expected = dict(model.named_parameters())
    (n_params,) = reader.unpack("<I")
    if n_params != len(expected):
        raise CheckpointMismatchError(f"{path}: {n_params} parameter arrays, model expects {len(expected)}")
    with torch.no_grad():
        for _ in range(n_params):
            (name_len,) = reader.unpack("<H")
            name = reader.take(name_len).decode("utf-8")
            (ndim,) = reader.unpack("<B")
            shape = reader.unpack(f"<{ndim}I") if ndim else ()
            count = int(np.prod(shape)) if ndim else 1
            values = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(shape)
            if name not in expected or tuple(expected[name].shape) != tuple(shape):
                raise CheckpointMismatchError(f"{path}: unexpected parameter {name} with shape {shape}")
            expected[name].copy_(torch.as_tensor(values.copy(), dtype=DTYPE))
    if reader.pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - reader.pos} trailing bytes after parameters")
    model.eval()
    logging.info(f"Loaded checkpoint {path} (use_cnn3d={config.use_cnn3d}, K={config.k})")
    return model, extras
