# File: model/tracto_transformer.py

import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
import torch.nn as nn

from utils.errors import InvalidArgumentError

DTYPE = torch.float64


def to_tensor(values, dtype=DTYPE) -> torch.Tensor:
    """Tensor view of `values`; numpy inputs with negative strides are copied first."""
    if isinstance(values, torch.Tensor):
        return values.to(dtype)
    return torch.as_tensor(np.ascontiguousarray(values), dtype=dtype)


MASK_VALUE = -1e9

PRESETS = {
    "toy": dict(n_layers=2, n_heads=4, d_model=64, d_ffn=128),
    "large": dict(n_layers=8, n_heads=10, d_model=320, d_ffn=512),
}


@dataclass(frozen=True)
class ModelConfig:
    k: int = 724
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ffn: int = 128
    dropout_p: float = 0.1
    g_in: int = 100
    use_cnn3d: bool = True
    max_len: int = 100
    seed: int = 0

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        if name not in PRESETS:
            raise InvalidArgumentError(f"unknown model preset '{name}' (choose from {sorted(PRESETS)})")
        values = dict(PRESETS[name])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values).validate()

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise InvalidArgumentError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**values).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ModelConfig":
        for name in ("k", "d_model", "n_layers", "n_heads", "d_ffn", "g_in", "max_len"):
            if int(getattr(self, name)) <= 0:
                raise InvalidArgumentError(f"model.{name} must be positive")
        if self.k < 2:
            raise InvalidArgumentError("model.k must be >= 2")
        if self.d_model % self.n_heads:
            raise InvalidArgumentError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.d_model % 2:
            raise InvalidArgumentError("d_model must be even for sinusoidal positions")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidArgumentError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        return self

    @property
    def n_classes(self) -> int:
        return self.k + 1


def positional_encoding(n: int, d_model: int) -> torch.Tensor:
    """
    PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(pos / 10000^(2i/d)).
    """
    if d_model % 2:
        raise InvalidArgumentError(f"positional encoding needs an even d_model, got {d_model}")
    position = torch.arange(n, dtype=DTYPE)[:, None]
    div = torch.pow(torch.tensor(10000.0, dtype=DTYPE),
                    torch.arange(0, d_model, 2, dtype=DTYPE) / d_model)
    pe = torch.zeros(n, d_model, dtype=DTYPE)
    pe[:, 0::2] = torch.sin(position / div)
    pe[:, 1::2] = torch.cos(position / div)
    return pe


class VoxelEmbedding(nn.Module):
    """
    One valid 3x3x3 convolution per point cube (output 1x1x1 x d_model), or, with the
    CNN switched off, a linear map of the centre voxel's G-vector.
    """
    def __init__(self, g_in: int, d_model: int, use_cnn3d: bool = True):
        super().__init__()
        self.g_in = g_in
        self.use_cnn3d = use_cnn3d
        if use_cnn3d:
            self.conv = nn.Conv3d(g_in, d_model, kernel_size=3, padding=0, dtype=DTYPE)
        else:
            self.linear = nn.Linear(g_in, d_model, dtype=DTYPE)

    def forward(self, cubes: torch.Tensor) -> torch.Tensor:
        # cubes: (batch, n, 3, 3, 3, G)
        if cubes.dim() != 6 or cubes.shape[2:5] != (3, 3, 3) or cubes.shape[5] != self.g_in:
            raise InvalidArgumentError(
                f"expected cubes of shape (batch, n, 3, 3, 3, {self.g_in}), got {tuple(cubes.shape)}")
        b, n = cubes.shape[:2]
        if self.use_cnn3d:
            x = cubes.reshape(b * n, 3, 3, 3, self.g_in).permute(0, 4, 1, 2, 3)
            return self.conv(x).reshape(b, n, -1)
        return self.linear(cubes[:, :, 1, 1, 1, :])


class CausalSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout_p: float):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.W_q = nn.Linear(d_model, d_model, dtype=DTYPE)
        self.W_k = nn.Linear(d_model, d_model, dtype=DTYPE)
        self.W_v = nn.Linear(d_model, d_model, dtype=DTYPE)
        self.W_o = nn.Linear(d_model, d_model, dtype=DTYPE)
        self.dropout = nn.Dropout(dropout_p)

    def _split(self, x):
        b, n, _ = x.shape
        return x.reshape(b, n, self.n_heads, self.d_head).transpose(1, 2)

    def forward(self, x: torch.Tensor, padding_mask: torch.Tensor = None) -> torch.Tensor:
        b, n, d = x.shape
        q, k, v = self._split(self.W_q(x)), self._split(self.W_k(x)), self._split(self.W_v(x))
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.d_head)
        blocked = torch.triu(torch.ones(n, n, dtype=torch.bool, device=x.device), diagonal=1)
        blocked = blocked[None, None, :, :]
        if padding_mask is not None:
            blocked = blocked | padding_mask[:, None, None, :]
        scores = scores.masked_fill(blocked, MASK_VALUE)
        weights = self.dropout(torch.softmax(scores, dim=-1))
        context = (weights @ v).transpose(1, 2).reshape(b, n, d)
        if padding_mask is not None:
            # padded query rows attend to nothing
            context = context.masked_fill(padding_mask[:, :, None], 0.0)
        return self.W_o(context)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ffn: int, dropout_p: float):
        super().__init__()
        self.linear1 = nn.Linear(d_model, d_ffn, dtype=DTYPE)
        self.relu = nn.ReLU()
        self.dropout = nn.Dropout(dropout_p)
        self.linear2 = nn.Linear(d_ffn, d_model, dtype=DTYPE)

    def forward(self, x):
        return self.linear2(self.dropout(self.relu(self.linear1(x))))


class DecoderBlock(nn.Module):
    """Post-norm block: sublayer -> residual add -> LayerNorm, for attention then FFN."""
    def __init__(self, d_model: int, n_heads: int, d_ffn: int, dropout_p: float):
        super().__init__()
        self.attention = CausalSelfAttention(d_model, n_heads, dropout_p)
        self.ln1 = nn.LayerNorm(d_model, dtype=DTYPE)
        self.ffn = FeedForward(d_model, d_ffn, dropout_p)
        self.ln2 = nn.LayerNorm(d_model, dtype=DTYPE)

    def forward(self, x, padding_mask=None):
        x = self.ln1(x + self.attention(x, padding_mask))
        return self.ln2(x + self.ffn(x))


class OutputHead(nn.Module):
    """Two fully connected layers, d_model -> d_model (ReLU) -> K+1."""
    def __init__(self, d_model: int, n_classes: int):
        super().__init__()
        self.hidden = nn.Linear(d_model, d_model, dtype=DTYPE)
        self.relu = nn.ReLU()
        self.out = nn.Linear(d_model, n_classes, dtype=DTYPE)

    def forward(self, x):
        return self.out(self.relu(self.hidden(x)))


class TractoTransformer(nn.Module):
    """
    Voxel-cube embedding + sinusoidal positions + causal decoder stack + (K+1)-way head.
    Returns logits; softmax is applied by predict_fodf and the loss.
    """
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config.validate()
        self.embedding = VoxelEmbedding(config.g_in, config.d_model, config.use_cnn3d)
        self.blocks = nn.ModuleList([
            DecoderBlock(config.d_model, config.n_heads, config.d_ffn, config.dropout_p)
            for _ in range(config.n_layers)
        ])
        self.head = OutputHead(config.d_model, config.n_classes)
        self.register_buffer("positions", positional_encoding(config.max_len, config.d_model), persistent=False)
        self.reset_parameters(config.seed)

    def reset_parameters(self, seed: int):
        """
        Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases, unit LayerNorm
        scales, drawn from a generator seeded with `seed`.
        """
        generator = torch.Generator().manual_seed(int(seed))
        for module in self.modules():
            if isinstance(module, (nn.Linear, nn.Conv3d)):
                fan_in, fan_out = nn.init._calculate_fan_in_and_fan_out(module.weight)
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                with torch.no_grad():
                    module.weight.copy_(
                        (torch.rand(module.weight.shape, generator=generator, dtype=DTYPE) * 2 - 1) * bound)
                    if module.bias is not None:
                        module.bias.zero_()
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    def embed(self, cubes: torch.Tensor) -> torch.Tensor:
        return self.embedding(cubes)

    def decode(self, tokens: torch.Tensor, padding_mask: torch.Tensor = None) -> torch.Tensor:
        n = tokens.shape[1]
        if n > self.config.max_len:
            raise InvalidArgumentError(f"sequence length {n} exceeds max_len {self.config.max_len}")
        if padding_mask is not None and padding_mask.shape != tokens.shape[:2]:
            raise InvalidArgumentError(
                f"padding mask shape {tuple(padding_mask.shape)} does not match tokens {tuple(tokens.shape[:2])}")
        x = tokens + self.positions[:n]
        for block in self.blocks:
            x = block(x, padding_mask)
        return self.head(x)

    def forward(self, cubes: torch.Tensor, padding_mask: torch.Tensor = None) -> torch.Tensor:
        return self.decode(self.embed(cubes), padding_mask)

    def parameter_groups(self) -> dict:
        """Named parameter groups: cnn, attention, ffn, layer_norm, head."""
        groups = {"cnn": [], "attention": [], "ffn": [], "layer_norm": [], "head": []}
        for name, param in self.named_parameters():
            if name.startswith("embedding"):
                groups["cnn"].append((name, param))
            elif ".attention." in name:
                groups["attention"].append((name, param))
            elif ".ffn." in name:
                groups["ffn"].append((name, param))
            elif ".ln" in name:
                groups["layer_norm"].append((name, param))
            else:
                groups["head"].append((name, param))
        return groups


def build_model(config: ModelConfig) -> TractoTransformer:
    model = TractoTransformer(config)
    n_params = sum(p.numel() for p in model.parameters())
    logging.info(f"Built TractoTransformer: {config.n_layers} layers, {config.n_heads} heads, "
                 f"d_model={config.d_model}, K={config.k}, use_cnn3d={config.use_cnn3d}, {n_params} parameters")
    return model


def cubes_to_tensor(cubes) -> torch.Tensor:
    """Stack a list of VoxelCube (or an (n,3,3,3,G) array) into a (1, n, 3, 3, 3, G) tensor."""
    if isinstance(cubes, np.ndarray):
        array = cubes
    else:
        array = np.stack([c.values for c in cubes], axis=0)
    return to_tensor(array)[None]


def embed_sequence(cubes, model: TractoTransformer) -> torch.Tensor:
    """Token matrix (n x d_model) for one cube sequence."""
    return model.embed(cubes_to_tensor(cubes))[0]


def decoder_forward(tokens: torch.Tensor, padding_mask, model: TractoTransformer,
                    train_mode: bool = False) -> torch.Tensor:
    """
    Logits (n x (K+1)) for a single token sequence; dropout only in train_mode.
    """
    model.train(train_mode)
    mask = None if padding_mask is None else to_tensor(padding_mask, torch.bool)[None]
    return model.decode(tokens[None], mask)[0]


def predict_fodf(logits) -> torch.Tensor:
    """Numerically stable softmax over the K+1 classes of each row."""
    logits = to_tensor(logits)
    if not torch.all(torch.isfinite(logits)):
        raise InvalidArgumentError("predict_fodf received non-finite logits")
    shifted = logits - logits.max(dim=-1, keepdim=True).values
    exp = torch.exp(shifted)
    return exp / exp.sum(dim=-1, keepdim=True)
