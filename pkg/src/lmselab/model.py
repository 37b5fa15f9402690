"""Convolutional auto-encoder used for reconstruction-based anomaly scoring.

Layer plan for the default config (28x28 single-channel input)::

    conv 1->16  k3 s2 p1   28 -> 14   relu
    conv 16->32 k3 s2 p1   14 -> 7    relu
    conv 32->64 k3 s2 p1    7 -> 4    relu
    flatten 1024 -> dense latent_dim         (linear)
    dense latent_dim -> 1024, reshape 64x4x4  relu
    convT 64->32 k3 s2 p1 op0   4 -> 7    relu
    convT 32->16 k3 s2 p1 op1   7 -> 14   relu
    convT 16->1  k3 s2 p1 op1  14 -> 28   sigmoid

Output paddings (``op``) are derived from the encoder extents so the decoder
lands exactly on the input size.
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .rng import Xoshiro256
from .tensor import Tensor

CHECKPOINT_FORMAT = "lmselab-cae"
CHECKPOINT_VERSION = 1
INIT_STREAM = 1


@dataclass(frozen=True)
class CaeConfig:
    encoder_channels: tuple[int, ...] = (16, 32, 64)
    kernel: int = 3
    latent_dim: int = 16
    output_activation: str = "sigmoid"
    image_size: int = 28
    in_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        if not self.encoder_channels:
            raise ValueError("need at least one encoder stage")
        if self.output_activation != "sigmoid":
            raise ValueError("only a sigmoid output head keeps reconstructions in (0, 1)")

    @property
    def padding(self) -> int:
        return self.kernel // 2

    def extents(self) -> list[int]:
        """Spatial extent before each encoder stage plus the bottleneck extent."""
        sizes = [self.image_size]
        for _ in self.encoder_channels:
            s = (sizes[-1] + 2 * self.padding - self.kernel) // 2 + 1
            if s < 1:
                raise ValueError("image too small for the encoder depth")
            sizes.append(s)
        return sizes

    def output_paddings(self) -> list[int]:
        """Output padding for each decoder stage, deepest first."""
        sizes = self.extents()
        ops = []
        for i in range(len(sizes) - 1, 0, -1):
            base = (sizes[i] - 1) * 2 - 2 * self.padding + self.kernel
            op = sizes[i - 1] - base
            if op not in (0, 1):
                raise ValueError(f"decoder cannot reach extent {sizes[i - 1]} from {sizes[i]}")
            ops.append(op)
        return ops

    @property
    def flat_dim(self) -> int:
        return self.encoder_channels[-1] * self.extents()[-1] ** 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_channels"] = list(self.encoder_channels)
        return d


def layer_shapes(config: CaeConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) of every parameter tensor."""
    k = config.kernel
    chans = (config.in_channels,) + config.encoder_channels
    shapes = []
    for i in range(len(config.encoder_channels)):
        shapes.append((f"enc{i + 1}.weight", (chans[i + 1], chans[i], k, k)))
        shapes.append((f"enc{i + 1}.bias", (chans[i + 1],)))
    shapes.append(("latent.weight", (config.flat_dim, config.latent_dim)))
    shapes.append(("latent.bias", (config.latent_dim,)))
    shapes.append(("expand.weight", (config.latent_dim, config.flat_dim)))
    shapes.append(("expand.bias", (config.flat_dim,)))
    rev = chans[::-1]
    for i in range(len(config.encoder_channels)):
        shapes.append((f"dec{i + 1}.weight", (rev[i], rev[i + 1], k, k)))
        shapes.append((f"dec{i + 1}.bias", (rev[i + 1],)))
    return shapes


def parameter_count(config: CaeConfig) -> int:
    return sum(math.prod(s) for _, s in layer_shapes(config))


def _fan_in(name: str, shape) -> int:
    if name.startswith(("enc", "dec")):
        return shape[0 if name.startswith("dec") else 1] * shape[2] * shape[3]
    return shape[0]


@dataclass
class CaeModel:
    config: CaeConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def __call__(self, batch) -> Tensor:
        return forward(self, batch)

    def encode(self, batch) -> Tensor:
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        p, cfg = self.params, self.config
        for i, c in enumerate(cfg.encoder_channels):
            x = T.conv2d(x, p[f"enc{i + 1}.weight"], stride=2, padding=cfg.padding)
            x = T.relu(x + p[f"enc{i + 1}.bias"].reshape(1, c, 1, 1))
        x = x.reshape(x.shape[0], cfg.flat_dim)
        return T.matmul(x, p["latent.weight"]) + p["latent.bias"]

    def decode(self, z: Tensor) -> Tensor:
        p, cfg = self.params, self.config
        side = cfg.extents()[-1]
        x = T.relu(T.matmul(z, p["expand.weight"]) + p["expand.bias"])
        x = x.reshape(x.shape[0], cfg.encoder_channels[-1], side, side)
        ops = cfg.output_paddings()
        n_stages = len(cfg.encoder_channels)
        for i in range(n_stages):
            w = p[f"dec{i + 1}.weight"]
            b = p[f"dec{i + 1}.bias"]
            x = T.conv2d_transpose(x, w, stride=2, padding=cfg.padding, output_padding=ops[i])
            x = x + b.reshape(1, w.shape[1], 1, 1)
            x = T.relu(x) if i < n_stages - 1 else T.sigmoid(x)
        return x


def build_cae(config: CaeConfig | None = None, seed: int = 0) -> CaeModel:
    """Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    config = config or CaeConfig()
    rng = Xoshiro256(seed, stream=INIT_STREAM)
    params = {}
    for name, shape in layer_shapes(config):
        if name.endswith(".bias"):
            data = np.zeros(shape)
        else:
            bound = math.sqrt(6.0 / _fan_in(name, shape))
            data = rng.uniform(-bound, bound, shape)
        params[name] = Tensor(data, requires_grad=True)
    return CaeModel(config, params)


def forward(model: CaeModel, batch) -> Tensor:
    """Reconstruct an (N, C, H, W) batch; output has the same shape, values in (0, 1)."""
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    cfg = model.config
    want = (cfg.in_channels, cfg.image_size, cfg.image_size)
    if x.ndim != 4 or x.shape[1:] != want:
        raise T.DimensionError(f"expected batch of shape (N, {', '.join(map(str, want))}), got {x.shape}")
    return model.decode(model.encode(x))


def save_checkpoint(model: CaeModel, path) -> None:
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "params": [
            {
                "name": name,
                "shape": list(p.shape),
                "dtype": "float64-le",
                "data": base64.b64encode(p.data.astype("<f8").tobytes()).decode("ascii"),
            }
            for name, p in model.params.items()
        ],
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh)


def load_checkpoint(path) -> CaeModel:
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a CAE checkpoint")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {manifest.get('version')}")
    config = CaeConfig(**manifest["config"])
    expected = dict(layer_shapes(config))
    params = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        if expected.get(entry["name"]) != shape:
            raise ValueError(f"{path}: parameter {entry['name']} has unexpected shape {shape}")
        raw = base64.b64decode(entry["data"])
        params[entry["name"]] = Tensor(np.frombuffer(raw, dtype="<f8").reshape(shape), requires_grad=True)
    if set(params) != set(expected):
        raise ValueError(f"{path}: parameter set does not match config")
    return CaeModel(config, {name: params[name] for name in expected})
