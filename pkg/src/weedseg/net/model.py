"""Encoder-decoder pixel classifier with pooling-index unpooling.

Encoder block i: conv3x3 -> ReLU -> 2x2 max-pool (indices kept).
Decoder block i (mirrored): unpool with block i's indices -> conv3x3 -> ReLU.
A final conv3x3 maps to class logits, followed by a per-pixel softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..balance import ClassWeights
from ..errors import InvariantError, ShapeMismatchError
from ..imgcore import NUM_CLASSES, MultispectralFrame, ProbabilityMap, network_input
from . import layers


@dataclass(frozen=True)
class NetworkConfig:
    in_channels: int = 3
    num_classes: int = NUM_CLASSES
    encoder_blocks: tuple[int, ...] = (16, 32)
    kernel: int = 3
    pool_factor: int = 2
    seed: int = 0
    class_weights: ClassWeights = field(default_factory=ClassWeights.uniform)
    input_mean: tuple[float, ...] | None = None
    input_std: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.in_channels < 1:
            raise InvariantError(f"in_channels must be >= 1, got {self.in_channels}")
        if not self.encoder_blocks:
            raise InvariantError("need at least one encoder block")
        if self.pool_factor != 2:
            raise InvariantError("only 2x2 pooling is supported")
        if self.kernel % 2 != 1:
            raise InvariantError("kernel size must be odd")
        object.__setattr__(self, "encoder_blocks", tuple(int(c) for c in self.encoder_blocks))
        for name in ("input_mean", "input_std"):
            v = getattr(self, name)
            if v is not None:
                v = tuple(float(a) for a in v)
                if len(v) != self.in_channels:
                    raise InvariantError(f"{name} has {len(v)} entries for {self.in_channels} channels")
                object.__setattr__(self, name, v)

    @property
    def depth(self) -> int:
        return len(self.encoder_blocks)

    @property
    def size_multiple(self) -> int:
        return self.pool_factor ** self.depth

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Parameter names and shapes in a fixed order."""
        k = self.kernel
        shapes = []
        prev = self.in_channels
        for i, ch in enumerate(self.encoder_blocks):
            shapes += [(f"enc{i}.w", (ch, prev, k, k)), (f"enc{i}.b", (ch,))]
            prev = ch
        for i in reversed(range(self.depth)):
            out = self.encoder_blocks[i - 1] if i > 0 else self.encoder_blocks[0]
            shapes += [(f"dec{i}.w", (out, self.encoder_blocks[i], k, k)), (f"dec{i}.b", (out,))]
        shapes += [
            ("cls.w", (self.num_classes, self.encoder_blocks[0], k, k)),
            ("cls.b", (self.num_classes,)),
        ]
        return shapes

    def to_json(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "num_classes": self.num_classes,
            "encoder_blocks": list(self.encoder_blocks),
            "kernel": self.kernel,
            "pool_factor": self.pool_factor,
            "seed": self.seed,
            "class_weights": self.class_weights.to_json(),
            "input_mean": list(self.input_mean) if self.input_mean is not None else None,
            "input_std": list(self.input_std) if self.input_std is not None else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkConfig":
        obj = dict(obj)
        obj["class_weights"] = ClassWeights.from_json(obj["class_weights"])
        obj["encoder_blocks"] = tuple(obj["encoder_blocks"])
        return cls(**obj)


def init_params(cfg: NetworkConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    """He-uniform weights (limit sqrt(6 / fan_in)), zero biases, seeded."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in cfg.layer_shapes():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            lim = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-lim, lim, size=shape).astype(dtype)
    return params


def _normalize(x: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    if cfg.input_mean is None:
        return x
    mean = np.asarray(cfg.input_mean, dtype=x.dtype)[None, :, None, None]
    std = np.asarray(cfg.input_std, dtype=x.dtype)[None, :, None, None]
    return (x - mean) / std


def check_input(x: np.ndarray, cfg: NetworkConfig) -> None:
    if x.ndim != 4:
        raise ShapeMismatchError(f"network input must be (N, C, H, W), got {x.shape}")
    if x.shape[1] != cfg.in_channels:
        raise ShapeMismatchError(f"input has {x.shape[1]} channels, network expects {cfg.in_channels}")
    m = cfg.size_multiple
    if x.shape[2] % m or x.shape[3] % m:
        raise ShapeMismatchError(
            f"spatial dims {x.shape[2]}x{x.shape[3]} must be multiples of {m} for {cfg.depth} pooling stages"
        )


def forward(params: dict, x: np.ndarray, cfg: NetworkConfig, keep_cache: bool = False):
    """Logits for a batch.  Returns ``(logits, cache)``; cache is None unless requested."""
    check_input(x, cfg)
    dtype = params["cls.w"].dtype
    h = _normalize(x.astype(dtype, copy=False), cfg)
    cache = [] if keep_cache else None
    indices = []
    for i in range(cfg.depth):
        z, cols = layers.conv2d_forward(h, params[f"enc{i}.w"], params[f"enc{i}.b"])
        a = layers.relu(z)
        p, idx = layers.maxpool2x2(a)
        indices.append(idx)
        if keep_cache:
            cache.append(("enc", i, h, cols, z, idx))
        h = p
    for i in reversed(range(cfg.depth)):
        u = layers.unpool2x2(h, indices[i])
        z, cols = layers.conv2d_forward(u, params[f"dec{i}.w"], params[f"dec{i}.b"])
        if keep_cache:
            cache.append(("dec", i, u, cols, z, indices[i]))
        h = layers.relu(z)
    logits, cols = layers.conv2d_forward(h, params["cls.w"], params["cls.b"])
    if keep_cache:
        cache.append(("cls", 0, h, cols, None, None))
    return logits, cache


def backward(params: dict, cache: list, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    grads = {}
    g = grad_logits
    for kind, i, inp, cols, z, idx in reversed(cache):
        if kind == "cls":
            g, grads["cls.w"], grads["cls.b"] = layers.conv2d_backward(inp, params["cls.w"], g, cols=cols)
        elif kind == "dec":
            g = layers.relu_backward(z, g)
            g, grads[f"dec{i}.w"], grads[f"dec{i}.b"] = layers.conv2d_backward(inp, params[f"dec{i}.w"], g, cols=cols)
            g = layers.unpool2x2_backward(idx, g)
        else:
            g = layers.maxpool2x2_backward(idx, g)
            g = layers.relu_backward(z, g)
            g, grads[f"enc{i}.w"], grads[f"enc{i}.b"] = layers.conv2d_backward(inp, params[f"enc{i}.w"], g, cols=cols)
    return grads


def loss_and_grads(params: dict, x: np.ndarray, target: np.ndarray, cfg: NetworkConfig):
    logits, cache = forward(params, x, cfg, keep_cache=True)
    probs = layers.softmax_per_pixel(logits)
    loss, gl = layers.weighted_cross_entropy(probs, target, cfg.class_weights)
    return loss, backward(params, cache, gl), probs


def predict_probs(params: dict, x: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    """Class probabilities ``(N, num_classes, H, W)`` in float64."""
    logits, _ = forward(params, x, cfg)
    return layers.softmax_per_pixel(logits.astype(np.float64))


def infer(frame: MultispectralFrame, params: dict, cfg: NetworkConfig) -> ProbabilityMap:
    x = network_input(frame, cfg.in_channels)[None]
    return ProbabilityMap(predict_probs(params, x, cfg)[0])


def with_input_stats(cfg: NetworkConfig, xs) -> NetworkConfig:
    """Set per-channel standardization from a set of ``(C, H, W)`` inputs."""
    stack = np.concatenate([np.asarray(x, dtype=np.float64).reshape(x.shape[0], -1) for x in xs], axis=1)
    mean = stack.mean(axis=1)
    std = stack.std(axis=1)
    std = np.where(std > 1e-8, std, 1.0)
    return replace(cfg, input_mean=tuple(mean), input_std=tuple(std))
