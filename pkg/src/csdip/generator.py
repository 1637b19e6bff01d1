"""Untrained DCGAN-style generator ``G(z; w)``.

The network is a fixed chain of layers, each one

    conv_transpose2d -> [channel_norm] -> activation

ending in ``tanh`` so pixels stay in [-1, 1]. When the final feature map is
larger than ``output_shape`` it is center-cropped.

All weights live in a single flat float64 vector; per-layer kernels, gains
and biases are views into it. Gradients use the same layout, which is what
the optimizer and the learned regularizer operate on.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T

INIT_STD = 0.02


@dataclass(frozen=True)
class LayerSpec:
    in_channels: int
    out_channels: int
    kernel: int = 4
    stride: int = 2
    pad: int = 1
    normalize: bool = True
    activation: str = "relu"


@dataclass(frozen=True)
class GeneratorConfig:
    latent_dim: int
    layers: tuple[LayerSpec, ...]
    output_shape: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.layers))
        object.__setattr__(self, "output_shape", tuple(int(s) for s in self.output_shape))
        self.validate()

    def validate(self) -> None:
        if not self.layers:
            raise ValueError("generator needs at least one layer")
        if self.layers[0].in_channels != self.latent_dim:
            raise ValueError(
                f"first layer in_channels={self.layers[0].in_channels} "
                f"!= latent_dim={self.latent_dim}")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_channels != b.in_channels:
                raise ValueError(
                    f"layer {i} out_channels={a.out_channels} != layer {i + 1} "
                    f"in_channels={b.in_channels}")
        for i, l in enumerate(self.layers):
            want = "tanh" if i == len(self.layers) - 1 else "relu"
            if l.activation != want:
                raise ValueError(f"layer {i} activation must be {want}, got {l.activation}")
        if self.layers[-1].normalize:
            raise ValueError("the output layer cannot be normalized")
        c, h, w = self.output_shape
        if self.layers[-1].out_channels != c:
            raise ValueError(f"last layer out_channels={self.layers[-1].out_channels} != {c}")
        fh, fw = self.feature_size()
        if fh < h or fw < w:
            raise ValueError(f"layers produce {fh}x{fw}, smaller than output {h}x{w}")
        if (fh - h) % 2 or (fw - w) % 2:
            raise ValueError(f"cannot center-crop {fh}x{fw} to {h}x{w}")

    def feature_size(self) -> tuple[int, int]:
        h = w = 1
        for l in self.layers:
            h, w = T.conv_transpose2d_shape(h, w, l.kernel, l.stride, l.pad)
            if h < 1 or w < 1:
                raise ValueError("layer stack collapses spatial size")
        return h, w

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def to_dict(self) -> dict:
        return {"latent_dim": self.latent_dim,
                "layers": [asdict(l) for l in self.layers],
                "output_shape": list(self.output_shape)}

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(latent_dim=int(d["latent_dim"]),
                   layers=tuple(LayerSpec(**l) for l in d["layers"]),
                   output_shape=tuple(d["output_shape"]))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path) -> "GeneratorConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def dcgan_config(output_shape, latent_dim: int = 128, base_channels: int = 16,
                 max_channels: int = 128, normalize: bool = True) -> GeneratorConfig:
    """Default architecture for an image of ``output_shape`` = (C, H, W).

    A 4x4 stride-1 projection of the 1x1 latent is followed by stride-2
    doublings up to the next power of two >= max(H, W). Hidden widths grow by
    2x per layer towards the input, from ``base_channels`` up to
    ``max_channels``. For 64x64 this gives 128->128->64->32->16->C.
    """
    c, h, w = (int(s) for s in output_shape)
    side = 4
    n_up = 0
    while side < max(h, w):
        side *= 2
        n_up += 1
    hidden = [min(max_channels, base_channels * 2 ** j) for j in range(n_up - 1, -1, -1)]
    if n_up == 0:
        # 4x4 target or smaller: the projection layer itself is the output layer
        specs = [LayerSpec(latent_dim, c, kernel=4, stride=1, pad=0, normalize=False,
                           activation="tanh")]
        return GeneratorConfig(latent_dim, tuple(specs), (c, h, w))
    specs = [LayerSpec(latent_dim, hidden[0], kernel=4, stride=1, pad=0, normalize=normalize)]
    for a, b in zip(hidden, hidden[1:]):
        specs.append(LayerSpec(a, b, normalize=normalize))
    specs.append(LayerSpec(hidden[-1], c, normalize=False, activation="tanh"))
    return GeneratorConfig(latent_dim, tuple(specs), (c, h, w))


def _layout(config: GeneratorConfig):
    """Slices of the flat weight vector: list of dicts name -> (slice, shape)."""
    offset = 0
    layout = []
    for l in config.layers:
        entry = {}
        shapes = {"kernel": (l.in_channels, l.out_channels, l.kernel, l.kernel)}
        if l.normalize:
            shapes["gain"] = (l.out_channels,)
            shapes["bias"] = (l.out_channels,)
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            entry[name] = (slice(offset, offset + size), shape)
            offset += size
        layout.append(entry)
    return layout, offset


@dataclass(frozen=True, eq=False)
class GeneratorWeights:
    """Weights of every layer, stored as one flat vector."""

    config: GeneratorConfig
    flat: np.ndarray
    _layout: list = field(init=False, repr=False)

    def __post_init__(self):
        layout, size = _layout(self.config)
        flat = np.asarray(self.flat, dtype=np.float64)
        if flat.shape != (size,):
            raise ValueError(f"expected {size} weights for this config, got {flat.shape}")
        object.__setattr__(self, "flat", flat)
        object.__setattr__(self, "_layout", layout)

    def _view(self, layer: int, name: str):
        entry = self._layout[layer]
        if name not in entry:
            return None
        sl, shape = entry[name]
        return self.flat[sl].reshape(shape)

    def kernel(self, layer: int) -> np.ndarray:
        return self._view(layer, "kernel")

    def gain(self, layer: int):
        return self._view(layer, "gain")

    def bias(self, layer: int):
        return self._view(layer, "bias")

    @property
    def layer_count(self) -> int:
        return self.config.layer_count

    def layer_index(self) -> np.ndarray:
        """Layer id of every entry of ``flat`` (gains and biases included)."""
        idx = np.empty(self.flat.size, dtype=np.int64)
        for l, entry in enumerate(self._layout):
            for sl, _ in entry.values():
                idx[sl] = l
        return idx

    def layer_slices(self) -> list[list[slice]]:
        return [[sl for sl, _ in entry.values()] for entry in self._layout]

    def layer_values(self, layer: int) -> np.ndarray:
        return np.concatenate([self.flat[sl] for sl in self.layer_slices()[layer]])

    def with_flat(self, flat: np.ndarray) -> "GeneratorWeights":
        return GeneratorWeights(self.config, flat)

    def copy(self) -> "GeneratorWeights":
        return GeneratorWeights(self.config, self.flat.copy())


def weight_count(config: GeneratorConfig) -> int:
    return _layout(config)[1]


def init_weights(config: GeneratorConfig, seed: int) -> GeneratorWeights:
    """Kernels i.i.d. N(0, 0.02^2); normalization gains 1 and biases 0."""
    config.validate()
    layout, size = _layout(config)
    rng = np.random.default_rng(seed)
    flat = np.zeros(size)
    for entry in layout:
        sl, shape = entry["kernel"]
        flat[sl] = rng.standard_normal(int(np.prod(shape))) * INIT_STD
        if "gain" in entry:
            flat[entry["gain"][0]] = 1.0
    return GeneratorWeights(config, flat)


@dataclass(frozen=True, eq=False)
class LatentSeed:
    z: np.ndarray
    seed: int

    def __post_init__(self):
        z = np.array(self.z, dtype=np.float64)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)


def make_latent(latent_dim: int, seed) -> LatentSeed:
    rng = np.random.default_rng(seed)
    return LatentSeed(rng.standard_normal((latent_dim, 1, 1)), seed)


def _crop_offsets(config: GeneratorConfig):
    fh, fw = config.feature_size()
    _, h, w = config.output_shape
    return (fh - h) // 2, (fw - w) // 2


def _latent_array(config, z) -> np.ndarray:
    z = z.z if isinstance(z, LatentSeed) else np.asarray(z, dtype=np.float64)
    if z.size != config.latent_dim:
        raise ValueError(f"latent has {z.size} entries, config expects {config.latent_dim}")
    return z.reshape(config.latent_dim, 1, 1)


def _forward_cached(weights: GeneratorWeights, z):
    config = weights.config
    x = _latent_array(config, z)
    cache = []
    for i, spec in enumerate(config.layers):
        pre = T.conv_transpose2d(x, weights.kernel(i), spec.stride, spec.pad)
        norm_cache = None
        act_in = pre
        if spec.normalize:
            act_in, norm_cache = T.channel_norm_with_cache(pre, weights.gain(i), weights.bias(i))
        out = T.activation(act_in, spec.activation)
        cache.append((x, pre, act_in, norm_cache))
        x = out
    top, left = _crop_offsets(config)
    _, h, w = config.output_shape
    return x[:, top:top + h, left:left + w], cache


def forward(weights: GeneratorWeights, z) -> np.ndarray:
    """Synthesize the (C, H, W) image ``G(z; w)``."""
    return _forward_cached(weights, z)[0]


def forward_backward(weights: GeneratorWeights, z, grad_fn):
    """Run forward, obtain the output gradient from ``grad_fn(image)`` and
    backpropagate it. Returns ``(image, extra, grad_flat)`` where ``grad_fn``
    returns ``(grad_image, extra)``."""
    image, cache = _forward_cached(weights, z)
    grad_image, extra = grad_fn(image)
    return image, extra, _backward_from_cache(weights, cache, grad_image)


def backward(weights: GeneratorWeights, z, grad_output) -> np.ndarray:
    """Gradient of ``<G(z; w), grad_output>`` with respect to the flat weights."""
    _, cache = _forward_cached(weights, z)
    return _backward_from_cache(weights, cache, grad_output)


def _backward_from_cache(weights, cache, grad_output) -> np.ndarray:
    config = weights.config
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if grad_output.shape != config.output_shape:
        raise ValueError(
            f"grad_output shape {grad_output.shape} != output shape {config.output_shape}")
    grads = GeneratorWeights(config, np.zeros_like(weights.flat))
    fh, fw = config.feature_size()
    top, left = _crop_offsets(config)
    _, h, w = config.output_shape
    g = np.zeros((config.output_shape[0], fh, fw))
    g[:, top:top + h, left:left + w] = grad_output
    for i in range(config.layer_count - 1, -1, -1):
        spec = config.layers[i]
        x_in, pre, act_in, norm_cache = cache[i]
        g = T.activation_backward(act_in, g, spec.activation)
        if spec.normalize:
            g, dgain, dbias = T.channel_norm_backward(
                pre, weights.gain(i), weights.bias(i), g, cache=norm_cache)
            grads.gain(i)[...] = dgain
            grads.bias(i)[...] = dbias
        g, dk = T.conv_transpose2d_backward(x_in, weights.kernel(i), g, spec.stride, spec.pad)
        grads.kernel(i)[...] = dk
    return T.check_finite(grads.flat, "generator backward")
