"""File formats: array containers, 8-bit images, loss traces and manifests.

A container is one line of UTF-8 JSON (the header) followed by the raw
little-endian float64 payload. ``header["arrays"]`` lists ``{name, shape}``
in payload order.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .generator import GeneratorConfig, GeneratorWeights, LatentSeed

DTYPE = "f64le"


def write_container(path, header: dict, arrays: dict) -> None:
    header = dict(header)
    header["dtype"] = DTYPE
    header["arrays"] = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for v in arrays.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_container(path) -> tuple[dict, dict]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("dtype") != DTYPE:
            raise ValueError(f"{path}: unsupported dtype {header.get('dtype')!r}")
        arrays = {}
        for spec in header.get("arrays", []):
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(8 * count)
            if len(raw) != 8 * count:
                raise ValueError(f"{path}: truncated payload for {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes after payload")
    return header, arrays


def save_weights(path, weights: GeneratorWeights, latent: LatentSeed | None = None,
                 meta: dict | None = None) -> None:
    header = {"kind": "generator_weights", "config": weights.config.to_dict(), **(meta or {})}
    arrays = {"w": weights.flat}
    if latent is not None:
        arrays["z"] = latent.z
        header["latent_seed"] = list(np.atleast_1d(latent.seed).tolist())
    write_container(path, header, arrays)


def load_weights(path) -> GeneratorWeights:
    header, arrays = read_container(path)
    if header.get("kind") != "generator_weights":
        raise ValueError(f"{path}: not a generator weights container")
    return GeneratorWeights(GeneratorConfig.from_dict(header["config"]), arrays["w"])


def pixels_to_signal(v) -> np.ndarray:
    """8-bit values 0..255 to [-1, 1] via 2 v / 255 - 1."""
    return 2.0 * np.asarray(v, dtype=np.float64) / 255.0 - 1.0


def signal_to_pixels(x) -> np.ndarray:
    """Inverse of :func:`pixels_to_signal`, rounding half away from zero and clipping."""
    v = (np.asarray(x, dtype=np.float64) + 1.0) * 127.5
    v = np.sign(v) * np.floor(np.abs(v) + 0.5)
    return np.clip(v, 0, 255).astype(np.uint8)


def load_image(path) -> np.ndarray:
    """Read a PNG/PGM (grayscale or RGB) into a (C, H, W) array in [-1, 1]."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if "A" in img.mode or img.mode == "P" else "L")
        arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = np.moveaxis(arr, -1, 0)
    return pixels_to_signal(arr)


def save_image(path, x) -> None:
    x = np.asarray(x)
    if x.ndim == 3 and x.shape[0] == 1:
        x = x[0]
    elif x.ndim == 3:
        x = np.moveaxis(x, 0, -1)
    Image.fromarray(signal_to_pixels(x)).save(path)


def mse(x_hat, x_true) -> float:
    """Per-pixel mean squared error ``||x_hat - x_true||^2 / n``."""
    a = np.asarray(x_hat, dtype=np.float64)
    b = np.asarray(x_true, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = (a - b).ravel()
    return float(d @ d) / d.size


def write_trace(path, measurement_loss, objective) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "measurement_loss", "objective"])
        for i, (a, b) in enumerate(zip(measurement_loss, objective)):
            w.writerow([i, repr(float(a)), repr(float(b))])


def write_manifest(path, command: str, **fields) -> dict:
    manifest = {"command": command, "version": __version__, **fields}
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable))
    return manifest


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
