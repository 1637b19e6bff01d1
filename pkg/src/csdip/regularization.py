"""Image and weight regularizers.

``tv`` is anisotropic total variation with a sign subgradient. ``lr_penalty``
is the learned quadratic prior on generator weights, where every weight of
layer ``l`` is modeled as N(mu[l], sigma_diag[l]). ``estimate_prior`` fits
those layer statistics from previously solved weight sets by repeated
sampling.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .generator import GeneratorWeights

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class PriorStats:
    mu: np.ndarray
    sigma_diag: np.ndarray
    source_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).ravel()
        sigma = np.asarray(self.sigma_diag, dtype=np.float64).ravel()
        if mu.shape != sigma.shape:
            raise ValueError(f"mu has {mu.size} layers but sigma_diag has {sigma.size}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_diag", np.maximum(sigma, SIGMA_FLOOR))

    @property
    def layer_count(self) -> int:
        return self.mu.size

    @classmethod
    def standard(cls, layers: int) -> "PriorStats":
        """mu = 0, unit variance: the penalty reduces to ``||w||^2``."""
        return cls(np.zeros(layers), np.ones(layers), {"kind": "standard"})

    def to_dict(self) -> dict:
        return {"L": self.layer_count, "mu": self.mu.tolist(),
                "sigma_diag": self.sigma_diag.tolist(), "meta": self.source_meta}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorStats":
        stats = cls(d["mu"], d["sigma_diag"], d.get("meta", {}))
        if "L" in d and int(d["L"]) != stats.layer_count:
            raise ValueError(f"L={d['L']} does not match {stats.layer_count} layer entries")
        return stats

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path) -> "PriorStats":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def tv(image) -> tuple[float, np.ndarray]:
    """Anisotropic total variation of a (C, H, W) image and its subgradient."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"tv expects (C, H, W), got shape {x.shape}")
    if x.shape[1] * x.shape[2] < 2:
        raise ValueError(f"tv is undefined for a single-pixel image {x.shape}")
    dv = np.diff(x, axis=1)
    dh = np.diff(x, axis=2)
    value = float(np.abs(dv).sum() + np.abs(dh).sum())
    sv, sh = np.sign(dv), np.sign(dh)
    grad = np.zeros_like(x)
    grad[:, 1:, :] += sv
    grad[:, :-1, :] -= sv
    grad[:, :, 1:] += sh
    grad[:, :, :-1] -= sh
    return value, grad.reshape(np.shape(image))


def lr_penalty(weights: GeneratorWeights, stats: PriorStats) -> tuple[float, np.ndarray]:
    """``sum_l sum_{i in l} (w_i - mu_l)^2 / sigma_l`` and its gradient (flat)."""
    if stats.layer_count != weights.layer_count:
        raise ValueError(
            f"prior has {stats.layer_count} layers, generator has {weights.layer_count}")
    idx = weights.layer_index()
    centered = weights.flat - stats.mu[idx]
    inv = 1.0 / stats.sigma_diag[idx]
    value = float(np.dot(centered * inv, centered))
    return value, 2.0 * centered * inv


def _uniform_draw(rng: np.random.Generator, pool: np.ndarray, size: int) -> np.ndarray:
    return pool[rng.integers(0, pool.size, size=size)]


def estimate_prior(weight_sets, S: int, T: int, seed: int, draw=None) -> PriorStats:
    """Fit per-layer (mu, sigma) from ``weight_sets`` by repeated sampling.

    Each of ``T`` iterations picks one weight set uniformly, draws ``S``
    weights with replacement from every layer into the rows of ``M``, and
    forms ``mu_t`` (row means) and ``Sigma_t = M M^T / S - mu_t mu_t^T``.
    The result averages over iterations and keeps the diagonal of Sigma.

    ``draw(rng, pool, S)`` overrides the per-layer sampler; rows of ``M`` may
    then have different lengths, in which case only the diagonal is formed.
    """
    weight_sets = list(weight_sets)
    if not weight_sets:
        raise ValueError("estimate_prior needs at least one weight set")
    if S < 1 or (draw is None and S < 2):
        raise ValueError(f"S must be >= 2, got {S}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    config = weight_sets[0].config
    for w in weight_sets[1:]:
        if w.config != config:
            raise ValueError("all weight sets must share one architecture")
    draw = draw or _uniform_draw
    L = config.layer_count
    pools = [[w.layer_values(l) for l in range(L)] for w in weight_sets]

    rng = np.random.default_rng(seed)
    mu_sum = np.zeros(L)
    sigma_sum = np.zeros((L, L))
    rectangular = True
    for _ in range(T):
        q = int(rng.integers(0, len(weight_sets)))
        rows = [np.asarray(draw(rng, pools[q][l], S), dtype=np.float64) for l in range(L)]
        mu_t = np.array([r.mean() for r in rows])
        if len({r.size for r in rows}) == 1:
            M = np.stack(rows)
            sigma_t = M @ M.T / M.shape[1] - np.outer(mu_t, mu_t)
        else:
            rectangular = False
            sigma_t = np.diag([np.mean(r * r) for r in rows] - mu_t ** 2)
        mu_sum += mu_t
        sigma_sum += sigma_t
    mu = mu_sum / T
    sigma = sigma_sum / T
    if rectangular and L > 1:
        off = sigma[~np.eye(L, dtype=bool)]
        log.debug("estimate_prior: discarding off-diagonal covariance, max |entry| %.3g",
                  np.abs(off).max())
    meta = {"Q": len(weight_sets), "S": S, "T": T, "seed": seed}
    return PriorStats(mu, np.diag(sigma).copy(), meta)
