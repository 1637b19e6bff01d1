"""Lasso in a 2D DCT basis, solved with FISTA.

    min_c  1/2 ||y - A idct2(c)||^2 + lam ||c||_1
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from . import linops

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = tuple(np.logspace(-4, 0, 9))


@dataclass(frozen=True)
class DctBasis:
    height: int
    width: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class LassoConfig:
    lam: float = 1e-2
    iterations: int = 2000
    tolerance: float = 1e-10
    monotone: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def dct2(x) -> np.ndarray:
    """Orthonormal type-II 2D DCT."""
    return sfft.dctn(np.asarray(x, dtype=np.float64), type=2, norm="ortho")


def idct2(c) -> np.ndarray:
    return sfft.idctn(np.asarray(c, dtype=np.float64), type=2, norm="ortho")


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def operator_norm_sq(op, shape, iters: int = 100, seed: int = 0) -> float:
    """Largest eigenvalue of A^T A by power iteration (capped at ``iters``)."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(int(np.prod(shape)))
    v /= np.linalg.norm(v)
    est = 0.0
    for i in range(iters):
        w = linops.adjoint(op, linops.apply(op, v)).ravel()
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= 1e-12 * new:
            return new
        est = new
    log.debug("power iteration hit the %d-iteration cap; using estimate %.6g", iters, est)
    return est


def fista(y, op, basis: DctBasis, config: LassoConfig):
    """Return ``(coefficients, measurement_loss_history, objective_history)``."""
    y = np.asarray(y, dtype=np.float64).ravel()
    shape = basis.shape

    def synth(c):
        return linops.apply(op, idct2(c))

    def losses(c):
        r = y - synth(c)
        fit = float(r @ r)
        return fit, 0.5 * fit + config.lam * float(np.abs(c).sum())

    # small margin: the power-iteration estimate approaches from below
    lip = operator_norm_sq(op, shape) * 1.001
    c = np.zeros(shape)
    mloss, obj = losses(c)
    mhist, history = [mloss], [obj]
    if lip == 0.0:
        return c, mhist, history
    step = 1.0 / lip
    momentum_pt = c.copy()
    t = 1.0
    for _ in range(config.iterations):
        r = y - synth(momentum_pt)
        grad = -dct2(linops.adjoint(op, r).reshape(shape))
        cand = soft_threshold(momentum_pt - step * grad, step * config.lam)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if config.monotone:
            new = cand if losses(cand)[1] <= history[-1] else c
            momentum_pt = new + (t / t_next) * (cand - new) + ((t - 1.0) / t_next) * (new - c)
        else:
            new = cand
            momentum_pt = new + ((t - 1.0) / t_next) * (new - c)
        delta = np.linalg.norm(new - c)
        scale = max(1.0, float(np.linalg.norm(c)))
        c, t = new, t_next
        mloss, obj = losses(c)
        mhist.append(mloss)
        history.append(obj)
        if delta <= config.tolerance * scale and not config.monotone:
            break
    return c, mhist, history


def lasso_recover(y, op, basis: DctBasis, config: LassoConfig = LassoConfig()) -> np.ndarray:
    """Reconstruct an image of ``basis.shape`` from Gaussian measurements."""
    if not isinstance(op, linops.GaussianOperator):
        raise TypeError(f"Lasso-DCT baseline needs a Gaussian operator, got {op.kind}")
    if op.n != basis.height * basis.width:
        raise ValueError(f"operator has n={op.n}, basis is {basis.height}x{basis.width}")
    return idct2(fista(y, op, basis, config)[0])


def lasso_grid(y, op, basis: DctBasis, lambdas=DEFAULT_LAMBDAS,
               config: LassoConfig = LassoConfig()):
    """Sweep lambda, keep the reconstruction with the smallest measurement loss.

    Returns ``(best_lambda, best_image, table)``; ``table`` rows are
    ``(lambda, measurement_loss, image)``.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    table = []
    for lam in lambdas:
        x = lasso_recover(y, op, basis, LassoConfig(
            float(lam), config.iterations, config.tolerance, config.monotone))
        r = y - linops.apply(op, x)
        table.append((float(lam), float(r @ r), x))
    best = min(table, key=lambda row: row[1])
    return best[0], best[2], table
