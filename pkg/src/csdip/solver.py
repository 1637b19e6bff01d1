"""Fit generator weights to measurements.

Minimizes ``||y - A G(z; w)||^2 + lambda_T TV(G(z; w)) + lambda_L LR(w)``
with RMSProp plus momentum. Each restart draws its own weights and latent
seed. The returned image is the iterate with the smallest measurement loss
among the last ``stop_window`` steps. Only ``y`` and the operator are ever
consulted, never a ground-truth image.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import generator as gen
from . import linops
from .parallel import pmap
from .regularization import PriorStats, lr_penalty, tv
from .tensor import NonFiniteError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    steps: int = 1000
    lambda_T: float = 0.01
    lambda_L: float = 0.0
    restarts: int = 1
    stop_window: int = 20
    rms_decay: float = 0.99
    rms_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.steps < self.stop_window:
            raise ValueError(f"steps={self.steps} must be >= stop_window={self.stop_window}")
        if self.stop_window < 1 or self.restarts < 1:
            raise ValueError("stop_window and restarts must be >= 1")
        if self.learning_rate <= 0 or self.rms_eps <= 0 or not 0 < self.rms_decay < 1:
            raise ValueError("learning_rate, rms_eps and rms_decay must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.lambda_T < 0 or self.lambda_L < 0:
            raise ValueError("regularization weights must be >= 0")


@dataclass
class ReconstructionResult:
    image: np.ndarray
    measurement_loss_trace: np.ndarray
    objective_trace: np.ndarray
    chosen_step: int
    restart_index: int
    final_objective: float
    weights: gen.GeneratorWeights
    latent: gen.LatentSeed
    restart_losses: list = field(default_factory=list)


@dataclass
class RMSPropState:
    square_avg: np.ndarray
    momentum_buf: np.ndarray

    @classmethod
    def zeros(cls, size: int) -> "RMSPropState":
        return cls(np.zeros(size), np.zeros(size))


def rmsprop_update(w: np.ndarray, g: np.ndarray, state: RMSPropState,
                   config: SolverConfig) -> tuple[np.ndarray, RMSPropState]:
    """One step of

        s <- rho s + (1 - rho) g^2
        b <- momentum b + g / sqrt(s + eps)
        w <- w - lr b
    """
    if g.shape != w.shape or state.square_avg.shape != w.shape:
        raise ValueError(
            f"shape mismatch: weights {w.shape}, grads {g.shape}, state {state.square_avg.shape}")
    s = config.rms_decay * state.square_avg + (1.0 - config.rms_decay) * g * g
    b = config.momentum * state.momentum_buf + g / np.sqrt(s + config.rms_eps)
    return w - config.learning_rate * b, RMSPropState(s, b)


def _residual_grad(op, y, image):
    """Measurement loss ``||y - A x||^2`` and its gradient w.r.t. the image."""
    r = y - linops.apply(op, image)
    return float(r @ r), (-2.0 * linops.adjoint(op, r)).reshape(image.shape)


def objective_and_grad(weights: gen.GeneratorWeights, z, y, op,
                       lambda_T: float = 0.0, lambda_L: float = 0.0,
                       stats: PriorStats | None = None):
    """Return ``(objective, measurement_loss, grad_flat)``."""
    return _evaluate(weights, z, y, op, lambda_T, lambda_L, stats)[:3]


def _evaluate(weights, z, y, op, lambda_T, lambda_L, stats):
    if lambda_L > 0 and stats is None:
        raise ValueError("lambda_L > 0 requires prior stats")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != op.out_size:
        raise ValueError(f"y has {y.size} entries, operator produces {op.out_size}")

    def image_grad(image):
        mloss, g = _residual_grad(op, y, image)
        tv_val = 0.0
        if lambda_T > 0:
            tv_val, tv_g = tv(image)
            g = g + lambda_T * tv_g
        return g, (mloss, tv_val)

    image, (mloss, tv_val), grad = gen.forward_backward(weights, z, image_grad)
    objective = mloss + lambda_T * tv_val
    if lambda_L > 0:
        lr_val, lr_g = lr_penalty(weights, stats)
        objective += lambda_L * lr_val
        grad = grad + lambda_L * lr_g
    return objective, mloss, grad, image


def restart_latent(gen_config: gen.GeneratorConfig, seed: int, restart: int) -> gen.LatentSeed:
    """Latent seed used by restart ``restart`` of a run seeded with ``seed``."""
    return gen.make_latent(gen_config.latent_dim, [seed + restart, 1])


def restart_weights(gen_config: gen.GeneratorConfig, seed: int, restart: int):
    return gen.init_weights(gen_config, seed + restart)


def _run_restart(y, op, gen_config, cfg: SolverConfig, stats, r: int, monitor=None):
    weights = restart_weights(gen_config, cfg.seed, r)
    latent = restart_latent(gen_config, cfg.seed, r)
    state = RMSPropState.zeros(weights.flat.size)
    mtrace = np.empty(cfg.steps)
    otrace = np.empty(cfg.steps)
    best = (np.inf, -1, None, None)
    window_start = cfg.steps - cfg.stop_window
    w = weights.flat
    for step in range(cfg.steps):
        current = weights.with_flat(w)
        obj, mloss, grad, image = _evaluate(
            current, latent, y, op, cfg.lambda_T, cfg.lambda_L, stats)
        if not (np.isfinite(obj) and np.isfinite(grad).all()):
            raise NonFiniteError(f"restart {r}: non-finite objective at step {step}")
        mtrace[step] = mloss
        otrace[step] = obj
        if monitor is not None:
            monitor(r, step, image, mloss)
        if step >= window_start and mloss < best[0]:
            best = (mloss, step, image, current)
        w, state = rmsprop_update(w, grad, state, cfg)
    mloss, step, image, final_w = best
    return ReconstructionResult(
        image=image, measurement_loss_trace=mtrace, objective_trace=otrace,
        chosen_step=step, restart_index=r, final_objective=float(otrace[step]),
        weights=final_w, latent=latent)


def recover(y, op, gen_config: gen.GeneratorConfig, solver_config: SolverConfig,
            stats: PriorStats | None = None, monitor=None) -> ReconstructionResult:
    """Reconstruct an image from measurements ``y = A x + noise``.

    ``monitor(restart, step, image, measurement_loss)`` is called after every
    forward pass if given. Restarts that hit a non-finite objective are
    dropped with a warning; if all of them fail a ``RuntimeError`` is raised.
    """
    cfg = solver_config
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != op.out_size:
        raise ValueError(f"y has {y.size} entries, operator produces {op.out_size}")
    if int(np.prod(gen_config.output_shape)) != int(np.prod(op.in_shape)):
        raise ValueError(
            f"generator output {gen_config.output_shape} does not match operator input "
            f"{op.in_shape}")
    if cfg.lambda_L > 0:
        if stats is None:
            raise ValueError("lambda_L > 0 requires prior stats")
        if stats.layer_count != gen_config.layer_count:
            raise ValueError(
                f"prior has {stats.layer_count} layers, generator has {gen_config.layer_count}")

    def run(r):
        try:
            return _run_restart(y, op, gen_config, cfg, stats, r, monitor)
        except (NonFiniteError, FloatingPointError) as exc:
            log.warning("restart %d aborted: %s", r, exc)
            return None

    if monitor is None:
        results = pmap(run, range(cfg.restarts))
    else:
        results = [run(r) for r in range(cfg.restarts)]
    ok = [res for res in results if res is not None]
    if not ok:
        raise RuntimeError("all restarts diverged")
    winner = min(ok, key=lambda res: (res.measurement_loss_trace[res.chosen_step],
                                      res.restart_index))
    winner.restart_losses = [
        None if res is None else float(res.measurement_loss_trace[res.chosen_step])
        for res in results]
    return winner


def grid_search(y, op, gen_config, solver_config: SolverConfig, lambdas,
                stats: PriorStats | None = None):
    """Run :func:`recover` for each lambda_T; pick the smallest measurement loss.

    Returns ``(best_lambda, best_result, table)`` with ``table`` a list of
    ``(lambda_T, measurement_loss)`` rows.
    """
    table = []
    best = None
    for lam in lambdas:
        res = recover(y, op, gen_config, replace(solver_config, lambda_T=float(lam)), stats)
        loss = float(res.measurement_loss_trace[res.chosen_step])
        table.append((float(lam), loss))
        if best is None or loss < best[1]:
            best = (float(lam), loss, res)
    return best[0], best[2], table
