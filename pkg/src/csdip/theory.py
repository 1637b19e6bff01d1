"""Numerical checks for the one-hidden-layer denoising model.

The model is ``G(z; W) = V relu(W z)`` with ``z in R^k``, ``W in R^{d x k}``
trained by gradient descent and ``V in R^{n x d}`` fixed with i.i.d.
N(0, nu^2) entries. With ``nu = ||y|| / (sqrt(d n) ||z||)`` and step
``eta = eta_bar / ||y||^2 * 8n / (4n + d)`` the residual is claimed to obey

    ||V relu(W_t z) - y|| <= 3 (1 - eta_bar / (8 (4n + d)))^t ||y||.

This module runs that recurrence and checks the supporting spectral bounds
on the Jacobian ``J(W) = (V diag(relu'(W z))) * (1 z^T)`` (row-wise
Kronecker product), using ``relu'(0) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .parallel import pmap

SIGMA_MIN_WIDTH_FACTOR = 3828


@dataclass(frozen=True, eq=False)
class OneLayerNet:
    z: np.ndarray
    V: np.ndarray
    W: np.ndarray
    nu: float
    W0: np.ndarray | None = None

    def __post_init__(self):
        if self.W0 is None:
            object.__setattr__(self, "W0", self.W)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def d(self) -> int:
        return self.V.shape[1]

    @property
    def k(self) -> int:
        return self.z.size

    def with_W(self, W: np.ndarray) -> "OneLayerNet":
        return replace(self, W=W, W0=self.W0)

    def output(self, W: np.ndarray | None = None) -> np.ndarray:
        W = self.W if W is None else W
        return self.V @ np.maximum(W @ self.z, 0.0)


def convergence_nu(y: np.ndarray, z: np.ndarray, d: int) -> float:
    return float(np.linalg.norm(y) / (math.sqrt(d * y.size) * np.linalg.norm(z)))


def make_net(y, d: int, k: int, rng: np.random.Generator, nu: float | None = None) -> OneLayerNet:
    """Random network with ``z ~ N(0, I_k)``, ``W0 ~ N(0, 1)`` and ``V ~ N(0, nu^2)``.

    ``nu`` defaults to the convergence-guarantee scaling for the target ``y``.
    """
    y = np.asarray(y, dtype=np.float64)
    z = rng.standard_normal(k)
    if nu is None:
        nu = convergence_nu(y, z, d)
    V = nu * rng.standard_normal((y.size, d))
    W0 = rng.standard_normal((d, k))
    return OneLayerNet(z=z, V=V, W=W0, nu=nu)


def _relu_prime(u: np.ndarray) -> np.ndarray:
    return (u >= 0.0).astype(np.float64)


def jacobian(net: OneLayerNet, W: np.ndarray | None = None) -> np.ndarray:
    """(n, d*k) Jacobian of ``W -> V relu(W z)`` w.r.t. row-major ``vec(W)``."""
    W = net.W if W is None else W
    B = net.V * _relu_prime(W @ net.z)
    return np.einsum("il,j->ilj", B, net.z).reshape(net.n, net.d * net.k)


def jjt(net: OneLayerNet, W: np.ndarray | None = None) -> np.ndarray:
    """Closed form ``||z||^2 V diag(relu'(Wz)^2) V^T`` of ``J J^T``."""
    W = net.W if W is None else W
    act = _relu_prime(W @ net.z)
    return float(net.z @ net.z) * (net.V * (act * act)) @ net.V.T


def loss_and_grad(net: OneLayerNet, y, W: np.ndarray | None = None,
                  check: bool = True) -> tuple[float, np.ndarray]:
    """``1/2 ||V relu(W z) - y||^2`` and its gradient in ``W``.

    With ``check`` the chain-rule gradient is compared against ``J^T r``.
    """
    W = net.W if W is None else W
    pre = W @ net.z
    r = net.V @ np.maximum(pre, 0.0) - np.asarray(y, dtype=np.float64)
    grad = np.outer((net.V.T @ r) * _relu_prime(pre), net.z)
    if check:
        alt = (jacobian(net, W).T @ r).reshape(grad.shape)
        scale = max(float(np.abs(grad).max()), 1e-300)
        if np.abs(alt - grad).max() > 1e-10 * scale:
            raise AssertionError("chain-rule gradient disagrees with J^T r")
    return 0.5 * float(r @ r), grad


@dataclass
class DescentTrace:
    residual_norms: np.ndarray
    bound_curve: np.ndarray
    eta_bar: float
    step: float
    diverged: bool = False

    def within_bound(self, rtol: float = 1e-12) -> bool:
        ok = self.residual_norms <= self.bound_curve * (1.0 + rtol)
        return bool(np.all(ok)) and not self.diverged


def step_size(eta_bar: float, y, d: int) -> float:
    n = np.size(y)
    return eta_bar / float(np.dot(y, y)) * 8 * n / (4 * n + d)


def bound_curve(eta_bar: float, y, d: int, tau_max: int) -> np.ndarray:
    n = np.size(y)
    rate = 1.0 - eta_bar / (8 * (4 * n + d))
    return 3.0 * rate ** np.arange(tau_max + 1) * float(np.linalg.norm(y))


def gd_denoise(net: OneLayerNet, y, eta_bar: float = 1.0, tau_max: int = 5000) -> DescentTrace:
    """Plain gradient descent on ``W``; records the residual norm at every step."""
    if not 0 < eta_bar <= 1:
        raise ValueError(f"eta_bar must lie in (0, 1], got {eta_bar}")
    y = np.asarray(y, dtype=np.float64)
    eta = step_size(eta_bar, y, net.d)
    norms = np.full(tau_max + 1, np.nan)
    y_norm = float(np.linalg.norm(y))
    W = net.W.copy()
    diverged = False
    for tau in range(tau_max + 1):
        pre = W @ net.z
        r = net.V @ np.maximum(pre, 0.0) - y
        norms[tau] = np.linalg.norm(r)
        if not np.isfinite(norms[tau]) or norms[tau] > 10.0 * y_norm:
            diverged = True
            break
        if tau < tau_max:
            W -= eta * np.outer((net.V.T @ r) * _relu_prime(pre), net.z)
    return DescentTrace(norms, bound_curve(eta_bar, y, net.d, tau_max), eta_bar, eta, diverged)


def sign_change_count(net: OneLayerNet, W_new: np.ndarray, R: float | None = None,
                      enforce: bool = True) -> int:
    """Rows ``l`` where ``sign(<W_new[l], z>)`` differs from ``sign(<W0[l], z>)``.

    If ``R`` is given and ``enforce`` is set, ``||W_new - W0||_2 <= R`` is
    required.
    """
    if R is not None and enforce:
        dist = float(np.linalg.norm(W_new - net.W0, 2))
        if dist > R * (1.0 + 1e-12):
            raise ValueError(f"||W - W0|| = {dist:.6g} exceeds radius R = {R}")
    return int(np.count_nonzero(np.sign(W_new @ net.z) != np.sign(net.W0 @ net.z)))


def sign_change_bound(d: int, R: float) -> int:
    return 2 * math.ceil((2 * d * R) ** (2.0 / 3.0))


@dataclass
class BoundReport:
    n: int
    d: int
    k: int
    rows: list = field(default_factory=list)
    sigma_min_applicable: bool = True

    def add(self, trial, check, quantity, bound, passed):
        self.rows.append({"trial": trial, "check": check, "quantity": float(quantity),
                          "bound": float(bound), "pass": bool(passed)})

    def pass_counts(self) -> dict:
        out = {}
        for row in self.rows:
            ok, total = out.get(row["check"], (0, 0))
            out[row["check"]] = (ok + row["pass"], total + 1)
        return out

    def summary(self) -> dict:
        return {check: {"passed": ok, "trials": total, "failure_rate": 1 - ok / total}
                for check, (ok, total) in self.pass_counts().items()}


def _trial_rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial, stream])


def _unit_target(rng, n):
    y = rng.standard_normal(n)
    return y / np.linalg.norm(y)


def verify_lemmas(n: int, d: int, k: int, trials: int, seed: int = 0,
                  sign_d: int | None = None, radius: float = 0.1) -> BoundReport:
    """Check the Jacobian spectrum, initial misfit and sign-change bounds.

    Per trial:

    * ``sigma_min_lower``: sigma_min(J) >= nu sqrt(d) ||z|| / 2, claimed for
      d >= 3828 n (``report.sigma_min_applicable``)
    * ``spectral_norm_upper``: ||J|| <= nu (sqrt(d) + 2 sqrt(n)) ||z||
    * ``initial_misfit``: ||V relu(W0 z) - y|| <= 3 ||y||
    * ``sign_changes``: rows flipping sign under a random perturbation of
      spectral norm ``radius`` stay below 2 ceil((2 d R)^(2/3)), with
      ``sign_d`` hidden units (default ``d``)

    Singular values come from the n x n matrix ``J J^T``.
    """
    report = BoundReport(n, d, k, sigma_min_applicable=d >= SIGMA_MIN_WIDTH_FACTOR * n)
    sign_d = d if sign_d is None else sign_d

    def one(trial):
        rows = []
        rng = _trial_rng(seed, trial, 0)
        y = _unit_target(rng, n)
        net = make_net(y, d, k, rng)
        eig = np.linalg.eigvalsh(jjt(net))
        z_norm = float(np.linalg.norm(net.z))
        smin = math.sqrt(max(eig[0], 0.0))
        smax = math.sqrt(max(eig[-1], 0.0))
        lower = 0.5 * net.nu * math.sqrt(d) * z_norm
        upper = net.nu * (math.sqrt(d) + 2 * math.sqrt(n)) * z_norm
        misfit = float(np.linalg.norm(net.output() - y))
        rows.append(("sigma_min_lower", smin, lower, smin >= lower))
        rows.append(("spectral_norm_upper", smax, upper, smax <= upper))
        bound4 = 3.0 * float(np.linalg.norm(y))
        rows.append(("initial_misfit", misfit, bound4, misfit <= bound4))

        rng5 = _trial_rng(seed, trial, 5)
        y5 = _unit_target(rng5, n)
        net5 = make_net(y5, sign_d, k, rng5)
        G = rng5.standard_normal(net5.W0.shape)
        W_new = net5.W0 + radius * G / np.linalg.norm(G, 2)
        count = sign_change_count(net5, W_new, radius)
        limit = sign_change_bound(sign_d, radius)
        rows.append(("sign_changes", count, limit, count <= limit))
        return rows

    for trial, rows in enumerate(pmap(one, range(trials))):
        for row in rows:
            report.add(trial, *row)
    return report


def descent_trials(n: int, d: int, k: int, trials: int, eta_bar: float = 1.0,
                   tau_max: int = 5000, seed: int = 0) -> list[DescentTrace]:
    """Independent runs of :func:`gd_denoise` on random unit-norm targets."""

    def one(trial):
        rng = _trial_rng(seed, trial, 1)
        y = _unit_target(rng, n)
        return gd_denoise(make_net(y, d, k, rng), y, eta_bar, tau_max)

    return pmap(one, range(trials))
