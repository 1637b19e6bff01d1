"""Measurement operators and the additive noise model.

Two operators are provided: a dense i.i.d. Gaussian matrix with entry
variance ``1/m`` and a radially masked, orthonormal 2D DFT. Complex Fourier
samples are returned as one real vector ``[real parts, imaginary parts]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import check_finite


@dataclass(frozen=True, eq=False)
class GaussianOperator:
    m: int
    n: int
    entries: np.ndarray
    seed: int | None = None

    kind = "gaussian"

    @property
    def out_size(self) -> int:
        return self.m

    @property
    def in_shape(self) -> tuple[int, ...]:
        return (self.n,)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "m": self.m, "n": self.n, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class FourierOperator:
    height: int
    width: int
    mask: np.ndarray  # (|Omega|, 2) int array of FFT-space (row, col) indices
    line_count: int | None = None
    _rows: np.ndarray = field(init=False, repr=False)
    _cols: np.ndarray = field(init=False, repr=False)

    kind = "fourier"

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=np.int64).reshape(-1, 2)
        if mask.size == 0:
            raise ValueError("Fourier mask is empty")
        if (mask[:, 0] < 0).any() or (mask[:, 0] >= self.height).any() or \
                (mask[:, 1] < 0).any() or (mask[:, 1] >= self.width).any():
            raise ValueError("Fourier mask index out of bounds")
        if len(np.unique(mask[:, 0] * self.width + mask[:, 1])) != len(mask):
            raise ValueError("Fourier mask contains duplicate indices")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "_rows", mask[:, 0])
        object.__setattr__(self, "_cols", mask[:, 1])

    @property
    def out_size(self) -> int:
        return 2 * len(self.mask)

    @property
    def in_shape(self) -> tuple[int, ...]:
        return (self.height, self.width)

    @property
    def n(self) -> int:
        return self.height * self.width

    @property
    def m(self) -> int:
        return self.out_size

    def independent_count(self) -> int:
        """Number of sampled coefficients that are not complex conjugates of
        another sampled coefficient. For a real image these are the only
        independent measurements in the mask."""
        h, w = self.height, self.width
        flat = set((self._rows * w + self._cols).tolist())
        kept = set()
        for idx in sorted(flat):
            r, c = divmod(idx, w)
            conj = ((-r) % h) * w + (-c) % w
            if conj not in kept:
                kept.add(idx)
        return len(kept)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "height": self.height, "width": self.width,
                "lines": self.line_count, "coefficients": len(self.mask)}


@dataclass(frozen=True)
class IdentityOperator:
    """``A = I``: plain denoising."""

    n: int

    kind = "identity"

    @property
    def m(self) -> int:
        return self.n

    @property
    def out_size(self) -> int:
        return self.n

    @property
    def in_shape(self) -> tuple[int, ...]:
        return (self.n,)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "n": self.n}


@dataclass(frozen=True)
class NoiseSpec:
    variance_total: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.variance_total < 0:
            raise ValueError(f"noise variance must be >= 0, got {self.variance_total}")


def make_gaussian(m: int, n: int, seed: int) -> GaussianOperator:
    if m < 1 or n < 1:
        raise ValueError(f"Gaussian operator needs m, n >= 1, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    entries = rng.standard_normal((m, n)) / np.sqrt(m)
    return GaussianOperator(m=m, n=n, entries=entries, seed=seed)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def make_radial_mask(height: int, width: int, lines: int) -> FourierOperator:
    """Sample full-diameter lines through DC at angles ``i*pi/lines``.

    Each line is walked at unit radial steps ``t = -R..R`` with
    ``R = min(height, width) // 2``; points are rounded half away from zero,
    wrapped into FFT index space and deduplicated.
    """
    if lines < 1:
        raise ValueError(f"need at least one radial line, got {lines}")
    if lines > max(height, width):
        raise ValueError(f"{lines} lines cannot be distinguished on a {height}x{width} grid")
    radius = min(height, width) // 2
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    rows, cols = [np.zeros(1, np.int64)], [np.zeros(1, np.int64)]  # DC
    for i in range(lines):
        theta = i * np.pi / lines
        rows.append(_round_half_away(t * np.sin(theta)) % height)
        cols.append(_round_half_away(t * np.cos(theta)) % width)
    flat = np.unique(np.concatenate(rows) * width + np.concatenate(cols))
    mask = np.stack(np.divmod(flat, width), axis=1)
    return FourierOperator(height=height, width=width, mask=mask, line_count=lines)


def full_fourier(height: int, width: int) -> FourierOperator:
    rr, cc = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return FourierOperator(height, width, np.stack([rr.ravel(), cc.ravel()], axis=1))


def apply(op, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if isinstance(op, GaussianOperator):
        if x.size != op.n:
            raise ValueError(f"Gaussian operator expects {op.n} entries, got shape {x.shape}")
        return check_finite(op.entries @ x.ravel(), "apply")
    if isinstance(op, IdentityOperator):
        if x.size != op.n:
            raise ValueError(f"identity operator expects {op.n} entries, got shape {x.shape}")
        return check_finite(x.ravel().copy(), "apply")
    if isinstance(op, FourierOperator):
        if x.shape != (op.height, op.width):
            if x.size != op.n:
                raise ValueError(
                    f"Fourier operator expects {op.height}x{op.width}, got shape {x.shape}"
                )
            x = x.reshape(op.height, op.width)
        coeffs = np.fft.fft2(x, norm="ortho")[op._rows, op._cols]
        return check_finite(np.concatenate([coeffs.real, coeffs.imag]), "apply")
    raise TypeError(f"unsupported operator {type(op).__name__}")


def adjoint(op, r) -> np.ndarray:
    """Transpose of :func:`apply`. Returns a flat vector for Gaussian operators
    and an (H, W) image for Fourier operators."""
    r = np.asarray(r, dtype=np.float64).ravel()
    if r.size != op.out_size:
        raise ValueError(f"adjoint expects {op.out_size} entries, got {r.size}")
    if isinstance(op, GaussianOperator):
        return check_finite(op.entries.T @ r, "adjoint")
    if isinstance(op, IdentityOperator):
        return check_finite(r.copy(), "adjoint")
    if isinstance(op, FourierOperator):
        k = len(op.mask)
        spec = np.zeros((op.height, op.width), dtype=np.complex128)
        # duplicate-free mask, so plain assignment is exact
        spec[op._rows, op._cols] = r[:k] + 1j * r[k:]
        return check_finite(np.fft.ifft2(spec, norm="ortho").real, "adjoint")
    raise TypeError(f"unsupported operator {type(op).__name__}")


def add_noise(y, spec: NoiseSpec, m: int | None = None) -> np.ndarray:
    """Return ``y + eta`` with ``eta ~ N(0, variance_total / m)`` entrywise."""
    y = np.asarray(y, dtype=np.float64)
    m = y.size if m is None else m
    if m < 1:
        raise ValueError("m must be >= 1")
    if spec.variance_total == 0:
        return y.copy()
    rng = np.random.default_rng(spec.seed)
    eta = rng.standard_normal(y.shape) * np.sqrt(spec.variance_total / m)
    return y + eta
