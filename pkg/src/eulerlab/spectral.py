"""Periodic-grid fields, unitary FFTs and spectral operators.

All spectral arrays use numpy's ``norm="ortho"`` convention, so the discrete
transform is unitary and Parseval reads ``sum |f|^2 = sum |f_hat|^2``.
Continuous L^2 norms on the box pick up the cell volume ``dx**3``.

Fields are plain ``numpy`` arrays of shape ``(n, n, n)``; the :class:`Grid`
carries wavevectors and quadrature weights.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "CutoffProfile",
    "transform_forward",
    "transform_inverse",
    "transform_inverse_half",
    "spectral_gradient",
    "spectral_divergence",
    "lambda_power",
    "sobolev_norm",
    "sobolev_seminorm",
    "lp_norm",
    "freq_split",
    "write_field_binary",
    "read_field_binary",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Grid:
    """Cubic periodic grid ``[0, L)^3`` with ``n`` points per axis."""

    n: int
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**3

    @property
    def volume(self) -> float:
        return self.L**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def k1d(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @cached_property
    def kvec(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.k1d, self.k1d, self.k1d, indexing="ij"))

    @cached_property
    def kvec_odd(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # Nyquist wavenumber zeroed: odd derivatives must keep real data real.
        k = self.k1d.copy()
        k[self.n // 2] = 0.0
        return tuple(np.meshgrid(k, k, k, indexing="ij"))

    @cached_property
    def kabs(self) -> np.ndarray:
        kx, ky, kz = self.kvec
        return np.sqrt(kx**2 + ky**2 + kz**2)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.dx
        return tuple(np.meshgrid(x, x, x, indexing="ij"))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with ``|k_i| < n/3`` on every axis."""
        m = np.abs(np.fft.fftfreq(self.n) * self.n) < self.n / 3
        return m[:, None, None] & m[None, :, None] & m[None, None, :]

    def zero_mode_index(self) -> tuple[int, int, int]:
        return (0, 0, 0)


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth radial cut-off ``chi_1``: 1 inside ``r0``, 0 beyond ``R0``.

    The transition is a raised cosine, which is C^1 rather than C^infinity.
    """

    r0: float
    R0: float

    def __post_init__(self):
        if not 0 < self.r0 < self.R0:
            raise ValueError(f"need 0 < r0 < R0, got r0={self.r0}, R0={self.R0}")

    @classmethod
    def default(cls, grid: Grid) -> "CutoffProfile":
        r0 = 0.5 * 2 * np.pi / grid.L
        return cls(r0, 4 * r0)

    def chi_low(self, r):
        r = np.asarray(r, dtype=float)
        s = np.clip((r - self.r0) / (self.R0 - self.r0), 0.0, 1.0)
        return 0.5 * (1 + np.cos(np.pi * s))

    def chi_high(self, r):
        return 1.0 - self.chi_low(r)


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite values")


def transform_forward(f: np.ndarray) -> np.ndarray:
    """Unitary 3D FFT of a real field (last three axes)."""
    f = np.asarray(f)
    _check_finite(f, "field")
    return sfft.fftn(f, axes=(-3, -2, -1), norm="ortho")


def transform_inverse(f_hat: np.ndarray, real: bool = True) -> np.ndarray:
    f_hat = np.asarray(f_hat)
    _check_finite(f_hat, "spectral field")
    if real:
        # Hermitian input assumed; the half spectrum is enough
        n = f_hat.shape[-1]
        return sfft.irfftn(f_hat[..., : n // 2 + 1], s=f_hat.shape[-3:], axes=(-3, -2, -1), norm="ortho")
    return sfft.ifftn(f_hat, axes=(-3, -2, -1), norm="ortho")


def spectral_gradient(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    """Return the stacked ``(3, n, n, n)`` spectral gradient ``i k_j f_hat``."""
    return np.stack([1j * k * f_hat for k in grid.kvec_odd])


def spectral_divergence(grid: Grid, v_hat: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.kvec_odd
    return 1j * (kx * v_hat[0] + ky * v_hat[1] + kz * v_hat[2])


def lambda_power(grid: Grid, f_hat: np.ndarray, a: float) -> np.ndarray:
    """Apply the multiplier ``|k|^a``; the zero mode is annihilated for ``a < 0``."""
    if a == 0:
        return np.array(f_hat, copy=True)
    kabs = grid.kabs
    with np.errstate(divide="ignore"):
        mult = np.where(kabs > 0, kabs**a, 0.0)
    return mult * f_hat


def _weighted_sum(grid: Grid, f_hat: np.ndarray, weight: np.ndarray) -> float:
    p = np.abs(f_hat) ** 2
    if p.ndim > 3:
        p = p.reshape(-1, *grid.shape).sum(axis=0)
    return float(np.sum(weight * p) * grid.cell_volume)


def sobolev_seminorm(grid: Grid, f_hat: np.ndarray, k: int) -> float:
    """Homogeneous seminorm ``||grad^k f||_{L^2}``.

    ``f_hat`` may carry leading component axes (vector fields); the norm is
    then taken over all components.
    """
    return float(np.sqrt(_weighted_sum(grid, f_hat, grid.kabs ** (2 * k))))


def sobolev_norm(grid: Grid, f_hat: np.ndarray, k: int, start: int = 0) -> float:
    """``(sum_{start <= j <= k} ||grad^j f||^2)^{1/2}`` via Parseval.

    ``start=1`` gives norms of the form ``||grad f||_{H^{k-1}}``.
    """
    if not 0 <= k <= 4:
        raise ValueError(f"Sobolev order must be in [0, 4], got {k}")
    k2 = grid.kabs**2
    weight = sum(k2**j for j in range(start, k + 1))
    return float(np.sqrt(_weighted_sum(grid, f_hat, weight)))


def lp_norm(grid: Grid, f: np.ndarray, p) -> float:
    """Rectangle-rule L^p norm on the box; ``p`` in {1, 2, 3, 6, inf}."""
    f = np.abs(np.asarray(f))
    if f.ndim > 3:
        f = np.sqrt(np.sum(f.reshape(-1, *grid.shape) ** 2, axis=0))
    if p == np.inf or p == "inf":
        return float(f.max())
    if p not in (1, 2, 3, 6):
        raise ValueError(f"unsupported p={p}")
    return float((np.sum(f**p) * grid.cell_volume) ** (1.0 / p))


def freq_split(grid: Grid, f_hat: np.ndarray, cutoff: CutoffProfile):
    """Split into low/high frequency parts; ``low + high == f_hat`` exactly."""
    chi = cutoff.chi_low(grid.kabs)
    low = chi * f_hat
    return low, f_hat - low


# --- serialization -----------------------------------------------------------

_HEADER = struct.Struct("<qd")


def write_field_binary(path, grid: Grid, f: np.ndarray) -> None:
    """Little-endian float64 dump preceded by an ``(n: int64, L: float64)`` header."""
    f = np.asarray(f, dtype="<f8")
    if f.shape[-3:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(grid.n, grid.L))
        fh.write(np.ascontiguousarray(f).tobytes())


def read_field_binary(path) -> tuple[Grid, np.ndarray]:
    raw = Path(path).read_bytes()
    n, L = _HEADER.unpack_from(raw)
    grid = Grid(int(n), float(L))
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    ncomp, rem = divmod(data.size, n**3)
    if rem:
        raise ValueError("truncated field file")
    data = data.reshape((ncomp, n, n, n)) if ncomp > 1 else data.reshape(grid.shape)
    return grid, data.astype(float)


def write_field_csv(path, grid: Grid, f: np.ndarray) -> None:
    f = np.asarray(f, dtype=float)
    idx = np.indices(grid.shape).reshape(3, -1).T
    with open(path, "w") as fh:
        fh.write(f"# n={grid.n} L={grid.L!r}\n")
        fh.write("i,j,k,value\n")
        for (i, j, k), v in zip(idx, f.ravel()):
            fh.write(f"{i},{j},{k},{float(v)!r}\n")


def read_field_csv(path) -> tuple[Grid, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().lstrip("# ").split()
        meta = dict(item.split("=") for item in header)
        grid = Grid(int(meta["n"]), float(meta["L"]))
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    f = np.empty(grid.shape)
    ijk = data[:, :3].astype(int)
    f[ijk[:, 0], ijk[:, 1], ijk[:, 2]] = data[:, 3]
    return grid, f


def transform_inverse_half(h_hat: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of a half spectrum (last axis truncated to ``n//2 + 1``)."""
    return sfft.irfftn(h_hat, s=grid.shape, axes=(-3, -2, -1), norm="ortho")
