"""Periodic grids, unitary DFTs and spectral operators.

Fields are plain complex (or real) numpy arrays whose shape equals
``grid.shape``.  Quadratures carry the physical cell volume ``h**dim`` so that
``inner_product(grid, u, u) == 1`` is the continuum statement ``||u||_2 = 1``.

Wavenumber convention: index ``m`` maps to the signed integer ``m`` for
``m < M/2`` and ``m - M`` otherwise (the ``numpy.fft.fftfreq`` layout), so for
even ``M`` the Nyquist mode is ``-pi*M/L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from hartreemix.errors import CapExceededError, GridMismatchError

DENSE_CAP = 4096


@dataclass(frozen=True)
class PeriodicGrid:
    dim: int
    points: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"unsupported dimension {self.dim}")
        if int(self.points) != self.points or self.points < 2:
            raise ValueError(f"need at least 2 points per axis, got {self.points}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def spacing(self) -> float:
        return self.length / self.points

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @cached_property
    def signed_index(self) -> np.ndarray:
        return np.fft.fftfreq(self.points, d=1.0 / self.points)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Per-axis wavenumbers ``2*pi*m_signed/L`` (length M)."""
        return 2.0 * np.pi * self.signed_index / self.length

    @cached_property
    def positions(self) -> np.ndarray:
        """Per-axis sample positions ``m*h`` in ``[0, L)``."""
        return np.arange(self.points) * self.spacing

    @cached_property
    def displacements(self) -> np.ndarray:
        """Per-axis minimum-image displacement of index ``m`` from the origin."""
        return self.signed_index * self.spacing

    @cached_property
    def k_squared(self) -> np.ndarray:
        """|k|^2 on the full transform grid, shape ``self.shape``."""
        axes = np.meshgrid(*([self.wavenumbers] * self.dim), indexing="ij")
        return sum(ax**2 for ax in axes)

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.positions] * self.dim), indexing="ij")

    def displacement_norm(self) -> np.ndarray:
        """|x| for the minimum-image displacement at every grid index."""
        axes = np.meshgrid(*([self.displacements] * self.dim), indexing="ij")
        return np.sqrt(sum(ax**2 for ax in axes))

    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if np.shape(f) != self.shape:
                raise GridMismatchError(
                    f"field of shape {np.shape(f)} does not live on grid {self.shape}"
                )


def make_grid(dim: int, points: int, length: float) -> PeriodicGrid:
    return PeriodicGrid(int(dim), int(points), float(length))


def forward(grid: PeriodicGrid, f: np.ndarray) -> np.ndarray:
    """Unitary DFT (``norm='ortho'``)."""
    grid.check(f)
    return np.fft.fftn(f, norm="ortho")


def inverse(grid: PeriodicGrid, fk: np.ndarray) -> np.ndarray:
    grid.check(fk)
    return np.fft.ifftn(fk, norm="ortho")


def inner_product(grid: PeriodicGrid, f: np.ndarray, g: np.ndarray) -> complex:
    """h^dim * sum(conj(f) * g); conjugate-linear in ``f``."""
    grid.check(f, g)
    return complex(grid.cell_volume * np.vdot(f, g))


def norm(grid: PeriodicGrid, f: np.ndarray) -> float:
    grid.check(f)
    return float(np.sqrt(grid.cell_volume) * np.linalg.norm(f))


def laplacian_apply(grid: PeriodicGrid, f: np.ndarray) -> np.ndarray:
    """Apply the nonnegative operator ``-Laplacian`` spectrally."""
    grid.check(f)
    return np.fft.ifftn(grid.k_squared * np.fft.fftn(f))


def convolve_periodic(grid: PeriodicGrid, V: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """h^dim-weighted circular convolution of two real fields.

    ``V`` is indexed by displacement (index m holds V at the minimum-image
    displacement of m), so the result at x_m is h^dim * sum_m' V(x_m - x_m') rho_m'.
    """
    grid.check(V, rho)
    out = np.fft.ifftn(np.fft.fftn(V) * np.fft.fftn(rho))
    return grid.cell_volume * out.real


def dense_laplacian(grid: PeriodicGrid) -> np.ndarray:
    """Dense real-symmetric matrix of ``-Laplacian`` in the site basis.

    Built as the DFT conjugation of diag(|k|^2); exactly symmetrized.
    """
    if grid.size > DENSE_CAP:
        raise CapExceededError(f"dense operator of side {grid.size} exceeds {DENSE_CAP}")
    eye = np.eye(grid.size).reshape((grid.size,) + grid.shape)
    axes = tuple(range(1, grid.dim + 1))
    cols = np.fft.ifftn(grid.k_squared * np.fft.fftn(eye, axes=axes), axes=axes)
    T = cols.reshape(grid.size, grid.size).T.real
    return 0.5 * (T + T.T)
