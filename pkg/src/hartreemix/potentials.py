"""Interaction potentials: sampling on the torus and the bound V^2 <= K(1 - Laplacian)."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
import scipy.linalg

from hartreemix.errors import CapExceededError
from hartreemix.grid import DENSE_CAP, PeriodicGrid, dense_laplacian

KINDS = ("zero", "gaussian", "soft_coulomb", "yukawa_regularized", "grid_sampled", "delta")

CERT_SLACK = 1e-10


@dataclass(frozen=True)
class PotentialSpec:
    """A radial pair potential.

    ``gaussian``:            amplitude * exp(-range * |x|^2)
    ``soft_coulomb``:        amplitude / sqrt(|x|^2 + softening^2)
    ``yukawa_regularized``:  amplitude * exp(-range*|x|) / (|x|^2 + softening^2)^(exponent/2)
    ``delta``:               amplitude / h^dim at the origin (grid delta)
    ``grid_sampled``:        explicit values indexed by displacement
    """

    kind: str = "zero"
    amplitude: float = 0.0
    range: float = 0.0
    exponent: float = 1.0
    softening: float = 1.0
    samples: tuple[float, ...] | None = field(default=None, compare=True)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.range < 0:
            raise ValueError("range must be nonnegative")
        if self.kind in ("soft_coulomb", "yukawa_regularized") and not self.softening > 0:
            raise ValueError("softening must be positive")
        if self.kind == "yukawa_regularized" and not 0 < self.exponent < 1.5:
            raise ValueError("yukawa exponent must lie in (0, 3/2)")
        if self.kind == "grid_sampled":
            if self.samples is None:
                raise ValueError("grid_sampled potential needs samples")
            object.__setattr__(self, "samples", tuple(float(s) for s in np.ravel(self.samples)))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind != "grid_sampled" and self.amplitude == 0.0)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        if "samples" in d:
            d["samples"] = list(d["samples"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        return cls(**d)


def sample(spec: PotentialSpec, grid: PeriodicGrid) -> np.ndarray:
    """Evaluate ``spec`` at every minimum-image displacement, symmetrized."""
    r = grid.displacement_norm()
    lam = spec.amplitude
    if spec.kind == "zero":
        v = np.zeros(grid.shape)
    elif spec.kind == "gaussian":
        v = lam * np.exp(-spec.range * r**2)
    elif spec.kind == "soft_coulomb":
        v = lam / np.sqrt(r**2 + spec.softening**2)
    elif spec.kind == "yukawa_regularized":
        v = lam * np.exp(-spec.range * r) / (r**2 + spec.softening**2) ** (spec.exponent / 2)
    elif spec.kind == "delta":
        v = np.zeros(grid.shape)
        v[(0,) * grid.dim] = lam / grid.cell_volume
    else:
        if len(spec.samples) != grid.size:
            raise ValueError(
                f"grid_sampled potential has {len(spec.samples)} values, grid has {grid.size}"
            )
        v = np.asarray(spec.samples, dtype=float).reshape(grid.shape)
    return symmetrize(v)


def symmetrize(v: np.ndarray) -> np.ndarray:
    """Average with the reflection x -> -x on the torus."""
    reflected = v
    for axis in range(v.ndim):
        reflected = np.roll(np.flip(reflected, axis=axis), 1, axis=axis)
    return 0.5 * (v + reflected)


def pair_matrix(values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Dense matrix V(x_m - x_m') over flattened sites from displacement samples."""
    idx = np.indices(grid.shape).reshape(grid.dim, -1)
    diff = (idx[:, :, None] - idx[:, None, :]) % grid.points
    return values[tuple(diff)]


@dataclass(frozen=True)
class CertResult:
    K: float
    min_eig: float
    holds: bool


def _dense_pieces(spec: PotentialSpec, grid: PeriodicGrid):
    if grid.size > DENSE_CAP:
        raise CapExceededError(f"{grid.size} sites exceed dense eigensolve cap {DENSE_CAP}")
    T = dense_laplacian(grid)
    v = sample(spec, grid).ravel()
    return np.eye(grid.size) + T, np.diag(v**2)


def certify_operator_inequality(spec: PotentialSpec, grid: PeriodicGrid, K: float) -> CertResult:
    """Minimum eigenvalue of K(1 - Laplacian) - V^2 on the grid."""
    if not K > 0:
        raise ValueError("K must be positive")
    one_minus_lap, v2 = _dense_pieces(spec, grid)
    min_eig = float(np.linalg.eigvalsh(K * one_minus_lap - v2)[0])
    return CertResult(K=float(K), min_eig=min_eig, holds=min_eig >= -CERT_SLACK)


def minimal_constant(spec: PotentialSpec, grid: PeriodicGrid) -> float:
    """Smallest K with V^2 <= K(1 - Laplacian), via the generalized eigenproblem."""
    one_minus_lap, v2 = _dense_pieces(spec, grid)
    return float(scipy.linalg.eigh(v2, one_minus_lap, eigvals_only=True)[-1])


def bisect_constant(
    spec: PotentialSpec, grid: PeriodicGrid, lo: float = 1e-12, hi: float | None = None,
    rtol: float = 1e-8,
) -> float:
    """Smallest certified K by bisection on :func:`certify_operator_inequality`."""
    if hi is None:
        hi = max(float(np.max(sample(spec, grid) ** 2)), 1e-12) * 2.0
    while not certify_operator_inequality(spec, grid, hi).holds:
        hi *= 2.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if certify_operator_inequality(spec, grid, mid).holds:
            hi = mid
        else:
            lo = mid
    return hi


class PotentialMatrix:
    """Symmetric p x p family of pair potentials."""

    def __init__(self, entries: Sequence[Sequence[PotentialSpec]]):
        p = len(entries)
        if p < 1 or any(len(row) != p for row in entries):
            raise ValueError("potential matrix must be square and nonempty")
        for q in range(p):
            for r in range(q + 1, p):
                if entries[q][r] != entries[r][q]:
                    raise ValueError(f"potential matrix not symmetric at ({q}, {r})")
        self.entries = tuple(tuple(row) for row in entries)

    @property
    def p(self) -> int:
        return len(self.entries)

    def __getitem__(self, qr: tuple[int, int]) -> PotentialSpec:
        q, r = qr
        return self.entries[q][r]

    def __eq__(self, other):
        return isinstance(other, PotentialMatrix) and self.entries == other.entries

    @classmethod
    def uniform(cls, p: int, spec: PotentialSpec) -> "PotentialMatrix":
        return cls([[spec] * p for _ in range(p)])

    @classmethod
    def zero(cls, p: int) -> "PotentialMatrix":
        return cls.uniform(p, PotentialSpec())

    def sample_all(self, grid: PeriodicGrid) -> np.ndarray:
        """Array of shape (p, p, *grid.shape)."""
        return np.stack([np.stack([sample(s, grid) for s in row]) for row in self.entries])

    def to_list(self) -> list[list[dict]]:
        return [[s.to_dict() for s in row] for row in self.entries]

    @classmethod
    def from_list(cls, rows) -> "PotentialMatrix":
        return cls([[PotentialSpec.from_dict(d) for d in row] for row in rows])
