"""Coupled Hartree-type equations for a p-component mixture.

For each component q

    i d/dt u_q = -Lap u_q + (V_qq * |u_q|^2) u_q + sum_{r in S(q)} c_qr (V_qr * |u_r|^2) u_q

with S(q) = {r != q} by default, or all r when ``include_self_cross`` is set.
Time stepping is Strang splitting: half kinetic phase in Fourier space, full
pointwise potential phase, half kinetic phase.  Every substep is a unitary
phase multiplication, so per-component L2 norms are conserved to roundoff.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from hartreemix.errors import NumericalAbort
from hartreemix.grid import PeriodicGrid, inner_product
from hartreemix.potentials import PotentialMatrix

log = logging.getLogger(__name__)

MASS_WINDOW = 1e-9


@dataclass(frozen=True)
class MixtureSpec:
    N: tuple[int, ...]
    potentials: PotentialMatrix
    c_cross: np.ndarray | None = None
    include_self_cross: bool = False

    def __post_init__(self):
        N = tuple(int(n) for n in self.N)
        if len(N) < 1 or any(n < 1 for n in N):
            raise ValueError(f"particle numbers must be >= 1, got {self.N}")
        if self.potentials.p != len(N):
            raise ValueError(
                f"potential matrix is {self.potentials.p}x{self.potentials.p} "
                f"but {len(N)} components were given"
            )
        object.__setattr__(self, "N", N)
        if self.c_cross is None:
            cc = np.tile(self.c, (len(N), 1))
        else:
            cc = np.array(self.c_cross, dtype=float)
            if cc.shape != (len(N), len(N)):
                raise ValueError(f"c_cross must be {len(N)}x{len(N)}")
        cc.setflags(write=False)
        object.__setattr__(self, "c_cross", cc)

    @property
    def p(self) -> int:
        return len(self.N)

    @property
    def N_total(self) -> int:
        return sum(self.N)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.N, dtype=float) / self.N_total

    def with_N(self, N: Sequence[int]) -> "MixtureSpec":
        """Same potentials and flags, new particle numbers (c_cross re-derived if default)."""
        return MixtureSpec(tuple(N), self.potentials, None, self.include_self_cross)

    def perturbed(self, delta) -> "MixtureSpec":
        return replace(self, c_cross=self.c_cross + np.asarray(delta, dtype=float))

    def cross_weights(self) -> np.ndarray:
        """Effective p x p weights multiplying V_qr * |u_r|^2 in the q-th equation."""
        w = np.array(self.c_cross, dtype=float)
        if not self.include_self_cross:
            np.fill_diagonal(w, 0.0)
        return w + np.eye(self.p)


@dataclass
class OrbitalSet:
    grid: PeriodicGrid
    orbitals: np.ndarray  # shape (p, *grid.shape)
    time: float = 0.0

    def __post_init__(self):
        self.orbitals = np.asarray(self.orbitals, dtype=complex)
        if self.orbitals.shape[1:] != self.grid.shape:
            raise ValueError("orbital array does not match grid")

    @property
    def p(self) -> int:
        return self.orbitals.shape[0]

    def masses(self) -> np.ndarray:
        return self.grid.cell_volume * np.sum(
            np.abs(self.orbitals.reshape(self.p, -1)) ** 2, axis=1
        )

    def copy(self) -> "OrbitalSet":
        return OrbitalSet(self.grid, self.orbitals.copy(), self.time)


@dataclass(frozen=True)
class HartreeDiagnostics:
    masses: tuple[float, ...]
    weighted_energy: float
    time: float


@dataclass
class PerturbationReport:
    times: np.ndarray
    differences: np.ndarray  # shape (n_times, p): ||u_q - u~_q||_2
    delta_norm: float
    envelope: tuple[float, float] | None = field(default=None)

    def fit_envelope(self) -> tuple[float, float]:
        """Constants (A, B) with diff_q(t) <= A * ||delta|| * exp(B t) over the run.

        B is the least-squares slope of log(running max difference) against t
        (t > 0 only); A is then the smallest prefactor that bounds every sample.
        """
        if self.delta_norm == 0:
            raise ValueError("envelope undefined for zero perturbation")
        worst = np.maximum.accumulate(self.differences.max(axis=1))
        keep = (self.times > 0) & (worst > 0)
        if keep.sum() < 2:
            raise ValueError("need at least two positive differences to fit an envelope")
        t, y = self.times[keep], np.log(worst[keep] / self.delta_norm)
        B = float(np.polyfit(t, y, 1)[0])
        A = float(np.max(worst[keep] / (self.delta_norm * np.exp(B * t))))
        self.envelope = (A, B)
        return A, B


def normalize(grid: PeriodicGrid, u: np.ndarray) -> np.ndarray:
    return u / np.sqrt(inner_product(grid, u, u).real)


class HartreeSystem:
    """Pre-sampled potentials and spectral multipliers for one grid and mixture."""

    def __init__(self, grid: PeriodicGrid, spec: MixtureSpec):
        self.grid = grid
        self.spec = spec
        self.potential_samples = spec.potentials.sample_all(grid)
        axes = tuple(range(-grid.dim, 0))
        self._vhat = np.fft.fftn(self.potential_samples, axes=axes)
        self._axes = axes
        self._weights = spec.cross_weights()
        self._kin_cache: dict[float, np.ndarray] = {}

    def convolved_densities(self, u: np.ndarray) -> np.ndarray:
        """Array C[q, r] = V_qr * |u_r|^2, shape (p, p, *grid)."""
        rho_hat = np.fft.fftn(np.abs(u) ** 2, axes=self._axes)
        conv = np.fft.ifftn(self._vhat * rho_hat[None], axes=self._axes).real
        return self.grid.cell_volume * conv

    def mean_field(self, u: np.ndarray) -> np.ndarray:
        """Potential W_q(x) acting on component q, shape (p, *grid)."""
        conv = self.convolved_densities(u)
        return np.einsum("qr,qr...->q...", self._weights, conv)

    def kinetic(self, u: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(self.grid.k_squared * np.fft.fftn(u, axes=self._axes), axes=self._axes)

    def rhs(self, u: np.ndarray) -> np.ndarray:
        return -1j * (self.kinetic(u) + self.mean_field(u) * u)

    def _kinetic_phase(self, dt: float) -> np.ndarray:
        ph = self._kin_cache.get(dt)
        if ph is None:
            ph = np.exp(-1j * self.grid.k_squared * dt)
            self._kin_cache[dt] = ph
        return ph

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        half = self._kinetic_phase(0.5 * dt)
        ax = self._axes
        u = np.fft.ifftn(half * np.fft.fftn(u, axes=ax), axes=ax)
        # |u| is invariant under the potential substep, so this phase is its exact flow
        u = np.exp(-1j * dt * self.mean_field(u)) * u
        u = np.fft.ifftn(half * np.fft.fftn(u, axes=ax), axes=ax)
        if not np.all(np.isfinite(u)):
            raise NumericalAbort("non-finite values in Hartree step")
        return u

    def energy(self, u: np.ndarray) -> float:
        c = self.spec.c
        h = self.grid.cell_volume
        p = self.spec.p
        lap = self.kinetic(u)
        kin = np.array([h * np.vdot(u[q], lap[q]).real for q in range(p)])
        conv = self.convolved_densities(u)
        rho = np.abs(u) ** 2
        pair = np.array(
            [[h * np.sum(rho[q] * conv[q, r]) for r in range(p)] for q in range(p)]
        )
        cross = np.outer(c, c) * pair
        np.fill_diagonal(cross, 0.0)
        return float(c @ kin + 0.5 * c @ np.diag(pair) + 0.5 * cross.sum())

    def diagnostics(self, state: OrbitalSet) -> HartreeDiagnostics:
        return HartreeDiagnostics(
            masses=tuple(float(m) for m in state.masses()),
            weighted_energy=self.energy(state.orbitals),
            time=state.time,
        )


def gaussian_orbital(grid: PeriodicGrid, center=None, width: float = 1.0,
                     kick=0) -> np.ndarray:
    """Normalized periodic Gaussian packet with momentum ``2*pi*kick/L`` per axis.

    Distances are taken with the minimum-image convention around ``center``
    (default: middle of the box), so the packet is smooth across the boundary
    whenever it is well localized.
    """
    L = grid.length
    center = np.broadcast_to(np.asarray(L / 2 if center is None else center, float), (grid.dim,))
    kick = np.broadcast_to(np.asarray(kick, dtype=float), (grid.dim,))
    mesh = grid.mesh()
    r2 = 0.0
    phase = 0.0
    for ax, x in enumerate(mesh):
        d = (x - center[ax] + L / 2) % L - L / 2
        r2 = r2 + d**2
        phase = phase + 2 * np.pi * kick[ax] * x / L
    return normalize(grid, np.exp(-r2 / (2 * width**2) + 1j * phase))


def plane_wave(grid: PeriodicGrid, mode=0) -> np.ndarray:
    """Normalized plane wave exp(i k.x)/sqrt(L^dim) with integer mode index per axis."""
    mode = np.broadcast_to(np.asarray(mode, dtype=float), (grid.dim,))
    phase = sum(2 * np.pi * m * x / grid.length for m, x in zip(mode, grid.mesh()))
    return np.exp(1j * phase) / np.sqrt(grid.length**grid.dim)


def hartree_rhs(state: OrbitalSet, spec: MixtureSpec) -> np.ndarray:
    return HartreeSystem(state.grid, spec).rhs(state.orbitals)


def strang_step(state: OrbitalSet, spec: MixtureSpec, dt: float,
                system: HartreeSystem | None = None) -> OrbitalSet:
    if not dt > 0:
        raise ValueError("dt must be positive")
    system = system or HartreeSystem(state.grid, spec)
    return OrbitalSet(state.grid, system.step(state.orbitals, dt), state.time + dt)


def weighted_energy(state: OrbitalSet, spec: MixtureSpec) -> float:
    return HartreeSystem(state.grid, spec).energy(state.orbitals)


def evolve(
    state: OrbitalSet,
    spec: MixtureSpec,
    t_final: float,
    dt: float,
    stride: int = 1,
    system: HartreeSystem | None = None,
    diagnostics: bool = True,
) -> list[tuple[OrbitalSet, HartreeDiagnostics | None]]:
    """Integrate to ``state.time + t_final``.

    The step is shrunk to ``t_final / ceil(t_final / dt)`` so the last sample
    lands exactly on the final time.  Snapshots are taken every ``stride``
    steps plus the final one.  Masses are checked after every step.
    """
    if t_final < 0 or not dt > 0:
        raise ValueError("need t_final >= 0 and dt > 0")
    system = system or HartreeSystem(state.grid, spec)
    n = int(np.ceil(t_final / dt - 1e-12)) if t_final > 0 else 0
    step = t_final / n if n else 0.0

    def snap(s: OrbitalSet):
        return (s.copy(), system.diagnostics(s) if diagnostics else None)

    out = [snap(state)]
    u = state.orbitals.copy()
    h = state.grid.cell_volume
    for i in range(1, n + 1):
        u = system.step(u, step)
        mass = h * np.sum(np.abs(u.reshape(u.shape[0], -1)) ** 2, axis=1)
        if np.any(np.abs(mass - 1.0) > MASS_WINDOW):
            raise NumericalAbort(f"mass left [1-{MASS_WINDOW}, 1+{MASS_WINDOW}]: {mass}")
        if i % stride == 0 or i == n:
            out.append(snap(OrbitalSet(state.grid, u, state.time + i * step)))
    return out


def evolve_to(state: OrbitalSet, spec: MixtureSpec, t_final: float, dt: float,
              system: HartreeSystem | None = None) -> OrbitalSet:
    """Final state only, no diagnostics."""
    traj = evolve(state, spec, t_final, dt, stride=10**12, system=system, diagnostics=False)
    return traj[-1][0]


def perturbation_study(
    state: OrbitalSet, spec: MixtureSpec, delta, t_final: float, dt: float, stride: int = 1,
) -> PerturbationReport:
    """Co-evolve the system and its copy with ``c_cross + delta`` from the same data."""
    delta = np.asarray(delta, dtype=float)
    base = evolve(state, spec, t_final, dt, stride=stride, diagnostics=False)
    pert = evolve(state, spec.perturbed(delta), t_final, dt, stride=stride, diagnostics=False)
    h = state.grid.cell_volume
    times = np.array([s.time for s, _ in base])
    diffs = np.array([
        np.sqrt(h * np.sum(np.abs((a.orbitals - b.orbitals).reshape(a.p, -1)) ** 2, axis=1))
        for (a, _), (b, _) in zip(base, pert)
    ])
    return PerturbationReport(times, diffs, float(np.linalg.norm(delta)))
