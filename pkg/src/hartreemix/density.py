"""Reduced density tensors, Hartree projectors and trace/HS distances.

Matrices here are operators on the discretized one-particle-per-component
space written in the orthonormal site basis e_m = delta_m / sqrt(h^dim), so the
plain matrix trace is the operator trace.  The continuum integral kernel is
``matrix / h^(dim*p)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hartreemix.errors import CapExceededError
from hartreemix.grid import DENSE_CAP, PeriodicGrid
from hartreemix.manybody import FockBasis, ManyBodyState

HERMITIAN_TOL = 1e-8


@dataclass
class ReducedDensityTensor:
    grid: PeriodicGrid
    p: int
    matrix: np.ndarray

    @property
    def kernel(self) -> np.ndarray:
        return self.matrix / self.grid.cell_volume**self.p

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validate(self, herm_tol=1e-10, psd_tol=1e-9, trace_tol=1e-9) -> list[str]:
        """Names of violated density invariants (empty if all hold)."""
        problems = []
        if self.hermiticity_error() > herm_tol:
            problems.append(f"hermiticity error {self.hermiticity_error():.3e}")
        lo = self.eigenvalues()[0]
        if lo < -psd_tol:
            problems.append(f"negative eigenvalue {lo:.3e}")
        if abs(self.trace() - 1.0) > trace_tol:
            problems.append(f"trace {self.trace():.15f}")
        return problems

    def component_marginal(self, q: int) -> np.ndarray:
        """One-particle density of component q (partial trace over the others)."""
        M = self.grid.size
        t = self.matrix.reshape((M,) * (2 * self.p))
        letters = "abcdefghijklmnopqrstuvwxyz"
        rows = list(letters[: self.p])
        cols = list(letters[self.p: 2 * self.p])
        for r in range(self.p):
            if r != q:
                cols[r] = rows[r]
        return np.einsum("".join(rows + cols) + "->" + rows[q] + cols[q], t)

    def to_csv(self, path) -> None:
        write_matrix_csv(self.matrix, path)


@dataclass
class HartreeProjector:
    grid: PeriodicGrid
    vector: np.ndarray  # orthonormal-basis coefficients of u_1 (x) ... (x) u_p

    @property
    def matrix(self) -> np.ndarray:
        return np.outer(self.vector, self.vector.conj())


def hartree_projector(grid: PeriodicGrid, orbitals: np.ndarray) -> HartreeProjector:
    sq = np.sqrt(grid.cell_volume)
    v = np.ones(1, dtype=complex)
    for u in orbitals:
        v = np.kron(v, sq * np.ravel(u))
    return HartreeProjector(grid, v)


def _lowered_states(tensor: np.ndarray, comps: list[FockBasis], lowered: list[FockBasis]):
    """Yield (a_{m_1}...a_{m_p} psi) for all multi-indices m in row-major order."""
    ops = [[b.lowering(m, lb) for m in range(b.modes)] for b, lb in zip(comps, lowered)]

    def apply(t, q):
        if q == len(comps):
            yield t.ravel()
            return
        moved = np.moveaxis(t, q, 0)
        flat = moved.reshape(moved.shape[0], -1)
        for op in ops[q]:
            out = (op @ flat).reshape((op.shape[0],) + moved.shape[1:])
            yield from apply(np.moveaxis(out, 0, q), q + 1)

    yield from apply(tensor, 0)


def reduced_density(psi: ManyBodyState, grid: PeriodicGrid) -> ReducedDensityTensor:
    """gamma[(m), (m')] = <psi, prod_q a+_{m'_q} a_{m_q} psi> / <psi, prod_q N_q psi>."""
    comps = psi.basis.components
    if any(b.particles < 1 for b in comps):
        raise ValueError("reduced density needs at least one particle per component")
    p = len(comps)
    side = grid.size**p
    if side > DENSE_CAP:
        raise CapExceededError(f"density tensor side {side} exceeds {DENSE_CAP}")
    if comps[0].modes != grid.size:
        raise ValueError("basis and grid disagree on the number of sites")
    lowered = [FockBasis(b.modes, b.particles - 1) for b in comps]
    G = np.array(list(_lowered_states(psi.tensor(), comps, lowered)))
    gamma = G @ G.conj().T
    denom = np.prod([b.particles for b in comps]) * np.vdot(psi.amplitudes, psi.amplitudes).real
    return ReducedDensityTensor(grid, p, gamma / denom)


def _hermitian_check(A: np.ndarray, name: str) -> None:
    err = np.max(np.abs(A - A.conj().T)) if A.size else 0.0
    if err > HERMITIAN_TOL:
        raise ValueError(f"{name} is not Hermitian (max deviation {err:.2e})")


def _as_matrix(A) -> np.ndarray:
    return np.asarray(getattr(A, "matrix", A))


def trace_distance(A, B) -> float:
    """Trace norm of the Hermitian difference A - B (sum of |eigenvalues|)."""
    A, B = _as_matrix(A), _as_matrix(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    _hermitian_check(A, "A")
    _hermitian_check(B, "B")
    if A.tobytes() > B.tobytes():  # fixed operand order makes the result exactly symmetric
        A, B = B, A
    D = A - B
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (D + D.conj().T)))))


def hs_distance(A, B) -> float:
    A, B = _as_matrix(A), _as_matrix(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.linalg.norm(A - B))


@dataclass(frozen=True)
class RelationReport:
    """Trace vs. Hilbert-Schmidt distance of a density and a rank-one projector.

    ``bound``/``holds`` refer to trace <= sqrt(2p) * HS.  ``rank_one_bound`` is
    2 * HS, which always holds: gamma - |u><u| has at most one negative
    eigenvalue and its trace vanishes, so trace = 2|lambda_-| <= 2 * HS.
    """

    trace_distance: float
    hs_distance: float
    bound: float
    holds: bool
    rank_one_bound: float
    holds_rank_one: bool
    issues: tuple[str, ...] = ()


def check_norm_relation(gamma, projector, p: int | None = None, slack: float = 1e-9) -> RelationReport:
    if p is None:
        p = getattr(gamma, "p", 1)
    issues = []
    if isinstance(gamma, ReducedDensityTensor):
        issues.extend(gamma.validate())
    P = _as_matrix(projector)
    if abs(np.trace(P).real - 1) > 1e-9 or np.max(np.abs(P @ P - P)) > 1e-9:
        issues.append("projector is not a trace-one projection")
    td = trace_distance(gamma, projector)
    hs = hs_distance(gamma, projector)
    bound = np.sqrt(2 * p) * hs
    return RelationReport(td, hs, float(bound), bool(td <= bound + slack),
                          2 * hs, bool(td <= 2 * hs + slack), tuple(issues))


def hs_tensor_identity_check(A: np.ndarray, B: np.ndarray, tol: float = 1e-10) -> bool:
    """||A (x) B||_HS == ||A||_HS * ||B||_HS."""
    lhs = np.linalg.norm(np.kron(A, B))
    rhs = np.linalg.norm(A) * np.linalg.norm(B)
    return bool(abs(lhs - rhs) <= tol * max(1.0, rhs))


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for (i, j), z in np.ndenumerate(matrix):
            w.writerow([i, j, repr(float(z.real)), repr(float(z.imag))])
