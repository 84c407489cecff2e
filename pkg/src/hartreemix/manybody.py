"""Exact many-body dynamics in fixed-particle-number occupation bases.

Each component q lives in the bosonic space of N_q particles on the M^dim
grid sites.  Site modes carry the h-weighting ``a(x_m) = a_m / sqrt(h^dim)``
so that a normalized orbital u has single-mode amplitudes
``sqrt(h^dim) * u(x_m)`` and the continuum second-quantized Hamiltonian
becomes, per component,

    sum_{mm'} T_mm' a+_m a_m' + 1/(2 N_q) sum_{mm'} V_qq(x_m - x_m') a+_m a+_m' a_m' a_m

plus ``1/N sum_{mm'} V_qr(x_m - x_m') n^q_m n^r_m'`` for every pair q < r,
with T the spectral ``-Laplacian`` matrix used by the Hartree solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import comb, gammaln

from hartreemix.errors import CapExceededError, ConvergenceError
from hartreemix.grid import PeriodicGrid, dense_laplacian
from hartreemix.hartree import MixtureSpec, OrbitalSet
from hartreemix.potentials import pair_matrix

log = logging.getLogger(__name__)

BASIS_CAP = 200_000


def _compositions(n: int, modes: int) -> np.ndarray:
    """All occupation vectors of ``n`` bosons in ``modes`` modes, descending lex order."""
    if modes == 1:
        return np.array([[n]], dtype=np.int64)
    blocks = []
    for first in range(n, -1, -1):
        rest = _compositions(n - first, modes - 1)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.vstack(blocks)


class FockBasis:
    """Occupation basis of ``particles`` bosons in ``modes`` modes.

    States are ordered lexicographically with the first mode's occupation
    descending, e.g. (2,0), (1,1), (0,2).  ``rank`` maps occupation vectors to
    positions in O(modes) by the combinatorial number system.
    """

    def __init__(self, modes: int, particles: int, cap: int = BASIS_CAP):
        if modes < 1 or particles < 0:
            raise ValueError("need modes >= 1 and particles >= 0")
        size = int(comb(particles + modes - 1, particles, exact=True))
        if size > cap:
            raise CapExceededError(
                f"basis of {particles} bosons in {modes} modes has {size} states (> {cap})"
            )
        self.modes = modes
        self.particles = particles
        self.states = _compositions(particles, modes)
        assert len(self.states) == size
        # table[k, s] = C(s - 1 + k, k): number of compositions of s' < s into k parts
        s = np.arange(particles + 2)
        k = np.arange(modes)
        self._table = comb(s[None, :] - 1 + k[:, None], k[:, None], exact=False)
        self._table[:, 0] = 0.0

    def __len__(self) -> int:
        return len(self.states)

    @property
    def size(self) -> int:
        return len(self.states)

    def rank(self, occ: np.ndarray) -> np.ndarray:
        """Positions of occupation vectors (shape (..., modes)) in this basis."""
        occ = np.asarray(occ, dtype=np.int64)
        remaining = self.particles - np.cumsum(occ, axis=-1) + occ
        slack = remaining - occ  # R_i - n_i
        k = self.modes - 1 - np.arange(self.modes)
        r = self._table[k[:-1], slack[..., :-1]].sum(axis=-1)
        return np.rint(r).astype(np.int64)

    def index(self, occ: Sequence[int]) -> int:
        occ = np.asarray(occ)
        if occ.shape != (self.modes,) or occ.sum() != self.particles or np.any(occ < 0):
            raise KeyError(tuple(occ))
        return int(self.rank(occ))

    def lowering(self, mode: int, target: "FockBasis") -> sp.csr_matrix:
        """Matrix of a_mode from this basis into ``target`` (particles - 1)."""
        cols = np.nonzero(self.states[:, mode] > 0)[0]
        lowered = self.states[cols].copy()
        vals = np.sqrt(lowered[:, mode].astype(float))
        lowered[:, mode] -= 1
        rows = target.rank(lowered)
        return sp.csr_matrix((vals, (rows, cols)), shape=(target.size, self.size))


def build_basis(M: int, N_q: int, cap: int = BASIS_CAP) -> FockBasis:
    if M < 2 or N_q < 1:
        raise ValueError("need M >= 2 sites and N_q >= 1 particles")
    return FockBasis(M, N_q, cap)


@dataclass
class JointBasis:
    components: list[FockBasis]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.components)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))

    @property
    def particles(self) -> tuple[int, ...]:
        return tuple(b.particles for b in self.components)

    @property
    def modes(self) -> int:
        return self.components[0].modes


def build_joint_basis(M: int, N: Sequence[int], cap: int = BASIS_CAP) -> JointBasis:
    jb = JointBasis([build_basis(M, n, cap) for n in N])
    if jb.dimension > cap:
        raise CapExceededError(f"joint dimension {jb.dimension} exceeds cap {cap}")
    return jb


@dataclass
class ManyBodyState:
    basis: JointBasis
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.basis.dims)


@dataclass
class ManyBodyHamiltonian:
    basis: JointBasis
    matrix: sp.csr_matrix
    scaling: dict = field(default_factory=dict)

    @cached_property
    def norm_estimate(self) -> float:
        """Max absolute row sum, an upper bound on the spectral norm."""
        return float(abs(self.matrix).sum(axis=1).max())

    def expectation(self, psi: ManyBodyState) -> float:
        a = psi.amplitudes
        return float(np.vdot(a, self.matrix @ a).real)


def one_body_operator(basis: FockBasis, T: np.ndarray) -> sp.csr_matrix:
    """sum_{mm'} T_mm' a+_m a_m' in a fixed-N basis (T real symmetric)."""
    states = basis.states
    M = basis.modes
    diag = states @ np.diag(T)
    rows, cols, vals = [np.arange(basis.size)], [np.arange(basis.size)], [diag]
    for src in range(M):
        occupied = np.nonzero(states[:, src] > 0)[0]
        if len(occupied) == 0:
            continue
        for dst in range(M):
            if dst == src or T[dst, src] == 0.0:
                continue
            moved = states[occupied].copy()
            amp = np.sqrt(moved[:, src] * (moved[:, dst] + 1.0))
            moved[:, src] -= 1
            moved[:, dst] += 1
            rows.append(basis.rank(moved))
            cols.append(occupied)
            vals.append(T[dst, src] * amp)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.size, basis.size),
    )


def intra_interaction_diagonal(basis: FockBasis, Vmat: np.ndarray, N_q: int) -> np.ndarray:
    """Diagonal of 1/(2N_q) sum V(x_m - x_m') a+_m a+_m' a_m' a_m."""
    n = basis.states.astype(float)
    pairs = np.einsum("im,mk,ik->i", n, Vmat, n) - n @ np.diag(Vmat)
    return pairs / (2.0 * N_q)


def _kron_list(ops: list) -> sp.csr_matrix:
    out = ops[0]
    for op in ops[1:]:
        out = sp.kron(out, op, format="csr")
    return sp.csr_matrix(out)


def build_hamiltonian(grid: PeriodicGrid, spec: MixtureSpec, basis: JointBasis,
                      cap: int = BASIS_CAP) -> ManyBodyHamiltonian:
    if basis.modes != grid.size:
        raise ValueError(f"basis has {basis.modes} modes but grid has {grid.size} sites")
    if basis.particles != spec.N:
        raise ValueError(f"basis particle numbers {basis.particles} != mixture {spec.N}")
    if basis.dimension > cap:
        raise CapExceededError(f"joint dimension {basis.dimension} exceeds cap {cap}")
    p = spec.p
    T = dense_laplacian(grid)
    samples = spec.potentials.sample_all(grid)
    Vmats = [[pair_matrix(samples[q, r], grid) for r in range(p)] for q in range(p)]
    for q in range(p):
        for r in range(p):
            if not np.array_equal(Vmats[q][r], Vmats[r][q].T):
                raise ValueError(f"pair potential ({q}, {r}) is not symmetric")

    eyes = [sp.identity(d, format="csr") for d in basis.dims]
    H = sp.csr_matrix((basis.dimension, basis.dimension))
    diag = np.zeros(basis.dims)
    for q, b in enumerate(basis.components):
        block = one_body_operator(b, T)
        block = block + sp.diags(intra_interaction_diagonal(b, Vmats[q][q], spec.N[q]))
        H = H + _kron_list(eyes[:q] + [block] + eyes[q + 1:])
    for q in range(p):
        nq = basis.components[q].states.astype(float)
        for r in range(q + 1, p):
            nr = basis.components[r].states.astype(float)
            inter = (nq @ Vmats[q][r] @ nr.T) / spec.N_total
            shape = [1] * p
            shape[q], shape[r] = inter.shape
            diag = diag + inter.reshape(shape)
    H = sp.csr_matrix(H + sp.diags(diag.ravel()))
    H = sp.csr_matrix(0.5 * (H + H.T))  # mirror; exact Hermiticity for a real matrix
    H.sum_duplicates()
    H.eliminate_zeros()
    assert (H - H.T).count_nonzero() == 0
    return ManyBodyHamiltonian(
        basis, H, {"intra": [f"1/{n}" for n in spec.N], "inter": f"1/{spec.N_total}"}
    )


def component_product_amplitudes(basis: FockBasis, modes: np.ndarray) -> np.ndarray:
    """Amplitudes sqrt(N!/prod n_i!) prod c_i^{n_i} of (a+(c))^N/sqrt(N!) |0>."""
    n = basis.states
    log_coef = 0.5 * (gammaln(basis.particles + 1) - gammaln(n + 1).sum(axis=1))
    powers = np.prod(np.power(modes[None, :], n), axis=1)
    return np.exp(log_coef) * powers


def product_state(basis: JointBasis, orbitals: OrbitalSet) -> ManyBodyState:
    """Tensor product over components of u_q^{(x) N_q}."""
    sq = np.sqrt(orbitals.grid.cell_volume)
    amps = None
    for q, b in enumerate(basis.components):
        c = sq * orbitals.orbitals[q].ravel()
        a = component_product_amplitudes(b, c)
        amps = a if amps is None else np.kron(amps, a)
    return ManyBodyState(basis, amps.astype(complex))


def number_expectations(psi: ManyBodyState) -> np.ndarray:
    probs = np.abs(psi.tensor()) ** 2
    p = len(psi.basis.components)
    out = np.empty(p)
    for q, b in enumerate(psi.basis.components):
        marginal = probs.sum(axis=tuple(a for a in range(p) if a != q))
        out[q] = marginal @ b.states.sum(axis=1)
    return out / np.sum(probs)


def _lanczos(matvec, v: np.ndarray, m: int):
    """Lanczos with full reorthogonalization.

    Returns (V, alpha, beta, beta_next): V has k <= m orthonormal columns,
    beta the k-1 off-diagonals, beta_next the residual norm (0 on breakdown).
    """
    n = v.size
    k_max = min(m, n)
    V = np.zeros((n, k_max), dtype=complex)
    alpha = np.zeros(k_max)
    beta = np.zeros(k_max)
    V[:, 0] = v
    for j in range(k_max):
        w = matvec(V[:, j])
        alpha[j] = np.vdot(V[:, j], w).real
        w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        if b < 1e-13 * max(1.0, abs(alpha[j])):
            return V[:, : j + 1], alpha[: j + 1], beta[:j], 0.0
        if j + 1 < k_max:
            V[:, j + 1] = w / b
    return V, alpha, beta[: k_max - 1], beta[k_max - 1] if k_max == m else 0.0


def krylov_propagate(H, psi: ManyBodyState, t: float, tol: float = 1e-9,
                     krylov_dim: int = 30, max_substeps: int = 100_000) -> ManyBodyState:
    """Approximate exp(-iHt) psi by Lanczos with adaptive substeps.

    The local error of a substep tau is estimated by
    beta * h_{k+1,k} * |e_k^T tau phi_1(-i tau T_k) e_1| (augmented-matrix trick)
    and accepted when it is below ``tol * tau / |t|``, so the accumulated error
    stays below ``tol``.  The Krylov basis does not depend on tau, so rejected
    trials only halve tau and re-exponentiate the small tridiagonal matrix.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A = H.matrix if isinstance(H, ManyBodyHamiltonian) else H
    w = np.asarray(psi.amplitudes, dtype=complex).copy()
    if t == 0:
        return ManyBodyState(psi.basis, w)
    sign = np.sign(t)
    remaining = abs(t)
    total = abs(t)
    substeps = 0
    while remaining > 0:
        substeps += 1
        if substeps > max_substeps:
            raise ConvergenceError(f"Krylov propagation exceeded {max_substeps} substeps")
        beta0 = np.linalg.norm(w)
        V, alpha, beta, beta_next = _lanczos(lambda x: A @ x, w / beta0, krylov_dim)
        k = len(alpha)
        Tk = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        tau = remaining
        while True:
            aug = np.zeros((k + 1, k + 1), dtype=complex)
            aug[:k, :k] = -1j * sign * tau * Tk
            aug[k, k - 1] = tau * beta_next
            E = scipy.linalg.expm(aug)
            err = beta0 * abs(E[k, 0])
            if beta_next == 0.0 or err <= tol * tau / total:
                break
            tau *= 0.5
            if tau < total * 1e-14:
                raise ConvergenceError("Krylov step size underflow")
        w = beta0 * (V @ E[:k, 0])
        remaining = remaining - tau if tau < remaining else 0.0
    return ManyBodyState(psi.basis, w)


def dense_propagate(H, psi: ManyBodyState, t: float) -> ManyBodyState:
    """Reference exp(-iHt) psi by dense scaling-and-squaring (small dimensions only)."""
    A = H.matrix if isinstance(H, ManyBodyHamiltonian) else H
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    if A.shape[0] > 4096:
        raise CapExceededError("dense propagation limited to dimension 4096")
    return ManyBodyState(psi.basis, scipy.linalg.expm(-1j * t * A) @ psi.amplitudes)
