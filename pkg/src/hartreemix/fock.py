"""Truncated Fock-space numerics for the Weyl-operator and number-bound lemmas.

Everything the lemmas talk about lives in the span of a single orbital u, so
the default space is one mode truncated at ``n_max`` particles.  A multi-mode
variant (total occupation <= n_max) exists for the creation/annihilation bounds
with genuinely vector-valued test functions.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from hartreemix.errors import TailGuardError


@dataclass(frozen=True)
class ModeOperators:
    a: np.ndarray
    a_dag: np.ndarray
    number: np.ndarray
    parity: np.ndarray


@dataclass(frozen=True)
class TruncatedFock:
    n_max: int
    modes: int = 1

    def __post_init__(self):
        if self.n_max < 1 or self.modes < 1:
            raise ValueError("need n_max >= 1 and modes >= 1")

    @cached_property
    def states(self) -> np.ndarray:
        """Occupation vectors with total <= n_max, ordered by total then descending lex."""
        if self.modes == 1:
            return np.arange(self.n_max + 1)[:, None]
        occ = [s for s in product(range(self.n_max + 1), repeat=self.modes) if sum(s) <= self.n_max]
        occ.sort(key=lambda s: (sum(s), tuple(-x for x in s)))
        return np.array(occ)

    @property
    def dim(self) -> int:
        return len(self.states)

    @cached_property
    def totals(self) -> np.ndarray:
        return self.states.sum(axis=1)

    @cached_property
    def lowering(self) -> list[np.ndarray]:
        """Dense a_i for every mode."""
        index = {tuple(s): i for i, s in enumerate(self.states)}
        ops = []
        for mode in range(self.modes):
            a = np.zeros((self.dim, self.dim))
            for j, s in enumerate(self.states):
                if s[mode] > 0:
                    t = list(s)
                    t[mode] -= 1
                    a[index[tuple(t)], j] = np.sqrt(s[mode])
            ops.append(a)
        return ops

    @cached_property
    def ops(self) -> ModeOperators:
        """Single-mode (or first-mode) ladder operators; number counts all modes."""
        a = self.lowering[0]
        n = np.diag(self.totals.astype(float))
        return ModeOperators(a, a.T.copy(), n, np.diag((-1.0) ** self.totals))

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    def sector_projector(self, m: int) -> np.ndarray:
        return np.diag((self.totals == m).astype(float))


@dataclass
class CheckReport:
    name: str
    parameters: dict
    margin: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _tail_guard(fock: TruncatedFock, z: complex) -> None:
    if fock.modes != 1:
        raise ValueError("Weyl operators are built on the single-mode space")
    if abs(z) ** 2 > fock.n_max / 4:
        raise TailGuardError(f"|z|^2 = {abs(z)**2:.3g} exceeds n_max/4 = {fock.n_max/4:.3g}")


def _weyl(fock: TruncatedFock, z: complex) -> np.ndarray:
    a = fock.ops.a
    return scipy.linalg.expm(z * a.T - np.conj(z) * a)


def weyl_operator(fock: TruncatedFock, z: complex) -> np.ndarray:
    """exp(z a+ - conj(z) a) on the truncated space (unitary exactly; Pade expm)."""
    _tail_guard(fock, z)
    return _weyl(fock, z)


def unitarity_residual(W: np.ndarray) -> float:
    return float(np.max(np.abs(W.conj().T @ W - np.eye(len(W)))))


def coherent_sector_weights(fock: TruncatedFock, z: complex) -> np.ndarray:
    """||P_n W(z) Omega||^2 for n = 0..n_max."""
    state = weyl_operator(fock, z) @ fock.vacuum()
    return np.abs(state) ** 2


def poisson_profile(n_max: int, z: complex) -> np.ndarray:
    n = np.arange(n_max + 1)
    lam = abs(z) ** 2
    if lam == 0:
        return (n == 0).astype(float)
    return np.exp(-lam + n * np.log(lam) - gammaln(n + 1))


def d_constant(N) -> float:
    """sqrt(N!) / (N^(N/2) e^(-N/2)), evaluated in the log domain."""
    N = np.asarray(N)
    if np.any(N < 1):
        raise ValueError("d_N is defined for N >= 1")
    out = np.exp(0.5 * gammaln(N + 1) - 0.5 * N * np.log(N) + 0.5 * N)
    return float(out) if out.ndim == 0 else out


def check_relbN(fock: TruncatedFock, trials: int, seed: int = 0) -> CheckReport:
    """Randomized ||a(f)psi|| <= ||f|| ||N^1/2 psi|| and ||a+(f)psi|| <= ||f|| ||(N+1)^1/2 psi||.

    psi is supported on total occupation <= n_max - 1 so that a+ never reaches
    past the truncation.  f is a random normalized vector over the modes.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    lows = fock.lowering
    totals = fock.totals
    support = totals <= fock.n_max - 1
    worst_ann = worst_cre = -np.inf
    violations = 0
    for _ in range(trials):
        psi = np.zeros(fock.dim, dtype=complex)
        k = int(support.sum())
        psi[support] = rng.normal(size=k) + 1j * rng.normal(size=k)
        psi /= np.linalg.norm(psi)
        f = rng.normal(size=fock.modes) + 1j * rng.normal(size=fock.modes)
        f /= np.linalg.norm(f)
        af = sum(np.conj(fi) * a for fi, a in zip(f, lows))
        lhs_ann = np.linalg.norm(af @ psi)
        lhs_cre = np.linalg.norm(af.conj().T @ psi)
        rhs_ann = np.linalg.norm(np.sqrt(totals) * psi)
        rhs_cre = np.linalg.norm(np.sqrt(totals + 1.0) * psi)
        s_ann, s_cre = lhs_ann - rhs_ann, lhs_cre - rhs_cre
        worst_ann, worst_cre = max(worst_ann, s_ann), max(worst_cre, s_cre)
        violations += int(s_ann > 1e-12) + int(s_cre > 1e-12)
    worst = max(worst_ann, worst_cre)
    return CheckReport(
        "relbN",
        {"n_max": fock.n_max, "modes": fock.modes, "trials": trials, "seed": seed},
        margin=-worst,
        passed=violations == 0,
        details={"max_slack_annihilation": worst_ann, "max_slack_creation": worst_cre,
                 "violations": violations},
    )


def weyl_shift_residual(fock: TruncatedFock, z: complex, k_support: int) -> float:
    """||(W+ a W - a - z) P_{<=k_support}||_op, no margin check."""
    W = _weyl(fock, z)
    a = fock.ops.a
    R = W.conj().T @ a @ W - a - z * np.eye(fock.dim)
    return float(np.linalg.norm(R[:, : k_support + 1], 2))


def check_weyl_shift(fock: TruncatedFock, z: complex, k_support: int, tol: float = 1e-8) -> CheckReport:
    if k_support + 4 * abs(z) ** 2 + 8 > fock.n_max:
        raise TailGuardError(
            f"k_support + 4|z|^2 + 8 = {k_support + 4 * abs(z)**2 + 8:.3g} exceeds n_max = {fock.n_max}"
        )
    _tail_guard(fock, z)
    res = weyl_shift_residual(fock, z, k_support)
    W = _weyl(fock, z)
    return CheckReport(
        "weyl_shift",
        {"n_max": fock.n_max, "z": complex(z), "k_support": k_support},
        margin=tol - res,
        passed=res <= tol,
        details={"residual": res, "unitarity_residual": unitarity_residual(W)},
    )


READINGS = ("sqrt_N_factorial", "sqrt_N_minus_1_factorial")


def sector_bound_state(fock: TruncatedFock, N: int, reading: str) -> np.ndarray:
    """W(sqrt(N))* (a+)^{N-1} / norm Omega with norm sqrt(N!) or sqrt((N-1)!)."""
    if reading not in READINGS:
        raise ValueError(f"reading must be one of {READINGS}")
    # (a+)^{N-1} Omega = sqrt((N-1)!) |N-1>
    scale = 1.0 / np.sqrt(N) if reading == "sqrt_N_factorial" else 1.0
    state = np.zeros(fock.dim, dtype=complex)
    state[N - 1] = scale
    W = _weyl(fock, np.sqrt(N))
    return W.conj().T @ state


def check_sector_bounds(N: int, n_max: int, reading: str = "sqrt_N_factorial") -> CheckReport:
    """Even/odd sector norms of W*(sqrt N)(a+)^{N-1}Omega / norm against the displayed bounds.

    Even sectors 2k must stay below 4/d_N and odd sectors 2k+1 below
    4/d_N * (k+1)^{3/2}/sqrt(N), for every k <= N^{1/3}/2.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if n_max < 4 * N + 16:
        raise TailGuardError(f"n_max = {n_max} < 4N + 16 = {4 * N + 16}")
    fock = TruncatedFock(n_max)
    norms = np.abs(sector_bound_state(fock, N, reading))
    dN = d_constant(N)
    k_top = int(np.floor(0.5 * N ** (1.0 / 3.0) + 1e-12))
    even, odd = [], []
    margin = np.inf
    for k in range(k_top + 1):
        be = 4.0 / dN
        bo = 4.0 / dN * (k + 1) ** 1.5 / np.sqrt(N)
        ne, no = norms[2 * k], norms[2 * k + 1]
        even.append({"k": k, "norm": ne, "bound": be})
        odd.append({"k": k, "norm": no, "bound": bo})
        margin = min(margin, be - ne, bo - no)
    return CheckReport(
        "sector_bounds",
        {"N": N, "n_max": n_max, "reading": reading},
        margin=float(margin),
        passed=bool(margin >= 0),
        details={"d_N": dN, "k_max": k_top, "even": even, "odd": odd},
    )


def check_parity_structure(fock: TruncatedFock, generator: np.ndarray, tol: float = 1e-10) -> CheckReport:
    """Does G commute with (-1)^N, and does <Omega, e^{iG}* a e^{iG} Omega> vanish?"""
    P = fock.ops.parity
    G = np.asarray(generator)
    comm = float(np.max(np.abs(G @ P - P @ G)))
    U = scipy.linalg.expm(1j * G)
    omega = fock.vacuum()
    moment = abs(np.vdot(U @ omega, fock.ops.a @ (U @ omega)))
    passed = comm <= tol and moment <= 1e-9
    return CheckReport(
        "parity_structure",
        {"n_max": fock.n_max},
        margin=float(tol - comm),
        passed=bool(passed),
        details={"commutator": comm, "odd_moment": float(moment)},
    )


def squeezing_generator(fock: TruncatedFock, strength: float = 0.3) -> np.ndarray:
    a = fock.ops.a
    return strength * (a.T @ a.T + a @ a)


def linear_generator(fock: TruncatedFock, strength: float = 0.3) -> np.ndarray:
    a = fock.ops.a
    return strength * (a + a.T)
