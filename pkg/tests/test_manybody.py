from itertools import product
from math import comb

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from hartreemix.errors import CapExceededError
from hartreemix.grid import make_grid
from hartreemix.hartree import MixtureSpec, OrbitalSet, evolve_to, gaussian_orbital
from hartreemix.manybody import (
    ManyBodyState,
    build_basis,
    build_hamiltonian,
    build_joint_basis,
    dense_propagate,
    krylov_propagate,
    number_expectations,
    product_state,
)
from hartreemix.potentials import PotentialMatrix, PotentialSpec


def _brute_basis(M, N):
    occ = [s for s in product(range(N + 1), repeat=M) if sum(s) == N]
    return sorted(occ, reverse=True)


@pytest.mark.parametrize("M,N,size", [(2, 2, 3), (3, 2, 6), (8, 4, 330)])
def test_basis_sizes_and_order(M, N, size):
    b = build_basis(M, N)
    assert b.size == size == comb(N + M - 1, N)
    assert [tuple(s) for s in b.states] == _brute_basis(M, N)


def test_two_site_basis_listing():
    assert [tuple(s) for s in build_basis(2, 2).states] == [(2, 0), (1, 1), (0, 2)]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(1, 6))
def test_rank_is_inverse_of_listing(M, N):
    b = build_basis(M, N)
    np.testing.assert_array_equal(b.rank(b.states), np.arange(b.size))
    assert len({tuple(s) for s in b.states}) == b.size


def test_basis_cap():
    with pytest.raises(CapExceededError):
        build_basis(8, 10, cap=1000)
    with pytest.raises(CapExceededError):
        build_joint_basis(6, (4, 4), cap=10_000)


def test_joint_dimension_is_product():
    jb = build_joint_basis(4, (2, 3))
    assert jb.dimension == 10 * 20


def _spec(N, pots):
    return MixtureSpec(tuple(N), PotentialMatrix(pots))


def test_free_single_particle_spectrum():
    g = make_grid(1, 6, 3.0)
    H = build_hamiltonian(g, MixtureSpec((1,), PotentialMatrix.zero(1)), build_joint_basis(6, (1,)))
    ev = np.linalg.eigvalsh(H.matrix.toarray())
    np.testing.assert_allclose(ev, np.sort(g.k_squared), atol=1e-12)


def test_two_site_two_particle_hand_matrix():
    g = make_grid(1, 2, 2.0)
    v = 0.8
    spec = _spec((2,), [[PotentialSpec("gaussian", v, 0.0)]])
    H = build_hamiltonian(g, spec, build_joint_basis(2, (2,))).matrix.toarray()
    pi2 = np.pi**2
    s = -pi2 / np.sqrt(2)
    expected = np.array([[pi2, s, 0], [s, pi2, s], [0, s, pi2]]) + v / 2 * np.eye(3)
    np.testing.assert_allclose(H, expected, atol=1e-12)


def test_one_plus_one_matches_kronecker():
    g = make_grid(1, 4, 3.0)
    V12 = PotentialSpec("gaussian", 0.9, 0.7)
    spec = _spec((1, 1), [[PotentialSpec("gaussian", 5.0, 1.0), V12], [V12, PotentialSpec("gaussian", 2.0, 1.0)]])
    H = build_hamiltonian(g, spec, build_joint_basis(4, (1, 1))).matrix.toarray()
    x = g.positions
    d = (x[:, None] - x[None, :] + 1.5) % 3.0 - 1.5
    T = np.real(np.fft.ifft(np.fft.fft(np.eye(4), axis=0) * g.k_squared[:, None], axis=0))
    I = np.eye(4)
    expected = np.kron(T, I) + np.kron(I, T) + 0.5 * np.diag((0.9 * np.exp(-0.7 * d**2)).ravel())
    np.testing.assert_allclose(H, expected, atol=1e-12)


def test_hamiltonian_hermitian_and_grid_checked():
    g = make_grid(1, 4, 3.0)
    V = PotentialSpec("gaussian", 0.5, 1.0)
    spec = _spec((2, 2), [[V, V], [V, V]])
    H = build_hamiltonian(g, spec, build_joint_basis(4, (2, 2))).matrix
    assert (H - H.conj().T).count_nonzero() == 0
    with pytest.raises(ValueError):
        build_hamiltonian(make_grid(1, 5, 3.0), spec, build_joint_basis(4, (2, 2)))


def test_product_state_localized_and_multinomial():
    g = make_grid(1, 2, 2.0)
    u = np.zeros(2)
    u[0] = 1 / np.sqrt(g.spacing)
    psi = product_state(build_joint_basis(2, (3,)), OrbitalSet(g, u[None]))
    np.testing.assert_allclose(psi.amplitudes, [1, 0, 0, 0], atol=1e-15)
    flat = np.full(2, 1 / np.sqrt(2 * g.spacing))
    psi = product_state(build_joint_basis(2, (2,)), OrbitalSet(g, flat[None]))
    np.testing.assert_allclose(psi.amplitudes, [0.5, 1 / np.sqrt(2), 0.5], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_product_state_normalized(seed, N):
    rng = np.random.default_rng(seed)
    g = make_grid(1, 5, 2.0)
    u = rng.normal(size=5) + 1j * rng.normal(size=5)
    u /= np.sqrt(g.spacing * np.sum(np.abs(u) ** 2))
    psi = product_state(build_joint_basis(5, (N, 2)), OrbitalSet(g, np.stack([u, u])))
    assert abs(psi.norm() - 1) <= 1e-12


def test_number_expectations(rng):
    jb = build_joint_basis(3, (2, 3))
    e = np.zeros(jb.dimension, complex)
    e[7] = 1
    assert np.array_equal(number_expectations(ManyBodyState(jb, e)), [2.0, 3.0])
    a = rng.normal(size=jb.dimension) + 1j * rng.normal(size=jb.dimension)
    np.testing.assert_allclose(number_expectations(ManyBodyState(jb, a / np.linalg.norm(a))), [2, 3], atol=1e-12)


def _random_setup(M=4, N=(2, 2), L=3.0):
    g = make_grid(1, M, L)
    a, b, c = (PotentialSpec("gaussian", s, 1.0) for s in (0.6, 0.8, 0.4))
    spec = _spec(N, [[a, c], [c, b]])
    jb = build_joint_basis(M, N)
    H = build_hamiltonian(g, spec, jb)
    u = np.stack([gaussian_orbital(g, 1.0, 0.6, 1), gaussian_orbital(g, 2.0, 0.6, -1)])
    return g, spec, jb, H, product_state(jb, OrbitalSet(g, u))


def test_krylov_zero_time_unchanged():
    *_, H, psi = _random_setup()
    out = krylov_propagate(H, psi, 0.0)
    assert np.array_equal(out.amplitudes, psi.amplitudes)


def test_krylov_diagonal_phase(rng):
    jb = build_joint_basis(4, (3,))
    E = rng.normal(size=jb.dimension) * 5
    a = rng.normal(size=jb.dimension) + 1j * rng.normal(size=jb.dimension)
    psi = ManyBodyState(jb, a / np.linalg.norm(a))
    out = krylov_propagate(sp.diags(E).tocsr(), psi, 0.7, tol=1e-10)
    assert np.max(np.abs(out.amplitudes - np.exp(-1j * E * 0.7) * psi.amplitudes)) <= 1e-9


@pytest.mark.parametrize("M,N,t", [(4, (2, 2), 0.5), (6, (2, 2), 1.0), (8, (3,), 1.0), (4, (3, 2), 0.25)])
def test_krylov_matches_dense_expm(M, N, t):
    tol = 1e-9
    g = make_grid(1, M, float(M))
    V = PotentialSpec("gaussian", 0.5, 1.0)
    spec = _spec(N, [[V] * len(N)] * len(N))
    jb = build_joint_basis(M, N)
    assert jb.dimension <= 512
    H = build_hamiltonian(g, spec, jb)
    u = np.stack([gaussian_orbital(g, M / 3 * (q + 1), 0.8, 1) for q in range(len(N))])
    psi = product_state(jb, OrbitalSet(g, u))
    ref = dense_propagate(H, psi, t).amplitudes
    out = krylov_propagate(H, psi, t, tol=tol)
    assert np.linalg.norm(out.amplitudes - ref) <= 10 * tol
    assert abs(out.norm() - 1) <= 10 * tol
    assert abs(H.expectation(out) - H.expectation(psi)) <= 10 * tol * H.norm_estimate


def test_krylov_negative_time_inverts():
    *_, H, psi = _random_setup()
    back = krylov_propagate(H, krylov_propagate(H, psi, 0.4), -0.4)
    assert np.linalg.norm(back.amplitudes - psi.amplitudes) <= 1e-8


def test_krylov_deterministic():
    *_, H, psi = _random_setup()
    a = krylov_propagate(H, psi, 0.6).amplitudes
    b = krylov_propagate(H, psi, 0.6).amplitudes
    assert np.array_equal(a, b)


def test_zero_interaction_stays_product():
    g = make_grid(1, 6, 4.0)
    spec = MixtureSpec((2, 2), PotentialMatrix.zero(2))
    jb = build_joint_basis(6, (2, 2))
    H = build_hamiltonian(g, spec, jb)
    u = OrbitalSet(g, np.stack([gaussian_orbital(g, 1.0, 0.7, 1), gaussian_orbital(g, 3.0, 0.7, 0)]))
    psi = krylov_propagate(H, product_state(jb, u), 0.8)
    free = np.fft.ifft(np.exp(-1j * g.k_squared * 0.8) * np.fft.fft(u.orbitals, axis=-1), axis=-1)
    expected = product_state(jb, OrbitalSet(g, free))
    assert np.linalg.norm(psi.amplitudes - expected.amplitudes) <= 1e-8


def test_swapping_identical_components_permutes_amplitudes():
    g = make_grid(1, 4, 3.0)
    a, b, c = (PotentialSpec("gaussian", s, 1.0) for s in (0.6, 0.8, 0.4))
    fwd, rev = _spec((2, 3), [[a, c], [c, b]]), _spec((3, 2), [[b, c], [c, a]])
    jf, jr = build_joint_basis(4, (2, 3)), build_joint_basis(4, (3, 2))
    Hf, Hr = build_hamiltonian(g, fwd, jf).matrix.toarray(), build_hamiltonian(g, rev, jr).matrix.toarray()
    perm = np.arange(jr.dimension).reshape(jr.dims).T.ravel()
    np.testing.assert_array_equal(Hf, Hr[np.ix_(perm, perm)])
    u = np.stack([gaussian_orbital(g, 1.0, 0.6, 1), gaussian_orbital(g, 2.0, 0.6, -1)])
    pf = krylov_propagate(Hf, product_state(jf, OrbitalSet(g, u)), 0.5).tensor()
    pr = krylov_propagate(Hr, product_state(jr, OrbitalSet(g, u[::-1])), 0.5).tensor()
    np.testing.assert_allclose(pf, pr.T, atol=1e-12)


def test_hartree_limit_sanity():
    # larger N brings the many-body one-particle density closer to |u_t|^2
    g = make_grid(1, 4, 3.0)
    V = PotentialSpec("gaussian", 1.0, 1.0)
    u0 = OrbitalSet(g, gaussian_orbital(g, 1.0, 0.6, 1)[None])
    errs = []
    for N in (2, 8):
        spec = _spec((N,), [[V]])
        jb = build_joint_basis(4, (N,))
        psi = krylov_propagate(build_hamiltonian(g, spec, jb), product_state(jb, u0), 0.5)
        dens = (np.abs(psi.amplitudes) ** 2) @ jb.components[0].states / N
        ut = evolve_to(u0, spec, 0.5, 1e-3).orbitals[0]
        errs.append(np.max(np.abs(dens - g.spacing * np.abs(ut) ** 2)))
    assert errs[1] < errs[0]
