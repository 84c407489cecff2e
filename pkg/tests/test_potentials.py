import numpy as np
import pytest

from hartreemix.grid import make_grid
from hartreemix.potentials import (
    PotentialMatrix,
    PotentialSpec,
    bisect_constant,
    certify_operator_inequality,
    minimal_constant,
    sample,
)


def test_zero_potential_samples_to_zero(grid8):
    assert np.all(sample(PotentialSpec(), grid8) == 0)


def test_gaussian_peak():
    g = make_grid(1, 16, 8.0)
    v = sample(PotentialSpec("gaussian", 1.0, 1.0), g)
    assert v[0] == 1.0
    assert v[1] == pytest.approx(np.exp(-g.spacing**2))


def test_soft_coulomb_at_origin():
    g = make_grid(1, 16, 8.0)
    v = sample(PotentialSpec("soft_coulomb", 1.0, softening=1.0), g)
    assert v[0] == 1.0


def test_yukawa_values():
    g = make_grid(1, 8, 8.0)
    spec = PotentialSpec("yukawa_regularized", 2.0, range=0.5, exponent=1.0, softening=0.1)
    v = sample(spec, g)
    assert v[2] == pytest.approx(2.0 * np.exp(-1.0) / np.sqrt(4 + 0.01))


def test_grid_sampled_length_checked(grid8):
    with pytest.raises(ValueError):
        sample(PotentialSpec("grid_sampled", samples=[1.0, 2.0]), grid8)


@pytest.mark.parametrize("M", [7, 8])
def test_sampled_fields_are_even(rng, M):
    g = make_grid(1, M, 3.0)
    specs = [
        PotentialSpec("gaussian", 0.7, 0.3),
        PotentialSpec("soft_coulomb", 1.0, softening=0.2),
        PotentialSpec("yukawa_regularized", -1.0, 1.0, 0.8, 0.3),
        PotentialSpec("grid_sampled", samples=rng.normal(size=M)),
    ]
    for s in specs:
        v = sample(s, g)
        assert np.array_equal(v, v[(-np.arange(M)) % M])
        assert np.isrealobj(v)


def test_even_in_2d(rng):
    g = make_grid(2, 6, 3.0)
    v = sample(PotentialSpec("grid_sampled", samples=rng.normal(size=36)), g)
    idx = (-np.arange(6)) % 6
    assert np.array_equal(v, v[np.ix_(idx, idx)])


def test_potential_matrix_symmetry_enforced():
    a, b = PotentialSpec("gaussian", 1.0, 1.0), PotentialSpec("gaussian", 2.0, 1.0)
    with pytest.raises(ValueError):
        PotentialMatrix([[a, a], [b, a]])
    m = PotentialMatrix([[a, b], [b, a]])
    assert m[0, 1] == m[1, 0]
    assert PotentialMatrix.from_list(m.to_list()) == m


def test_certify_zero_potential(grid8):
    r = certify_operator_inequality(PotentialSpec(), grid8, 1.0)
    assert r.min_eig == pytest.approx(1.0, abs=1e-12)
    assert r.holds


def test_certify_bounded_potential_with_sup_squared():
    g = make_grid(1, 32, 8.0)
    spec = PotentialSpec("gaussian", -1.7, 0.5)
    b = np.max(np.abs(sample(spec, g)))
    assert certify_operator_inequality(spec, g, b**2).holds


def test_soft_coulomb_bisection_matches_generalized_eigenproblem():
    g = make_grid(1, 32, 8.0)
    spec = PotentialSpec("soft_coulomb", 1.0, softening=0.1)
    k_gen = minimal_constant(spec, g)
    k_bis = bisect_constant(spec, g, rtol=1e-10)
    assert k_bis == pytest.approx(k_gen, rel=1e-6)
    # strictly below the reported constant the inequality must fail
    assert not certify_operator_inequality(spec, g, 0.99 * k_gen).holds
    assert certify_operator_inequality(spec, g, 1.0001 * k_gen).holds


def test_certification_monotone_in_K():
    g = make_grid(1, 32, 8.0)
    spec = PotentialSpec("soft_coulomb", 1.0, softening=0.1)
    Ks = np.geomspace(1e-2, 1e3, 40)
    holds = [certify_operator_inequality(spec, g, K).holds for K in Ks]
    first = holds.index(True)
    assert all(holds[first:])
    mins = [certify_operator_inequality(spec, g, K).min_eig for K in Ks]
    assert np.all(np.diff(mins) >= -1e-10)


def test_certify_rejects_nonpositive_K(grid8):
    with pytest.raises(ValueError):
        certify_operator_inequality(PotentialSpec(), grid8, 0.0)
