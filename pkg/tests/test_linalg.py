import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import spsolve

from nric.linalg import CholeskySolver, shifted_cholesky


def random_spd(n, rng, density=0.05):
    A = sparse.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(1e9)))
    return (A @ A.T + sparse.identity(n)).tocsc()


def test_factor_solves(rng):
    solver = CholeskySolver()
    for n in (1, 5, 80):
        A = random_spd(n, rng)
        b = rng.standard_normal(n)
        f = solver.factor(A)
        assert f is not None
        np.testing.assert_allclose(f(b), spsolve(A, b), rtol=1e-10, atol=1e-12)


def test_ordering_is_reused(rng):
    solver = CholeskySolver()
    A = random_spd(60, rng)
    solver.factor(A)
    perm = solver._perm
    solver.factor(A * 2.0)
    assert solver._perm is perm


def test_indefinite_rejected(rng):
    A = random_spd(30, rng).tolil()
    A[3, 3] = -5.0
    assert CholeskySolver().factor(A.tocsc()) is None
    assert CholeskySolver().factor(sparse.diags([1.0, 0.0, 2.0])) is None


def test_shift_makes_positive_definite(rng):
    n = 40
    M = rng.standard_normal((n, n))
    H = sparse.csc_matrix(M + M.T)
    f, tau = shifted_cholesky(H, CholeskySolver(), beta=1e-3, tau_plus=10)
    assert tau > 0
    assert np.linalg.eigvalsh(M + M.T).min() + tau > 0
    g = rng.standard_normal(n)
    d = -f(g)
    assert g @ d < 0
    np.testing.assert_allclose((H + tau * sparse.identity(n)) @ (-d), g, atol=1e-8)


def test_no_shift_for_spd(rng):
    f, tau = shifted_cholesky(random_spd(20, rng), CholeskySolver())
    assert tau == 0.0
