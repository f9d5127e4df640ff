import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import splu

from stratsweep.gmres import gmres


def random_spd_like(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    A = (A + A.T) / 2  # complex symmetric
    A += n * np.eye(n)  # diagonally dominant
    return A


def test_identity_converges_in_one_iteration():
    b = np.ones(10, dtype=complex)
    x, rep = gmres(lambda v: v, lambda v: v, b, tol=1e-10, maxit=5)
    assert rep.iterations == 1
    assert rep.converged
    assert np.allclose(x, b)
    assert rep.residual_history[0] == 1.0


def test_exact_preconditioner_one_iteration():
    A = random_spd_like(40, 1)
    lu = splu(sparse.csc_matrix(A))
    b = np.arange(1, 41).astype(complex)
    x, rep = gmres(lambda v: A @ v, lu.solve, b, tol=1e-12, maxit=10)
    assert rep.iterations == 1
    assert rep.converged
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * 10


def test_matches_dense_solve():
    A = random_spd_like(50, 7)
    rng = np.random.default_rng(8)
    b = rng.normal(size=50) + 1j * rng.normal(size=50)
    tol = 1e-9
    x, rep = gmres(lambda v: A @ v, None, b, tol=tol, maxit=100)
    xd = np.linalg.solve(A, b)
    assert rep.converged
    assert np.linalg.norm(x - xd) <= 10 * tol * np.linalg.norm(xd)


def test_zero_rhs():
    x, rep = gmres(lambda v: v, None, np.zeros(5), tol=1e-8, maxit=3)
    assert rep.iterations == 0
    assert rep.converged
    assert rep.residual_history == [0.0]
    assert np.all(x == 0)


def test_maxit_reached_reports_not_converged():
    # indefinite oscillatory system that cannot converge in 3 iterations
    rng = np.random.default_rng(3)
    A = rng.normal(size=(60, 60))
    b = rng.normal(size=60)
    x, rep = gmres(lambda v: A @ v, None, b, tol=1e-14, maxit=3)
    assert not rep.converged
    assert rep.iterations == 3
    assert rep.final_relres > 1e-14


def test_residual_history_monotone():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(40, 40)) + 1j * rng.normal(size=(40, 40))
        A += 8 * np.eye(40)
        b = rng.normal(size=40)
        _, rep = gmres(lambda v: A @ v, None, b, tol=1e-10, maxit=40)
        h = np.array(rep.residual_history)
        assert np.all(np.diff(h) <= 0.0)
        assert rep.converged == (h[-1] <= rep.tolerance)


def test_deterministic():
    A = random_spd_like(30, 11)
    b = np.linspace(1, 2, 30).astype(complex)
    x1, r1 = gmres(lambda v: A @ v, None, b, tol=1e-10, maxit=50)
    x2, r2 = gmres(lambda v: A @ v, None, b, tol=1e-10, maxit=50)
    assert np.array_equal(x1, x2)
    assert r1.residual_history == r2.residual_history


def test_right_preconditioning_returns_unpreconditioned_residuals():
    # residuals are ||b - A x||, not preconditioned ones: check final entry
    A = random_spd_like(25, 2)
    M = np.diag(1.0 / np.diag(A))
    b = np.ones(25, dtype=complex)
    x, rep = gmres(lambda v: A @ v, lambda v: M @ v, b, tol=1e-10, maxit=50)
    assert rep.converged
    true_res = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
    assert rep.final_relres == pytest.approx(true_res, rel=1e-6, abs=1e-13)


def test_validation():
    with pytest.raises(ValueError):
        gmres(lambda v: v, None, np.ones(3), tol=0.0)
    with pytest.raises(ValueError):
        gmres(lambda v: v, None, np.ones(3), tol=1e-8, maxit=0)
