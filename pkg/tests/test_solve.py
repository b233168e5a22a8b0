import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curvebem.fe_space import build_space
from curvebem.geometry import Sphere, build_curved_mesh
from curvebem.solve import (
    GmresNotConverged,
    SingularSystemError,
    dense_solve,
    gmres_solve,
    mass_preconditioner,
    relative_residual,
)


def random_system(n, seed, complex_=True):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + (1j * rng.normal(size=(n, n)) if complex_ else 0)
    A += 4 * np.sqrt(n) * np.eye(n)
    b = rng.normal(size=n) + (1j * rng.normal(size=n) if complex_ else 0)
    return A, b


def test_identity_and_diagonal():
    b = np.array([1.0, -2.0, 3.0])
    assert np.allclose(dense_solve(np.eye(3), b).solution, b)
    assert np.allclose(dense_solve(np.diag([2.0, 4.0]), np.array([2.0, 8.0])).solution, [1.0, 2.0])


def test_dense_random_residual():
    A, b = random_system(200, 0)
    rep = dense_solve(A, b)
    assert rep.residual < 1e-12 and rep.method == "dense"


def test_dense_detects_singular():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularSystemError):
        dense_solve(A, np.ones(2))


def test_dense_shape_check():
    with pytest.raises(ValueError):
        dense_solve(np.ones((2, 3)), np.ones(2))


@given(st.integers(0, 10_000), st.booleans())
def test_gmres_matches_dense(seed, complex_):
    A, b = random_system(60, seed, complex_)
    g = gmres_solve(A, b, tol=1e-12)
    d = dense_solve(A, b)
    assert np.abs(g.solution - d.solution).max() < 1e-8
    assert g.true_residual < 1e-10
    hist = np.array(g.history)
    assert np.all(np.diff(hist) <= 1e-15)


def test_gmres_zero_rhs():
    rep = gmres_solve(np.eye(4), np.zeros(4))
    assert rep.iterations == 0 and np.all(rep.solution == 0)


def test_gmres_reports_non_convergence():
    A, b = random_system(50, 1)
    with pytest.raises(GmresNotConverged) as exc:
        gmres_solve(A, b, tol=1e-14, maxit=3)
    assert len(exc.value.history) == 4


def test_mass_preconditioned_mass_converges_in_one_step():
    space = build_space(build_curved_mesh(Sphere(), 2, 1), 1)
    M = space.mass_matrix
    b = np.random.default_rng(2).normal(size=space.n_dofs)
    rep = gmres_solve(M, b, precond=mass_preconditioner(space))
    assert rep.iterations == 1
    assert relative_residual(M, rep.solution, b) < 1e-12


def test_default_tolerance():
    A, b = random_system(80, 5)
    rep = gmres_solve(A, b)
    assert rep.residual <= 1e-10
