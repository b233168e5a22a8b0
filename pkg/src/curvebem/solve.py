"""Dense LU and mass-preconditioned GMRES solves of the Galerkin systems."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, cho_solve, lu_factor, lu_solve


class SingularSystemError(RuntimeError):
    pass


class GmresNotConverged(RuntimeError):
    def __init__(self, history):
        super().__init__(
            f"GMRES stopped after {len(history) - 1} iterations at residual {history[-1]:.3e}"
        )
        self.history = list(history)


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual: float  # relative; preconditioned for GMRES
    method: str
    history: list = field(default_factory=list)
    true_residual: float = float("nan")


def relative_residual(A, x, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(A @ x - b) / (nb if nb > 0 else 1.0))


def dense_solve(A, b, pivot_tol=1e-14):
    """LU with partial pivoting; a pivot below ``pivot_tol`` relative is singular."""
    A = np.asarray(A)
    b = np.asarray(b)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible system shapes {A.shape} and {b.shape}")
    with warnings.catch_warnings():
        # singular pivots are detected and raised below
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(A, check_finite=True)
    d = np.abs(np.diag(lu))
    if d.min() <= pivot_tol * max(d.max(), np.finfo(float).tiny):
        raise SingularSystemError(f"numerically singular pivot {d.min():.3e} (max {d.max():.3e})")
    x = lu_solve((lu, piv), b)
    res = relative_residual(A, x, b)
    return SolveReport(x, 1, res, "dense", [res], res)


def gmres_solve(A, b, precond=None, tol=1e-10, maxit=1000):
    """Restart-free left-preconditioned GMRES from x0 = 0.

    ``precond`` applies the inverse preconditioner (e.g. a mass-matrix
    Cholesky solve).  Arnoldi uses modified Gram-Schmidt with one
    reorthogonalization pass; the recorded residuals are the preconditioned
    relative residuals |P^{-1}(b - A x_j)| / |P^{-1} b|.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    apply_p = precond if precond is not None else (lambda v: v)
    dtype = np.result_type(A.dtype, b.dtype, np.float64)
    n = len(b)
    r0 = np.asarray(apply_p(b), dtype=dtype)
    beta = np.linalg.norm(r0)
    if beta == 0.0:
        return SolveReport(np.zeros(n, dtype=dtype), 0, 0.0, "gmres", [0.0], 0.0)
    maxit = min(maxit, n)
    V = np.zeros((maxit + 1, n), dtype=dtype)
    H = np.zeros((maxit + 1, maxit), dtype=dtype)
    cs = np.zeros(maxit, dtype=dtype)
    sn = np.zeros(maxit, dtype=dtype)
    g = np.zeros(maxit + 1, dtype=dtype)
    g[0] = beta
    V[0] = r0 / beta
    history = [1.0]
    j = 0
    for j in range(maxit):
        w = np.asarray(apply_p(A @ V[j]), dtype=dtype)
        for _ in range(2):
            for i in range(j + 1):
                c = np.vdot(V[i], w)
                H[i, j] += c
                w -= c * V[i]
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] != 0.0:
            V[j + 1] = w / H[j + 1, j]
        for i in range(j):
            tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = tmp
        a, bb = H[j, j], H[j + 1, j]
        denom = np.sqrt(abs(a) ** 2 + abs(bb) ** 2)
        cs[j] = abs(a) / denom
        sn[j] = (a / abs(a)) * np.conj(bb) / denom if abs(a) > 0 else 1.0
        H[j, j] = cs[j] * a + sn[j] * bb
        H[j + 1, j] = 0.0
        g[j + 1] = -np.conj(sn[j]) * g[j]
        g[j] = cs[j] * g[j]
        history.append(float(abs(g[j + 1]) / beta))
        if history[-1] <= tol:
            break
    else:
        raise GmresNotConverged(history)
    k = j + 1
    y = _back_substitute(H[:k, :k], g[:k])
    x = V[:k].T @ y
    return SolveReport(x, k, history[-1], "gmres", history, relative_residual(A, x, b))


def _back_substitute(R, g):
    y = np.zeros_like(g)
    for i in range(len(g) - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1 :] @ y[i + 1 :]) / R[i, i]
    return y


def mass_preconditioner(space):
    """Inverse of the mass matrix, applied through its Cholesky factor."""
    factor = space.mass_cholesky
    return lambda v: cho_solve(factor, v)
