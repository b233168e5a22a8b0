"""Quadrature on the reference triangle and on pairs of triangles.

Regular integrals use collapsed (Stroud conical) Gauss rules.  Singular
Galerkin double integrals over touching element pairs use the
relative-coordinate tensor rules of Sauter and Schwab, which turn the
1/|x - y| (and double-layer) singularity into a smooth integrand on the
unit hypercube.

Pair rules are expressed in barycentric coordinates with respect to a
canonical vertex ordering of each element: shared vertices come first and
appear in the same order on both elements.
"""

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_TRIANGLE_DEGREE = 30


class Adjacency(IntEnum):
    DISJOINT = 0
    VERTEX = 1
    EDGE = 2
    COINCIDENT = 3


@dataclass(frozen=True)
class TriangleRule:
    points: np.ndarray  # (n, 2) reference coordinates
    weights: np.ndarray  # (n,), sum to 1/2
    degree: int

    def __len__(self):
        return len(self.weights)

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.points)))


@dataclass(frozen=True)
class PairRule:
    """Tensor rule over a pair of triangles.

    ``x_bary`` and ``y_bary`` hold barycentric coordinates (n, 3) relative
    to the canonical vertex order of each element; weights already include
    the Jacobian of the relative-coordinate transformation and sum to 1/4
    (the product of reference areas).
    """

    adjacency: Adjacency
    x_bary: np.ndarray
    y_bary: np.ndarray
    weights: np.ndarray
    order: int

    def __len__(self):
        return len(self.weights)

    @property
    def x_ref(self):
        return self.x_bary[:, 1:]

    @property
    def y_ref(self):
        return self.y_bary[:, 1:]


def gauss_legendre01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_triangle(degree):
    """Collapsed Gauss rule exact for polynomials of total degree ``degree``."""
    if not 1 <= degree <= MAX_TRIANGLE_DEGREE:
        raise ValueError(f"triangle rule degree {degree} outside [1, {MAX_TRIANGLE_DEGREE}]")
    n = (degree + 2) // 2
    # s carries the (1 - s) Jacobian of the collapse: Gauss-Jacobi(1, 0)
    xs, ws = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xs + 1.0)
    ws = ws / 4.0
    t, wt = gauss_legendre01(n)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    pts.setflags(write=False)
    w = W.ravel()
    w.setflags(write=False)
    return TriangleRule(pts, w, degree)


def _ss_to_bary(x1, x2):
    # Sauter-Schwab reference triangle {0 <= x2 <= x1 <= 1} with vertices
    # (0,0), (1,0), (1,1) -> barycentric weights of canonical vertices 0,1,2
    return np.stack([1.0 - x1, x1 - x2, x2], axis=-1)


def _hypercube(q):
    t, w = gauss_legendre01(q)
    grids = np.meshgrid(t, t, t, t, indexing="ij")
    weights = np.einsum("i,j,k,l->ijkl", w, w, w, w).ravel()
    return [g.ravel() for g in grids], weights


def _coincident(q):
    (xi, e1, e2, e3), w = _hypercube(q)
    jac = xi**3 * e1**2 * e2
    maps = [
        ((xi, xi * (1 - e1 + e1 * e2)), (xi * (1 - e1 * e2 * e3), xi * (1 - e1))),
        ((xi * (1 - e1 * e2 * e3), xi * (1 - e1)), (xi, xi * (1 - e1 + e1 * e2))),
        ((xi, xi * e1 * (1 - e2 + e2 * e3)), (xi * (1 - e1 * e2), xi * e1 * (1 - e2))),
        ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * (1 - e2 + e2 * e3))),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * (1 - e2))),
        ((xi, xi * e1 * (1 - e2)), (xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3))),
    ]
    return maps, [jac] * 6, w


def _edge(q):
    (xi, e1, e2, e3), w = _hypercube(q)
    j1 = xi**3 * e1**2
    j2 = xi**3 * e1**2 * e2
    maps = [
        ((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2))),
        ((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3))),
        ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e2 * e3)),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1)),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2)),
    ]
    return maps, [j1, j2, j2, j2, j2], w


def _vertex(q):
    (xi, e1, e2, e3), w = _hypercube(q)
    jac = xi**3 * e2
    maps = [
        ((xi, xi * e1), (xi * e2, xi * e2 * e3)),
        ((xi * e2, xi * e2 * e1), (xi, xi * e3)),
    ]
    return maps, [jac, jac], w


def _disjoint(q):
    rule = gauss_triangle(2 * q - 1)
    n = len(rule)
    xr = np.repeat(rule.points, n, axis=0)
    yr = np.tile(rule.points, (n, 1))
    w = np.outer(rule.weights, rule.weights).ravel()

    def bary(r):
        return np.column_stack([1 - r[:, 0] - r[:, 1], r[:, 0], r[:, 1]])

    return bary(xr), bary(yr), w


@lru_cache(maxsize=None)
def singular_pair_rule(adjacency, q):
    """Tensor Gauss rule with ``q`` points per direction for one adjacency class."""
    adjacency = Adjacency(adjacency)
    if not 2 <= q <= 12:
        raise ValueError(f"pair rule order {q} outside [2, 12]")
    if adjacency == Adjacency.DISJOINT:
        xb, yb, w = _disjoint(q)
    else:
        builder = {
            Adjacency.COINCIDENT: _coincident,
            Adjacency.EDGE: _edge,
            Adjacency.VERTEX: _vertex,
        }[adjacency]
        maps, jacs, w4 = builder(q)
        xb = np.concatenate([_ss_to_bary(*mx) for mx, _ in maps])
        yb = np.concatenate([_ss_to_bary(*my) for _, my in maps])
        w = np.concatenate([w4 * j for j in jacs])
    for arr in (xb, yb, w):
        arr.setflags(write=False)
    return PairRule(adjacency, xb, yb, w, q)


def classify_pair(tri_x, tri_y):
    """Adjacency class from the number of shared vertex indices."""
    shared = len(set(int(v) for v in tri_x) & set(int(v) for v in tri_y))
    return Adjacency(shared)


def canonical_orders(tri_x, tri_y):
    """Local vertex permutations putting shared vertices first, consistently.

    Returns ``(perm_x, perm_y)``: ``perm_x[c]`` is the local vertex of x that
    plays canonical vertex ``c``.  Shared vertices keep the order in which
    they appear on x.
    """
    tri_x = [int(v) for v in tri_x]
    tri_y = [int(v) for v in tri_y]
    shared = [v for v in tri_x if v in tri_y]
    if len(shared) == 3:
        return (0, 1, 2), (0, 1, 2)
    px = [tri_x.index(v) for v in shared] + [i for i in range(3) if tri_x[i] not in shared]
    py = [tri_y.index(v) for v in shared] + [i for i in range(3) if tri_y[i] not in shared]
    return tuple(px), tuple(py)


def permuted_ref(bary, perm):
    """Reference (u, v) coordinates of canonical barycentrics under ``perm``."""
    local = np.empty_like(bary)
    local[:, list(perm)] = bary
    return local[:, 1:]
