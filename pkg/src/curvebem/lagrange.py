"""Lagrange elements on the reference triangle {u, v >= 0, u + v <= 1}.

Node ordering (shared by mesh geometry and density spaces): the three
vertices (0,0), (1,0), (0,1); then the edge nodes of edges (0,1), (1,2),
(2,0), each listed in increasing edge parameter from the first vertex;
then interior nodes in lexicographic (u, v) order.  Order 0 is the
piecewise-constant element with a single node at the centroid.
"""

from functools import lru_cache

import numpy as np

LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))
_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def n_local_nodes(order):
    if order == 0:
        return 1
    return (order + 1) * (order + 2) // 2


def reference_nodes(order):
    """Equispaced nodes of the order-``order`` element, shape (nb, 2)."""
    if order == 0:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]])
    pts = [tuple(v) for v in _VERTS]
    for a, b in LOCAL_EDGES:
        for i in range(1, order):
            t = i / order
            pts.append(tuple((1 - t) * _VERTS[a] + t * _VERTS[b]))
    interior = [
        (i / order, j / order)
        for i in range(1, order)
        for j in range(1, order)
        if i + j <= order - 1
    ]
    pts.extend(sorted(interior))
    return np.array(pts, dtype=float)


def _exponents(order):
    return [(a, d - a) for d in range(order + 1) for a in range(d, -1, -1)]


class ReferenceTriangle:
    """Nodal Lagrange basis of a given order on the reference triangle.

    Shape functions are expanded in monomials u^a v^b; the expansion
    coefficients come from inverting the Vandermonde matrix at the nodes,
    which is well conditioned for the orders used here (<= 4).
    """

    def __init__(self, order):
        if order < 0 or order > 6:
            raise ValueError(f"unsupported Lagrange order {order}")
        self.order = order
        self.nodes = reference_nodes(order)
        self.n_nodes = len(self.nodes)
        self._exps = np.array(_exponents(order), dtype=int)
        vander = self._monomials(self.nodes)
        # columns of coeffs are the shape functions in the monomial basis
        self.coeffs = np.linalg.inv(vander)

    def _monomials(self, ref):
        u = ref[..., 0, None]
        v = ref[..., 1, None]
        return u ** self._exps[:, 0] * v ** self._exps[:, 1]

    def values(self, ref):
        """Shape function values, shape (..., nb)."""
        ref = np.asarray(ref, dtype=float)
        return self._monomials(ref) @ self.coeffs

    def gradients(self, ref):
        """Reference gradients, shape (..., nb, 2)."""
        ref = np.asarray(ref, dtype=float)
        u = ref[..., 0, None]
        v = ref[..., 1, None]
        a = self._exps[:, 0]
        b = self._exps[:, 1]
        du = np.where(a > 0, a * u ** np.maximum(a - 1, 0), 0.0) * v**b
        dv = u**a * np.where(b > 0, b * v ** np.maximum(b - 1, 0), 0.0)
        return np.stack([du @ self.coeffs, dv @ self.coeffs], axis=-1)


@lru_cache(maxsize=None)
def reference_triangle(order):
    return ReferenceTriangle(order)


def global_numbering(tris, n_vertices, order):
    """Global node numbering for a continuous order-``order`` field.

    Returns ``(table, n_global, edges)``: ``table`` is (E, nb) with local
    nodes in the reference ordering, ``edges`` the (n_edges, 2) vertex pairs
    (lower index first) in order of first appearance.  Edge nodes are
    numbered from the lower to the higher global vertex index so that both
    neighbours of an edge agree on them.
    """
    tris = np.asarray(tris, dtype=np.int64)
    n_el = len(tris)
    edge_index = {}
    edges = []
    el_edges = np.empty((n_el, 3), dtype=np.int64)
    for e in range(n_el):
        for k, (a, b) in enumerate(LOCAL_EDGES):
            va, vb = int(tris[e, a]), int(tris[e, b])
            key = (va, vb) if va < vb else (vb, va)
            idx = edge_index.get(key)
            if idx is None:
                idx = len(edges)
                edge_index[key] = idx
                edges.append(key)
            el_edges[e, k] = idx
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    nb = n_local_nodes(order)
    table = np.empty((n_el, nb), dtype=np.int64)
    table[:, :3] = tris
    per_edge = order - 1
    n_int = nb - 3 - 3 * per_edge
    edge_base = n_vertices
    int_base = n_vertices + len(edges) * per_edge
    if per_edge > 0:
        i = np.arange(per_edge)
        for k, (a, b) in enumerate(LOCAL_EDGES):
            forward = tris[:, a] < tris[:, b]
            local = np.where(forward[:, None], i[None, :], per_edge - 1 - i[None, :])
            table[:, 3 + k * per_edge : 3 + (k + 1) * per_edge] = (
                edge_base + el_edges[:, k, None] * per_edge + local
            )
    if n_int > 0:
        table[:, 3 + 3 * per_edge :] = (
            int_base + np.arange(n_el)[:, None] * n_int + np.arange(n_int)[None, :]
        )
    n_global = int_base + n_el * n_int
    return table, n_global, edges
