"""Kernels and dense Galerkin assembly of the boundary integral operators.

All formulations are assembled as

    A = alpha * M + beta * (D_sub + R) + gamma * S

where M is the mass matrix, S the single layer, R the smooth remainder of
the Helmholtz double layer beyond its Laplace part, and D_sub the Laplace
double layer in density-difference form,

    D_sub[i, j] = int int K0(x, y) (phi_j(y) - phi_j(x)) phi_i(x),

which equals D0 + M/2 on a closed surface because int K0(x, y) dy = -1/2.
The identity term is therefore exact and the strongly singular part of
the double layer only ever appears multiplied by a density difference.
"""

import os
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from . import _kernels
from .lagrange import reference_nodes, reference_triangle
from .quadrature import gauss_triangle, singular_pair_rule

EQUATIONS = ("laplace", "helmholtz")
FORMULATIONS = ("single_layer", "double_layer", "cfie")
NORMALS = ("element", "interpolated")
_SHORT = {"sl": "single_layer", "dl": "double_layer", "cfie": "cfie"}


class SingularEvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorSpec:
    equation: str
    formulation: str
    k: float | None = None
    eta: float | None = None
    normal: str = "element"

    def __post_init__(self):
        object.__setattr__(self, "formulation", _SHORT.get(self.formulation, self.formulation))
        if self.equation not in EQUATIONS:
            raise ValueError(f"unknown equation {self.equation!r}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.normal not in NORMALS:
            raise ValueError(f"unknown normal choice {self.normal!r}")
        if self.equation == "helmholtz":
            if self.k is None or self.k <= 0:
                raise ValueError("helmholtz needs a wavenumber k > 0")
        elif self.k is not None:
            raise ValueError("wavenumber given for a laplace problem")
        if self.formulation == "cfie":
            if self.equation != "helmholtz":
                raise ValueError("the combined field equation is a helmholtz formulation")
            if self.eta is None:
                object.__setattr__(self, "eta", float(self.k))
            if self.eta <= 0:
                raise ValueError("coupling eta must be positive")
        elif self.eta is not None:
            raise ValueError("coupling eta only applies to cfie")

    @property
    def is_complex(self):
        return self.equation == "helmholtz"

    @property
    def wavenumber(self):
        return float(self.k) if self.k is not None else 0.0

    def coefficients(self):
        """(alpha, beta, gamma) of A = alpha M + beta (D_sub + R) + gamma S."""
        if self.formulation == "single_layer":
            return 0.0, 0.0, 1.0
        if self.formulation == "double_layer":
            return (1.0, -1.0, 0.0) if self.equation == "laplace" else (0.0, 1.0, 0.0)
        return 0.0, 1.0, -1j * self.eta

    def potential_coefficients(self):
        """(c_D, c_S) of the representation u = c_D * DL-potential + c_S * SL-potential."""
        if self.formulation == "single_layer":
            return 0.0, 1.0
        if self.formulation == "double_layer":
            return (-1.0, 0.0) if self.equation == "laplace" else (1.0, 0.0)
        return 1.0, -1j * self.eta


def kernel_eval(spec, x, y, n_y):
    """Kernel of the formulation's boundary operator (without identity part)."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise SingularEvaluationError("kernel evaluated at x = y")
    k = spec.wavenumber
    phase = np.exp(1j * k * r) if spec.is_complex else 1.0
    single = phase / (4 * np.pi * r)
    double = (1 - 1j * k * r) * phase * float(np.dot(d, n_y)) / (4 * np.pi * r**3)
    if not spec.is_complex:
        double = double.real if isinstance(double, complex) else double
    if spec.formulation == "single_layer":
        return single
    if spec.formulation == "double_layer":
        return double
    return double - 1j * spec.eta * single


@dataclass(frozen=True)
class QuadratureConfig:
    """Quadrature orders of the assembly.

    ``singular_order`` is the 1D Gauss order q of the coincident-pair rule
    (default m + l + 5); edge pairs use q - edge_drop and vertex pairs
    q - vertex_drop, their integrands being less singular.  ``tiers`` lists (distance ratio, degree) pairs:
    a non-touching pair whose centroid distance is below ratio times the
    mean element diameter uses a triangle rule of that degree on both
    elements; the last ratio should be infinite.  Default tiers come from
    :func:`default_tiers`.
    """

    singular_order: int | None = None
    tiers: tuple | None = None
    extra: int = 0
    edge_drop: int = 1
    vertex_drop: int = 2

    def singular_q(self, m, order):
        q = self.singular_order if self.singular_order is not None else m + order + 5
        return min(q + self.extra, 12)

    def singular_orders(self, m, order):
        """(vertex, edge, coincident) rule orders."""
        q = self.singular_q(m, order)
        return (max(q - self.vertex_drop, 2), max(q - self.edge_drop, 2), q)

    def tier_table(self, m, order):
        tiers = self.tiers if self.tiers is not None else default_tiers(m, order)
        return tuple((r, min(d + self.extra, 30)) for r, d in tiers)


def default_tiers(m, order):
    """Distance-graded regular rules; the closest tier has degree 2(m+l)+8."""
    base = 2 * (m + order) + 4
    return (
        (3.0, base + 4),
        (6.0, base),
        (12.0, max(base - 4, m + 5)),
        (np.inf, max(base - 6, m + 3)),
    )


def configure_threads():
    """Thread count for assembly: CURVEBEM_THREADS, capped by the core count."""
    n = os.environ.get("CURVEBEM_THREADS")
    limit = numba.config.NUMBA_NUM_THREADS
    threads = max(1, min(int(n), limit)) if n else limit
    if threads > 1:
        numba.set_num_threads(threads)
    return threads


def _canonical_node_maps(order):
    """Local node index for each canonical node, for all six vertex relabelings."""
    ref = reference_nodes(order)
    bary = np.column_stack([1 - ref.sum(1), ref])
    out = np.empty((6, len(ref)), dtype=np.int64)
    for p, perm in enumerate(_kernels.PERMUTATIONS):
        for b_canon, lam in enumerate(bary):
            mu = np.empty(3)
            mu[perm] = lam
            match = np.nonzero(np.abs(bary - mu).sum(1) < 1e-12)[0]
            out[p, b_canon] = match[0]
    return out


@lru_cache(maxsize=None)
def _singular_tables(qs, geo_order, den_order):
    geo = reference_triangle(geo_order)
    den = reference_triangle(den_order)
    soff = [0, 0]
    parts = {k: [] for k in ("w", "Gx", "Gxu", "Gxv", "Gy", "Gyu", "Gyv", "Px", "Py")}
    for adj, q in zip((1, 2, 3), qs):
        rule = singular_pair_rule(adj, q)
        xr, yr = rule.x_ref, rule.y_ref
        gx, gy = geo.gradients(xr), geo.gradients(yr)
        parts["w"].append(rule.weights)
        parts["Gx"].append(geo.values(xr))
        parts["Gxu"].append(gx[..., 0])
        parts["Gxv"].append(gx[..., 1])
        parts["Gy"].append(geo.values(yr))
        parts["Gyu"].append(gy[..., 0])
        parts["Gyv"].append(gy[..., 1])
        parts["Px"].append(den.values(xr))
        parts["Py"].append(den.values(yr))
        soff.append(soff[-1] + len(rule))
    tables = {k: np.ascontiguousarray(np.concatenate(v)) for k, v in parts.items()}
    tables["soff"] = np.array(soff, dtype=np.int64)
    tables["geo_canon"] = _canonical_node_maps(geo_order)
    tables["den_canon"] = _canonical_node_maps(den_order)
    return tables


def vertex_neighbours(vertex_tris):
    """CSR lists of the elements sharing at least one vertex with each element."""
    E = len(vertex_tris)
    n_v = int(vertex_tris.max()) + 1
    by_vertex = [[] for _ in range(n_v)]
    for e, tri in enumerate(vertex_tris):
        for v in tri:
            by_vertex[v].append(e)
    off = [0]
    flat = []
    for tri in vertex_tris:
        nb = sorted(set(by_vertex[tri[0]]) | set(by_vertex[tri[1]]) | set(by_vertex[tri[2]]))
        flat.extend(nb)
        off.append(len(flat))
    return np.array(off, dtype=np.int64), np.array(flat, dtype=np.int64)


def color_elements(nbr_off, nbr, single_color=False):
    """Greedy colouring so that elements of one colour share no vertex."""
    E = len(nbr_off) - 1
    if single_color:
        return np.arange(E, dtype=np.int64), np.array([0, E], dtype=np.int64)
    color = -np.ones(E, dtype=np.int64)
    for e in range(E):
        used = set(color[nbr[nbr_off[e] : nbr_off[e + 1]]].tolist())
        c = 0
        while c in used:
            c += 1
        color[e] = c
    order = np.argsort(color, kind="stable")
    counts = np.bincount(color)
    return order.astype(np.int64), np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)


def _far_tables(space, tiers, use_interp):
    mesh = space.mesh
    pts, wj, nrm, phi, off = [], [], [], [], [0]
    for _, degree in tiers:
        rule = gauss_triangle(degree)
        geo = mesh.geometry(rule.points)
        pts.append(geo.points)
        wj.append(geo.jacobian * rule.weights)
        nrm.append(geo.interp_normal if use_interp else geo.normal)
        phi.append(space.basis.values(rule.points))
        off.append(off[-1] + len(rule))
    return (
        np.ascontiguousarray(np.concatenate(pts, axis=1)),
        np.ascontiguousarray(np.concatenate(wj, axis=1)),
        np.ascontiguousarray(np.concatenate(nrm, axis=1)),
        np.ascontiguousarray(np.concatenate(phi, axis=0)),
        np.array(off, dtype=np.int64),
        np.array([r for r, _ in tiers], dtype=float),
    )


def assemble_mass(space):
    """Mass matrix M_ij = int phi_j phi_i over Gamma_h."""
    return space.mass_matrix.copy()


def assemble_operator(spec, space, quad=None, include_mass=True):
    """Dense Galerkin matrix A_ij = b_h(phi_j, phi_i) of the formulation."""
    threads = configure_threads()
    quad = quad or QuadratureConfig()
    mesh = space.mesh
    m, order = space.degree, mesh.order
    tiers = quad.tier_table(m, order)
    use_interp = spec.normal == "interpolated"
    pts, wj, nrm, phi, tier_off, tier_ratio = _far_tables(space, tiers, use_interp)
    tab = _singular_tables(quad.singular_orders(m, order), order, m)
    vt = mesh.vertex_triangles
    nbr_off, nbr = vertex_neighbours(vt)
    color_order, color_off = color_elements(nbr_off, nbr, single_color=(m == 0))
    centroids = mesh.nodes[vt].mean(axis=1)
    hbar = float(mesh.element_diameters.mean())
    alpha, beta, gamma = spec.coefficients()
    n = space.n_dofs
    if spec.is_complex:
        A = np.zeros((n, n), dtype=np.complex128)
        out_re, out_im = A.real, A.imag
    else:
        A = np.zeros((n, n))
        out_re, out_im = A, np.zeros((1, 1))
    driver = _kernels.assemble_blocks_parallel if threads > 1 else _kernels.assemble_blocks_serial
    driver(
        color_order, color_off, out_re, out_im,
        pts, wj, nrm, phi, tier_off, tier_ratio, centroids, hbar,
        nbr_off, nbr, tab["soff"], tab["w"], tab["Gx"], tab["Gxu"], tab["Gxv"],
        tab["Gy"], tab["Gyu"], tab["Gyv"], tab["Px"], tab["Py"],
        mesh.nodes, mesh.node_normals, mesh.elements, space.dof_table,
        tab["geo_canon"], tab["den_canon"], use_interp,
        spec.is_complex, spec.wavenumber, float(np.real(gamma)), float(np.imag(gamma)),
        float(beta), spec.is_complex,
    )
    if include_mass and alpha != 0.0:
        A += alpha * space.mass_matrix
    return A


def assemble_rhs(spec, space, f):
    """Moment vector (f_h, phi_i) of the L2 projection f_h of ``f``: M @ c."""
    from .fe_space import l2_project

    c = l2_project(space, f).coeffs
    return space.mass_matrix @ c


_SCALAR_CODES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def save_matrix(path, A):
    """Binary dump: u64 rows, u64 cols, u8 scalar code, column-major entries."""
    A = np.asarray(A)
    code = 1 if np.iscomplexobj(A) else 0
    with open(path, "wb") as fh:
        fh.write(np.array(A.shape, dtype="<u8").tobytes())
        fh.write(np.array([code], dtype="u1").tobytes())
        fh.write(np.asarray(A, dtype=_SCALAR_CODES[code]).tobytes(order="F"))


def load_matrix(path):
    with open(path, "rb") as fh:
        rows, cols = np.frombuffer(fh.read(16), dtype="<u8")
        code = int(np.frombuffer(fh.read(1), dtype="u1")[0])
        if code not in _SCALAR_CODES:
            raise ValueError(f"unknown scalar code {code}")
        data = np.frombuffer(fh.read(), dtype=_SCALAR_CODES[code])
    return data.reshape((int(rows), int(cols)), order="F").copy()
