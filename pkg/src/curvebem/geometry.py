"""Smooth closed surfaces and curved triangulations of them.

Every surface is the image of the unit sphere under a smooth map F, so a
point of the surface is identified by its parameter s on S^2.  This avoids
the pole singularities of (theta, phi) charts in both the normal
computation and the closest-point Newton iteration.
"""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .lagrange import global_numbering, reference_triangle
from .quadrature import gauss_triangle

PROJECTION_MAX_ITER = 50
PROJECTION_STEP_TOL = 1e-12
AMBIGUITY_GAP = 1e-3
AMBIGUITY_SEPARATION = 0.3


class ProjectionError(RuntimeError):
    def __init__(self, point, msg="closest-point projection failed"):
        super().__init__(f"{msg} for x = {np.asarray(point).tolist()}")
        self.point = np.asarray(point)


class InvalidMeshError(RuntimeError):
    def __init__(self, element, msg="non-positive Jacobian"):
        super().__init__(f"{msg} on element {element}")
        self.element = element


class DegenerateElementError(RuntimeError):
    pass


def _normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _tangent_basis(s):
    # orthonormal (t1, t2) spanning the tangent plane of S^2 at s
    helper = np.where(np.abs(s[..., :1]) < 0.9, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    t1 = _normalize(np.cross(s, helper))
    t2 = np.cross(s, t1)
    return t1, t2


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + 5.0**0.5) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


class Surface:
    """Closed surface Gamma = F(S^2) with exact normals and projection."""

    kind = "surface"
    n_seed_points = 6000

    def map(self, s):
        raise NotImplementedError

    def map_jacobian(self, s):
        """DF at s, shape (..., 3, 3)."""
        raise NotImplementedError

    def map_hessian(self, s, u, v):
        """Second derivative D^2F(s)[u, v], shape (..., 3)."""
        raise NotImplementedError

    def params(self):
        return {}

    def normal_from_param(self, s):
        # cofactor of DF maps the sphere normal s to the image normal
        jac = self.map_jacobian(s)
        cof = np.linalg.det(jac)[..., None, None] * np.linalg.inv(jac).swapaxes(-1, -2)
        return _normalize(np.einsum("...ij,...j->...i", cof, s))

    @cached_property
    def _seed_tree(self):
        s = fibonacci_sphere(self.n_seed_points)
        return s, cKDTree(self.map(s))

    def _grid_seeds(self, x):
        seeds, tree = self._seed_tree
        d0, idx = tree.query(x)
        images = tree.data
        for k in range(len(x)):
            close = tree.query_ball_point(x[k], d0[k] + AMBIGUITY_GAP)
            if len(close) > 1:
                sep = np.linalg.norm(images[close] - images[idx[k]], axis=1).max()
                if sep > AMBIGUITY_SEPARATION:
                    raise ProjectionError(x[k], "ambiguous closest point (outside tubular neighbourhood)")
        return seeds[idx]

    def project_with_params(self, x, seeds=None):
        """Closest points of ``x`` (n, 3) on Gamma and their sphere parameters.

        Newton iteration on the stationarity condition of |x - F(s)|^2 in
        tangent-plane coordinates around the current iterate, seeded by a
        nearest-sample search unless ``seeds`` are given.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = self._grid_seeds(x) if seeds is None else _normalize(np.array(seeds, dtype=float))
        active = np.ones(len(x), dtype=bool)
        for _ in range(PROJECTION_MAX_ITER):
            idx = np.nonzero(active)[0]
            if len(idx) == 0:
                break
            si = s[idx]
            t1, t2 = _tangent_basis(si)
            jac = self.map_jacobian(si)
            res = self.map(si) - x[idx]
            g1 = np.einsum("nij,nj->ni", jac, t1)
            g2 = np.einsum("nij,nj->ni", jac, t2)
            ds = np.einsum("nij,nj->ni", jac, si)
            g11 = self.map_hessian(si, t1, t1) - ds
            g22 = self.map_hessian(si, t2, t2) - ds
            g12 = self.map_hessian(si, t1, t2)
            grad = np.stack([np.sum(g1 * res, 1), np.sum(g2 * res, 1)], 1)
            h11 = np.sum(g1 * g1, 1) + np.sum(g11 * res, 1)
            h22 = np.sum(g2 * g2, 1) + np.sum(g22 * res, 1)
            h12 = np.sum(g1 * g2, 1) + np.sum(g12 * res, 1)
            det = h11 * h22 - h12 * h12
            a = -(h22 * grad[:, 0] - h12 * grad[:, 1]) / det
            b = -(h11 * grad[:, 1] - h12 * grad[:, 0]) / det
            s[idx] = _normalize(si + a[:, None] * t1 + b[:, None] * t2)
            step = np.hypot(a, b)
            active[idx[step < PROJECTION_STEP_TOL]] = False
        else:
            if active.any():
                raise ProjectionError(x[np.argmax(active)], "projection did not converge in 50 steps")
        return self.map(s), s

    def project(self, x, seeds=None):
        single = np.ndim(x) == 1
        p, _ = self.project_with_params(x, seeds)
        return p[0] if single else p

    def exact_normal(self, x):
        """Outward unit normal at surface point(s) x."""
        single = np.ndim(x) == 1
        _, s = self.project_with_params(x)
        n = self.normal_from_param(s)
        return n[0] if single else n

    def projection_jacobian(self, y, step=1e-5):
        """D Psi at points near Gamma, (n, 3, 3), by central differences."""
        y = np.atleast_2d(y)
        _, s0 = self.project_with_params(y)
        cols = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = step
            pp = self.project(y + e, seeds=s0)
            pm = self.project(y - e, seeds=s0)
            cols.append((pp - pm) / (2 * step))
        return np.stack(cols, axis=-1)

    def to_dict(self):
        return {"kind": self.kind, **self.params()}


class Sphere(Surface):
    kind = "sphere"

    def __init__(self, radius=1.0):
        self.radius = float(radius)

    def params(self):
        return {"radius": self.radius}

    def map(self, s):
        return self.radius * np.asarray(s)

    def map_jacobian(self, s):
        s = np.asarray(s)
        return np.broadcast_to(self.radius * np.eye(3), s.shape[:-1] + (3, 3))

    def map_hessian(self, s, u, v):
        return np.zeros_like(np.asarray(u, dtype=float))

    def normal_from_param(self, s):
        return _normalize(np.asarray(s, dtype=float))

    def project_with_params(self, x, seeds=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=1)
        if np.any(r == 0.0):
            raise ProjectionError(x[np.argmin(r)], "projection of the sphere centre is undefined")
        s = x / r[:, None]
        return self.radius * s, s

    def exact_normal(self, x):
        return _normalize(np.asarray(x, dtype=float))

    def projection_jacobian(self, y, step=None):
        y = np.atleast_2d(y)
        r = np.linalg.norm(y, axis=1)
        yh = y / r[:, None]
        return self.radius / r[:, None, None] * (np.eye(3) - yh[:, :, None] * yh[:, None, :])


class Bean(Surface):
    """Smooth non-convex bean: F(X, Y, Z) on the unit sphere.

    F = (a X, b Y (1 + c Z), d Z + e X (X^2 + Y^2)); in spherical angles the
    last term is e sin^3(theta) cos(phi).  The map is a polynomial in the
    sphere coordinates, hence smooth at the poles.
    """

    kind = "bean"

    def __init__(self, a=0.8, b=0.8, c=0.3, d=1.0, e=0.2):
        self.a, self.b, self.c, self.d, self.e = map(float, (a, b, c, d, e))

    def params(self):
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d, "e": self.e}

    def map(self, s):
        s = np.asarray(s, dtype=float)
        X, Y, Z = s[..., 0], s[..., 1], s[..., 2]
        return np.stack(
            [self.a * X, self.b * Y * (1 + self.c * Z), self.d * Z + self.e * X * (X * X + Y * Y)],
            axis=-1,
        )

    def map_jacobian(self, s):
        s = np.asarray(s, dtype=float)
        X, Y, Z = s[..., 0], s[..., 1], s[..., 2]
        J = np.zeros(s.shape[:-1] + (3, 3))
        J[..., 0, 0] = self.a
        J[..., 1, 1] = self.b * (1 + self.c * Z)
        J[..., 1, 2] = self.b * self.c * Y
        J[..., 2, 0] = self.e * (3 * X * X + Y * Y)
        J[..., 2, 1] = 2 * self.e * X * Y
        J[..., 2, 2] = self.d
        return J

    def map_hessian(self, s, u, v):
        s = np.asarray(s, dtype=float)
        X, Y = s[..., 0], s[..., 1]
        out = np.zeros(np.broadcast_shapes(s.shape, np.shape(u)))
        out[..., 1] = self.b * self.c * (u[..., 1] * v[..., 2] + u[..., 2] * v[..., 1])
        out[..., 2] = self.e * (
            6 * X * u[..., 0] * v[..., 0]
            + 2 * Y * (u[..., 0] * v[..., 1] + u[..., 1] * v[..., 0])
            + 2 * X * u[..., 1] * v[..., 1]
        )
        return out


def make_surface(kind, **params):
    kinds = {"sphere": Sphere, "bean": Bean}
    if kind not in kinds:
        raise ValueError(f"unknown surface {kind!r}")
    return kinds[kind](**params)


def icosahedron():
    p = (1 + 5**0.5) / 2
    v = np.array(
        [
            [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
            [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
            [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return _normalize(v), f


def _quadrisect(tris, n_vertices):
    """Split every triangle into four; returns new triangles and midpoint edges."""
    edge_mid = {}
    edges = []
    new = np.empty((4 * len(tris), 3), dtype=np.int64)
    for e, (a, b, c) in enumerate(tris):
        mids = []
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            if key not in edge_mid:
                edge_mid[key] = n_vertices + len(edges)
                edges.append(key)
            mids.append(edge_mid[key])
        ab, bc, ca = mids
        new[4 * e : 4 * e + 4] = [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
    return new, np.array(edges, dtype=np.int64).reshape(-1, 2)


@dataclass
class CurvedMesh:
    """Order-``order`` triangulation of ``surface`` with all nodes on it."""

    surface: Surface
    order: int
    level: int
    nodes: np.ndarray  # (N, 3)
    node_params: np.ndarray  # (N, 3) sphere parameters of the nodes
    elements: np.ndarray  # (E, nb)
    node_placement: str = "projected-affine"
    h: float = field(init=False)

    def __post_init__(self):
        tri = self.nodes[self.vertex_triangles]
        edges = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2]], 1)
        self.element_diameters = np.linalg.norm(edges, axis=2).max(axis=1)
        self.h = float(self.element_diameters.max())

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def vertex_triangles(self):
        return self.elements[:, :3]

    @cached_property
    def n_vertices(self):
        return int(self.vertex_triangles.max()) + 1

    @cached_property
    def basis(self):
        return reference_triangle(self.order)

    @cached_property
    def node_normals(self):
        return self.surface.normal_from_param(self.node_params)

    @cached_property
    def edges(self):
        _, _, edges = global_numbering(self.vertex_triangles, self.n_vertices, 1)
        return edges

    def geometry(self, ref, elements=None):
        """Element maps evaluated at reference points ``ref`` (P, 2).

        Returns an :class:`ElementGeometry` with arrays shaped (E, P, ...).
        """
        el = self.elements if elements is None else self.elements[elements]
        ref = np.atleast_2d(ref)
        phi = self.basis.values(ref)  # (P, nb)
        dphi = self.basis.gradients(ref)  # (P, nb, 2)
        X = self.nodes[el]  # (E, nb, 3)
        pts = np.einsum("pb,ebd->epd", phi, X)
        tu = np.einsum("pb,ebd->epd", dphi[..., 0], X)
        tv = np.einsum("pb,ebd->epd", dphi[..., 1], X)
        cross = np.cross(tu, tv)
        jac = np.linalg.norm(cross, axis=-1)
        if np.any(jac < 1e-14):
            raise DegenerateElementError("degenerate element tangents")
        nu = np.einsum("pb,ebd->epd", phi, self.node_normals[el])
        return ElementGeometry(pts, tu, tv, jac, cross / jac[..., None], _normalize(nu), nu)

    def to_json(self):
        return json.dumps(
            {
                "surface": self.surface.kind,
                "surface_params": self.surface.params(),
                "order": self.order,
                "level": self.level,
                "nodes": self.nodes.tolist(),
                "elements": self.elements.tolist(),
                "h": self.h,
                "node_placement": self.node_placement,
            }
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        surface = make_surface(data["surface"], **data.get("surface_params", {}))
        nodes = np.array(data["nodes"], dtype=float)
        _, params = surface.project_with_params(nodes)
        return cls(
            surface,
            int(data["order"]),
            int(data["level"]),
            nodes,
            params,
            np.array(data["elements"], dtype=np.int64),
            data.get("node_placement", "projected-affine"),
        )


@dataclass
class ElementGeometry:
    points: np.ndarray
    tangent_u: np.ndarray
    tangent_v: np.ndarray
    jacobian: np.ndarray
    normal: np.ndarray  # element normal n_h
    interp_normal: np.ndarray  # interpolated normal nu_h, normalized
    interp_normal_raw: np.ndarray  # shape-function interpolant before normalizing


@dataclass
class ElementFrame:
    point: np.ndarray
    jacobian: float
    element_normal: np.ndarray
    interp_normal: np.ndarray
    exact_normal: np.ndarray


def build_curved_mesh(surface, order, level):
    """Icosahedral quadrisection mesh of ``surface`` with order-``order`` elements.

    Vertices of each level are the closest points of the parent chord
    midpoints; higher-order nodes are the closest points of the affine
    interpolant of the element's vertex triangle.
    """
    if order not in (1, 2, 3, 4):
        raise ValueError(f"geometric order must be in 1..4, got {order}")
    if level < 0:
        raise ValueError("level must be >= 0")
    s, tris = icosahedron()
    verts = surface.map(s)
    for _ in range(level):
        tris, edges = _quadrisect(tris, len(verts))
        mid = 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])
        seed = s[edges[:, 0]] + s[edges[:, 1]]
        p, ps = surface.project_with_params(mid, seeds=seed)
        verts = np.vstack([verts, p])
        s = np.vstack([s, ps])
    n_v = len(verts)
    table, n_nodes, _ = global_numbering(tris, n_v, order)
    nodes = np.empty((n_nodes, 3))
    params = np.empty((n_nodes, 3))
    nodes[:n_v] = verts
    params[:n_v] = s
    if order > 1:
        ref = reference_triangle(order).nodes[3:]
        bary = np.column_stack([1 - ref.sum(1), ref])
        targets = table[:, 3:].ravel()
        uniq, first = np.unique(targets, return_index=True)
        el_of = first // len(ref)
        loc_of = first % len(ref)
        w = bary[loc_of]
        tri = tris[el_of]
        chord = np.einsum("nk,nkd->nd", w, verts[tri])
        seed = np.einsum("nk,nkd->nd", w, s[tri])
        p, ps = surface.project_with_params(chord, seeds=seed)
        nodes[uniq] = p
        params[uniq] = ps
    mesh = CurvedMesh(surface, order, level, nodes, params, table)
    _check_orientation(mesh)
    return mesh


def _check_orientation(mesh):
    rule = gauss_triangle(max(2 * mesh.order, 2))
    geo = mesh.geometry(rule.points)
    signed = np.sum(geo.normal * geo.interp_normal, axis=-1)
    bad = np.nonzero((signed <= 0).any(axis=1))[0]
    if len(bad):
        raise InvalidMeshError(int(bad[0]))


def element_frame(mesh, element, ref_point):
    ref_point = np.asarray(ref_point, dtype=float)
    if ref_point.min() < -1e-14 or ref_point.sum() > 1 + 1e-14:
        raise ValueError("reference point outside the reference triangle")
    geo = mesh.geometry(ref_point[None], elements=[element])
    y = geo.points[0, 0]
    return ElementFrame(
        y,
        float(geo.jacobian[0, 0]),
        geo.normal[0, 0],
        geo.interp_normal[0, 0],
        mesh.surface.exact_normal(y[None])[0],
    )


@dataclass
class GeometricErrors:
    jacobian: float  # sup |1 - J_h^{-1}|
    distance: float  # sup |y - Psi(y)|
    element_normal: float  # sup |n - n_h|
    interp_normal: float  # sup |n - nu_h| for the raw interpolant of nodal normals
    interp_normal_unit: float  # same after normalizing nu_h

    def as_tuple(self):
        return (self.jacobian, self.distance, self.element_normal, self.interp_normal, self.interp_normal_unit)


def geometric_error_report(mesh, degree=20):
    """Suprema of the geometric consistency errors over a dense per-element grid.

    The interpolated-normal error is reported for the plain interpolant of
    the nodal normals; on a sphere its normalized version coincides with the
    exact normal, so only the raw interpolant carries a measurable rate.
    """
    rule = gauss_triangle(degree)
    geo = mesh.geometry(rule.points)
    y = geo.points.reshape(-1, 3)
    p, s = mesh.surface.project_with_params(y)
    n = mesh.surface.normal_from_param(s)
    dpsi = mesh.surface.projection_jacobian(y)
    tu = np.einsum("nij,nj->ni", dpsi, geo.tangent_u.reshape(-1, 3))
    tv = np.einsum("nij,nj->ni", dpsi, geo.tangent_v.reshape(-1, 3))
    jac_exact = np.linalg.norm(np.cross(tu, tv), axis=1)
    ratio = geo.jacobian.reshape(-1) / jac_exact
    return GeometricErrors(
        float(np.abs(1 - ratio).max()),
        float(np.linalg.norm(y - p, axis=1).max()),
        float(np.linalg.norm(n - geo.normal.reshape(-1, 3), axis=1).max()),
        float(np.linalg.norm(n - geo.interp_normal_raw.reshape(-1, 3), axis=1).max()),
        float(np.linalg.norm(n - geo.interp_normal.reshape(-1, 3), axis=1).max()),
    )
