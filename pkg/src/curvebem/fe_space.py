"""Degree-m density spaces on curved meshes and the L2 projection of data."""

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .lagrange import global_numbering, reference_triangle
from .quadrature import gauss_triangle


class MassSolveError(RuntimeError):
    pass


@dataclass
class FeSpace:
    """Piecewise-constant (m = 0) or continuous Lagrange (m >= 1) space."""

    mesh: object
    degree: int
    dof_table: np.ndarray  # (E, nb)
    n_dofs: int

    @property
    def continuous(self):
        return self.degree >= 1

    @cached_property
    def basis(self):
        return reference_triangle(self.degree)

    @property
    def n_local(self):
        return self.dof_table.shape[1]

    def quadrature_degree(self):
        return max(2 * self.degree + 2 * self.mesh.order, 2)

    @cached_property
    def mass_matrix(self):
        rule = gauss_triangle(self.quadrature_degree())
        geo = self.mesh.geometry(rule.points)
        phi = self.basis.values(rule.points)  # (P, nb)
        wj = geo.jacobian * rule.weights  # (E, P)
        local = np.einsum("ep,pi,pj->eij", wj, phi, phi)
        M = np.zeros((self.n_dofs, self.n_dofs))
        rows = np.repeat(self.dof_table, self.n_local, axis=1)
        cols = np.tile(self.dof_table, (1, self.n_local))
        np.add.at(M, (rows.ravel(), cols.ravel()), local.reshape(len(local), -1).ravel())
        return M

    @cached_property
    def mass_cholesky(self):
        try:
            return cho_factor(self.mass_matrix, lower=True)
        except np.linalg.LinAlgError as exc:
            raise MassSolveError(f"mass matrix is not positive definite: {exc}") from exc

    def mass_solve(self, b):
        return cho_solve(self.mass_cholesky, b)

    def density(self, coeffs):
        return Density(self, np.asarray(coeffs))

    def moments(self, f, degree=None):
        """Vector b_i = int_{Gamma_h} f phi_i for a field ``f``.

        ``f`` is either a callable on (n, 3) point arrays, or an object with
        ``on_element(elements, ref)`` returning (E, P) values.
        """
        rule = gauss_triangle(degree or self.quadrature_degree())
        geo = self.mesh.geometry(rule.points)
        if hasattr(f, "on_element"):
            vals = f.on_element(np.arange(self.mesh.n_elements), rule.points)
        else:
            vals = np.asarray(f(geo.points.reshape(-1, 3))).reshape(geo.jacobian.shape)
        phi = self.basis.values(rule.points)
        local = np.einsum("ep,ep,pi->ei", vals, geo.jacobian * rule.weights, phi)
        b = np.zeros(self.n_dofs, dtype=local.dtype)
        np.add.at(b, self.dof_table.ravel(), local.ravel())
        return b


def build_space(mesh, m):
    """Degree-``m`` density space: vertices, then edges, then interiors."""
    if m not in (0, 1, 2, 3):
        raise ValueError(f"density degree must be in 0..3, got {m}")
    if m == 0:
        table = np.arange(mesh.n_elements, dtype=np.int64)[:, None]
        return FeSpace(mesh, 0, table, mesh.n_elements)
    table, n, _ = global_numbering(mesh.vertex_triangles, mesh.n_vertices, m)
    return FeSpace(mesh, m, table, n)


@dataclass
class Density:
    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != self.space.n_dofs:
            raise ValueError(
                f"density has {len(self.coeffs)} coefficients, space has {self.space.n_dofs} dofs"
            )

    def on_element(self, elements, ref):
        """Values at reference points ``ref`` (P, 2) on ``elements``, shape (E, P)."""
        phi = self.space.basis.values(np.atleast_2d(ref))
        return self.coeffs[self.space.dof_table[elements]] @ phi.T

    def as_field(self):
        return self

    def l2_norm(self, degree=None):
        rule = gauss_triangle(degree or self.space.quadrature_degree())
        geo = self.space.mesh.geometry(rule.points)
        vals = self.on_element(np.arange(self.space.mesh.n_elements), rule.points)
        return float(np.sqrt(np.sum(np.abs(vals) ** 2 * geo.jacobian * rule.weights)))

    def to_csv(self, path):
        c = np.asarray(self.coeffs)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dof", "re", "im"])
            for i, v in enumerate(c):
                w.writerow([i, repr(float(np.real(v))), repr(float(np.imag(v)))])


def evaluate_density(density, element, ref_point):
    ref = np.asarray(ref_point, dtype=float)[None]
    return density.on_element([element], ref)[0, 0]


def l2_project(space, f, degree=None):
    """L2(Gamma_h) projection of ``f`` onto ``space`` via a Cholesky mass solve."""
    b = space.moments(f, degree)
    return Density(space, space.mass_solve(b))


def l2_error(density, f, degree=None):
    """||f - p_h||_{L2(Gamma_h)} for a callable field ``f``."""
    space = density.space
    rule = gauss_triangle(degree or min(space.quadrature_degree() + 6, 30))
    geo = space.mesh.geometry(rule.points)
    exact = np.asarray(f(geo.points.reshape(-1, 3))).reshape(geo.jacobian.shape)
    vals = density.on_element(np.arange(space.mesh.n_elements), rule.points)
    return float(np.sqrt(np.sum(np.abs(exact - vals) ** 2 * geo.jacobian * rule.weights)))


def read_density_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1] + 1j * data[:, 2]
