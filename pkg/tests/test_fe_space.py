import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curvebem.fe_space import (
    Density,
    build_space,
    evaluate_density,
    l2_error,
    l2_project,
    read_density_csv,
)
from curvebem.geometry import CurvedMesh, Sphere, build_curved_mesh
from curvebem.harness import eoc
from curvebem.lagrange import global_numbering, reference_nodes, reference_triangle


@pytest.fixture(scope="module")
def meshes():
    s = Sphere()
    return {(o, L): build_curved_mesh(s, o, L) for o in (1, 2, 3, 4) for L in (0, 1)}


@pytest.mark.parametrize("order", range(0, 5))
def test_lagrange_kronecker_and_partition_of_unity(order):
    ref = reference_triangle(order)
    assert np.allclose(ref.values(ref.nodes), np.eye(ref.n_nodes), atol=1e-12)
    pts = np.random.default_rng(order).dirichlet([1, 1, 1], 20)[:, 1:]
    assert np.allclose(ref.values(pts).sum(1), 1.0)
    assert np.allclose(ref.gradients(pts).sum(1), 0.0, atol=1e-11)


@pytest.mark.parametrize("order", range(1, 5))
def test_lagrange_gradients_match_differences(order):
    ref = reference_triangle(order)
    p = np.array([[0.21, 0.33]])
    eps = 1e-6
    du = (ref.values(p + [eps, 0]) - ref.values(p - [eps, 0])) / (2 * eps)
    dv = (ref.values(p + [0, eps]) - ref.values(p - [0, eps])) / (2 * eps)
    g = ref.gradients(p)
    assert np.allclose(g[..., 0], du, atol=1e-8) and np.allclose(g[..., 1], dv, atol=1e-8)


def test_reference_node_counts():
    assert [len(reference_nodes(o)) for o in range(5)] == [1, 3, 6, 10, 15]


@pytest.mark.parametrize("m,dofs", [(0, 20), (1, 12), (2, 42), (3, 92)])
def test_dof_counts_level0(meshes, m, dofs):
    assert build_space(meshes[(max(m, 1), 0)], m).n_dofs == dofs


def test_invalid_degree(meshes):
    with pytest.raises(ValueError):
        build_space(meshes[(1, 0)], 4)


def test_global_numbering_shares_edge_nodes(meshes):
    mesh = meshes[(1, 1)]
    table, n, edges = global_numbering(mesh.vertex_triangles, mesh.n_vertices, 3)
    assert n == mesh.n_vertices + 2 * len(edges) + mesh.n_elements
    assert len(np.unique(table)) == n


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_constant_reproduced(meshes, m):
    space = build_space(meshes[(max(m, 1) if m else 1, 1)], m)
    p = l2_project(space, lambda x: np.ones(len(x)))
    assert np.abs(p.coeffs - 1).max() < 1e-12
    assert evaluate_density(p, 5, [0.2, 0.3]) == pytest.approx(1.0, abs=1e-12)


def test_linear_reproduced_on_flat_element():
    nodes = np.array([[0.0, 0, 0], [2, 0, 0], [0, 1, 0]])
    mesh = CurvedMesh(Sphere(), 1, 0, nodes, np.tile([0.0, 0.0, 1.0], (3, 1)), np.array([[0, 1, 2]]))
    space = build_space(mesh, 1)
    p = l2_project(space, lambda x: x[:, 0])
    assert np.allclose(p.coeffs, nodes[:, 0], atol=1e-13)


def test_projection_condition_residual(meshes):
    space = build_space(meshes[(2, 1)], 2)

    def f(x):
        return np.exp(x[:, 0]) * np.cos(x[:, 1])

    p = l2_project(space, f)
    b = space.moments(f)
    assert np.linalg.norm(space.mass_matrix @ p.coeffs - b) < 1e-12 * np.linalg.norm(b)
    # error is orthogonal to the space: moments of (f - p) vanish
    residual = space.moments(lambda x: f(x)) - space.moments(p)
    assert np.abs(residual).max() < 1e-12


def test_kronecker_density(meshes):
    space = build_space(meshes[(1, 1)], 2)
    el = 4
    dof = space.dof_table[el, 0]
    c = np.zeros(space.n_dofs)
    c[dof] = 1.0
    p = Density(space, c)
    nodes = reference_nodes(2)
    vals = [evaluate_density(p, el, r) for r in nodes]
    assert vals[0] == pytest.approx(1.0) and np.allclose(vals[1:], 0, atol=1e-13)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_continuity_across_edges(seed, m):
    mesh = build_curved_mesh(Sphere(), 2, 1)
    space = build_space(mesh, m)
    c = np.random.default_rng(seed).normal(size=space.n_dofs)
    p = Density(space, c)
    tris = mesh.vertex_triangles
    e0 = 0
    for e1 in range(1, mesh.n_elements):
        shared = set(tris[e0]) & set(tris[e1])
        if len(shared) == 2:
            break
    a, b = sorted(shared)
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    for t in (0.25, 0.6):
        r0 = (1 - t) * verts[list(tris[e0]).index(a)] + t * verts[list(tris[e0]).index(b)]
        r1 = (1 - t) * verts[list(tris[e1]).index(a)] + t * verts[list(tris[e1]).index(b)]
        assert evaluate_density(p, e0, r0) == pytest.approx(evaluate_density(p, e1, r1), abs=1e-12)


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_mass_matrix_symmetric_positive(meshes, m):
    space = build_space(meshes[(max(m, 1), 1)], m)
    M = space.mass_matrix
    assert np.abs(M - M.T).max() < 1e-14
    assert np.linalg.eigvalsh(M).min() > 0
    if m == 0:
        assert np.count_nonzero(M - np.diag(np.diag(M))) == 0


def test_area_converges_to_sphere():
    errs, hs = [], []
    for L in (1, 2, 3):
        mesh = build_curved_mesh(Sphere(), 2, L)
        errs.append(abs(build_space(mesh, 1).mass_matrix.sum() - 4 * np.pi))
        hs.append(mesh.h)
    rate = eoc(errs[-2], errs[-1], hs[-2], hs[-1])
    assert abs(rate - 3) < 0.5 or rate > 3


def test_projection_rate_m1():
    def f(x):
        return x[:, 0]

    errs, hs = [], []
    for L in (1, 2, 3):
        mesh = build_curved_mesh(Sphere(), 2, L)
        errs.append(l2_error(l2_project(build_space(mesh, 1), f), f))
        hs.append(mesh.h)
    assert abs(eoc(errs[-2], errs[-1], hs[-2], hs[-1]) - 2.0) < 0.3


def test_density_length_check(meshes):
    with pytest.raises(ValueError):
        Density(build_space(meshes[(1, 0)], 1), np.zeros(3))


def test_density_csv_round_trip(meshes, tmp_path):
    space = build_space(meshes[(1, 0)], 1)
    c = np.arange(space.n_dofs) * (1 + 0.5j)
    path = tmp_path / "d.csv"
    Density(space, c).to_csv(path)
    assert path.read_text().splitlines()[0] == "dof,re,im"
    assert np.array_equal(read_density_csv(path), c)


def test_l2_norm_of_constant(meshes):
    space = build_space(meshes[(2, 1)], 1)
    one = Density(space, np.ones(space.n_dofs))
    assert one.l2_norm() ** 2 == pytest.approx(space.mass_matrix.sum(), rel=1e-12)
