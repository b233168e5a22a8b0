import numpy as np
import pytest

from curvebem.fe_space import build_space
from curvebem.geometry import Sphere, build_curved_mesh
from curvebem.operators import (
    OperatorSpec,
    QuadratureConfig,
    SingularEvaluationError,
    assemble_mass,
    assemble_operator,
    assemble_rhs,
    color_elements,
    kernel_eval,
    load_matrix,
    save_matrix,
    vertex_neighbours,
)
from curvebem.reference import PlaneWave
from oracles import galerkin_inverse_distance

LAPLACE_SL = OperatorSpec("laplace", "sl")
LAPLACE_DL = OperatorSpec("laplace", "dl")


@pytest.fixture(scope="module")
def flat_space():
    # order-1 level-0 mesh: twenty flat triangles, piecewise constants
    return build_space(build_curved_mesh(Sphere(), 1, 0), 0)


@pytest.fixture(scope="module")
def curved_space():
    return build_space(build_curved_mesh(Sphere(), 2, 1), 1)


def test_kernel_values():
    assert kernel_eval(LAPLACE_SL, [2, 0, 0], [0, 0, 0], [0, 0, 1]) == pytest.approx(1 / (8 * np.pi))
    assert kernel_eval(LAPLACE_DL, [1, 0, 0], [0, 0, 0], [0, 0, 1]) == 0.0
    lap = kernel_eval(LAPLACE_SL, [1, 0, 0], [0, 0, 0], [1, 0, 0])
    hel = kernel_eval(OperatorSpec("helmholtz", "sl", 1e-8), [1, 0, 0], [0, 0, 0], [1, 0, 0])
    assert abs(hel - lap) < 1e-7
    with pytest.raises(SingularEvaluationError):
        kernel_eval(LAPLACE_SL, [1, 0, 0], [1, 0, 0], [1, 0, 0])


def test_cfie_kernel_is_combination():
    x, y, n = np.array([0.3, 0.2, 1.0]), np.array([0.0, 0.1, 0.0]), np.array([0.0, 0.6, 0.8])
    k = 2.0
    cf = kernel_eval(OperatorSpec("helmholtz", "cfie", k, 3.0), x, y, n)
    dl = kernel_eval(OperatorSpec("helmholtz", "dl", k), x, y, n)
    sl = kernel_eval(OperatorSpec("helmholtz", "sl", k), x, y, n)
    assert cf == pytest.approx(dl - 3j * sl)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(equation="maxwell", formulation="sl"),
        dict(equation="laplace", formulation="cfie"),
        dict(equation="helmholtz", formulation="sl"),
        dict(equation="laplace", formulation="sl", k=1.0),
        dict(equation="laplace", formulation="sl", eta=1.0),
        dict(equation="helmholtz", formulation="cfie", k=1.0, eta=-1.0),
        dict(equation="laplace", formulation="dl", normal="vertex"),
    ],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        OperatorSpec(**kwargs)


def test_cfie_default_coupling():
    assert OperatorSpec("helmholtz", "cfie", 2.5).eta == 2.5


def test_mass_p0_is_area_diagonal(flat_space):
    M = assemble_mass(flat_space)
    tri = flat_space.mesh.nodes[flat_space.mesh.vertex_triangles]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    assert np.allclose(np.diag(M), areas, rtol=1e-13)
    assert np.count_nonzero(M - np.diag(np.diag(M))) == 0


def test_flat_single_layer_matches_closed_form(flat_space):
    # P0 Galerkin entries on flat panels: closed-form inner integral, adaptive outer
    A = assemble_operator(LAPLACE_SL, flat_space, QuadratureConfig(singular_order=8))
    tris = flat_space.mesh.nodes[flat_space.mesh.vertex_triangles]
    vt = flat_space.mesh.vertex_triangles
    pairs = {0: 0}
    for j in range(1, 20):
        shared = len(set(vt[0]) & set(vt[j]))
        pairs.setdefault(3 - shared, j)
    assert sorted(pairs) == [0, 1, 2, 3]
    for _, j in sorted(pairs.items()):
        ref = galerkin_inverse_distance(tris[0], tris[j], tol=1e-11)
        assert A[0, j] == pytest.approx(ref, rel=1e-7)


def test_quadrature_refinement_consistency(curved_space):
    # raising every rule order changes a smooth quadratic form only at roundoff level
    A = assemble_operator(LAPLACE_SL, curved_space)
    hi = assemble_operator(LAPLACE_SL, curved_space, QuadratureConfig(extra=4))
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=curved_space.n_dofs), rng.normal(size=curved_space.n_dofs)
    assert abs(a @ A @ b - a @ hi @ b) < 1e-8 * abs(a @ hi @ b)
    assert np.abs(A - hi).max() < 1e-8 * np.abs(hi).max()


def test_double_layer_constant_identity(curved_space):
    A = assemble_operator(LAPLACE_DL, curved_space, QuadratureConfig(singular_order=8))
    ones = np.ones(curved_space.n_dofs)
    assert np.abs(A @ ones - curved_space.mass_matrix @ ones).max() < 1e-6


def test_double_layer_interpolated_normal_identity(curved_space):
    spec = OperatorSpec("laplace", "dl", normal="interpolated")
    A = assemble_operator(spec, curved_space)
    ones = np.ones(curved_space.n_dofs)
    assert np.abs(A @ ones - curved_space.mass_matrix @ ones).max() < 1e-6


def test_single_layer_sphere_identity(curved_space):
    A = assemble_operator(LAPLACE_SL, curved_space)
    M1 = curved_space.mass_matrix.sum(1)
    assert np.abs(A.sum(1) - M1).max() / np.abs(M1).max() < 2e-3
    assert np.abs(A - A.T).max() <= 1e-15 * np.abs(A).max()


def test_helmholtz_single_layer_complex_symmetric(curved_space):
    A = assemble_operator(OperatorSpec("helmholtz", "sl", np.pi), curved_space)
    assert np.abs(A - A.T).max() / np.abs(A).max() < 1e-12
    assert np.abs(A - A.conj().T).max() / np.abs(A).max() > 1e-3


def test_small_k_limit(curved_space):
    A0 = assemble_operator(LAPLACE_SL, curved_space)
    Ak = assemble_operator(OperatorSpec("helmholtz", "sl", 1e-6), curved_space)
    assert np.abs(Ak - A0).max() < 1e-6 * np.abs(A0).max()


def test_cfie_is_linear_combination(curved_space):
    k, eta = np.pi, 1.7
    cf = assemble_operator(OperatorSpec("helmholtz", "cfie", k, eta), curved_space)
    dl = assemble_operator(OperatorSpec("helmholtz", "dl", k), curved_space)
    sl = assemble_operator(OperatorSpec("helmholtz", "sl", k), curved_space)
    # the pure single layer integrates touching pairs with the transposed rule
    # (exact symmetry), so agreement is at singular-quadrature level
    assert np.abs(cf - (dl - 1j * eta * sl)).max() < 1e-9 * np.abs(cf).max()


def test_assembly_deterministic(curved_space):
    a = assemble_operator(OperatorSpec("helmholtz", "cfie", 2.0), curved_space)
    b = assemble_operator(OperatorSpec("helmholtz", "cfie", 2.0), curved_space)
    assert np.array_equal(a, b)


def test_coloring_separates_neighbours(curved_space):
    vt = curved_space.mesh.vertex_triangles
    off, nbr = vertex_neighbours(vt)
    order, coff = color_elements(off, nbr)
    assert sorted(order) == list(range(len(vt)))
    for c in range(len(coff) - 1):
        members = order[coff[c] : coff[c + 1]]
        verts = vt[members].ravel()
        assert len(np.unique(verts)) == len(verts)


def test_rhs_of_constant_and_basis_function(curved_space):
    M = curved_space.mass_matrix
    b = assemble_rhs(LAPLACE_SL, curved_space, lambda x: np.ones(len(x)))
    assert np.allclose(b, M.sum(1), rtol=1e-12)
    j = 7
    c = np.zeros(curved_space.n_dofs)
    c[j] = 1.0
    phi_j = curved_space.density(c)
    assert np.abs(assemble_rhs(LAPLACE_SL, curved_space, phi_j) - M[:, j]).max() < 1e-10


def test_plane_wave_rhs_stable_under_quadrature():
    space = build_space(build_curved_mesh(Sphere(), 2, 3), 1)
    wave = PlaneWave(2 * np.pi)
    b1 = assemble_rhs(OperatorSpec("helmholtz", "sl", 2 * np.pi), space, wave)
    b2 = space.moments(wave, space.quadrature_degree() + 2)
    assert np.iscomplexobj(b1) and np.all(np.isfinite(b1))
    assert abs(np.linalg.norm(b1) - np.linalg.norm(b2)) < 1e-8 * np.linalg.norm(b2)


def test_matrix_round_trip(tmp_path):
    for A in (np.arange(6.0).reshape(2, 3), (np.arange(6) + 1j).reshape(3, 2)):
        path = tmp_path / "a.bin"
        save_matrix(path, A)
        raw = path.read_bytes()
        assert int.from_bytes(raw[:8], "little") == A.shape[0]
        assert np.array_equal(load_matrix(path), A)
