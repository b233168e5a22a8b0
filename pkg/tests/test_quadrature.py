import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curvebem.quadrature import (
    Adjacency,
    canonical_orders,
    classify_pair,
    gauss_triangle,
    permuted_ref,
    singular_pair_rule,
)
from oracles import duffy_inner_integral, galerkin_inverse_distance, triangle_potential

REF = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def monomial_integral(a, b):
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def pair_value(rule, tri_x, tri_y):
    x = rule.x_bary @ tri_x
    y = rule.y_bary @ tri_y
    jx = np.linalg.norm(np.cross(tri_x[1] - tri_x[0], tri_x[2] - tri_x[0]))
    jy = np.linalg.norm(np.cross(tri_y[1] - tri_y[0], tri_y[2] - tri_y[0]))
    return float(np.sum(rule.weights / np.linalg.norm(x - y, axis=1)) * jx * jy / (4 * np.pi))


def test_reference_area():
    assert gauss_triangle(1).integrate(lambda p: np.ones(len(p))) == pytest.approx(0.5, abs=1e-15)


def test_degree_two_quadratic():
    val = gauss_triangle(2).integrate(lambda p: p[:, 0] ** 2 + p[:, 1] ** 2)
    assert val == pytest.approx(1 / 6, abs=1e-15)


@pytest.mark.parametrize("degree", [1, 2, 3, 5, 8, 13, 20, 30])
def test_monomial_exactness(degree):
    rule = gauss_triangle(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = rule.integrate(lambda p: p[:, 0] ** a * p[:, 1] ** b)
            assert val == pytest.approx(monomial_integral(a, b), rel=1e-12, abs=1e-15)


def test_points_inside_and_positive_weights():
    for degree in range(1, 31):
        rule = gauss_triangle(degree)
        assert np.all(rule.weights > 0)
        assert np.all(rule.points >= 0) and np.all(rule.points.sum(1) <= 1)


@pytest.mark.parametrize("degree", [0, 31])
def test_degree_out_of_range(degree):
    with pytest.raises(ValueError):
        gauss_triangle(degree)


def test_pair_rule_order_range():
    for q in (1, 13):
        with pytest.raises(ValueError):
            singular_pair_rule(Adjacency.COINCIDENT, q)


@pytest.mark.parametrize(
    "adj,subdomains", [(Adjacency.COINCIDENT, 6), (Adjacency.EDGE, 5), (Adjacency.VERTEX, 2), (Adjacency.DISJOINT, 1)]
)
def test_pair_rule_sizes_and_weights(adj, subdomains):
    q = 5
    rule = singular_pair_rule(adj, q)
    assert len(rule) == subdomains * q**4
    assert rule.weights.sum() == pytest.approx(0.25, rel=1e-13)
    for bary in (rule.x_bary, rule.y_bary):
        assert np.allclose(bary.sum(1), 1.0)
        assert bary.min() >= -1e-14


@pytest.mark.parametrize("adj", list(Adjacency))
def test_pair_rule_integrates_polynomials(adj):
    # smooth integrands: all rules reproduce products of monomials
    rule = singular_pair_rule(adj, 6)
    xr, yr = rule.x_ref, rule.y_ref
    for (a, b), (c, d) in [((0, 0), (0, 0)), ((2, 1), (0, 3)), ((1, 0), (1, 1))]:
        val = np.sum(rule.weights * xr[:, 0] ** a * xr[:, 1] ** b * yr[:, 0] ** c * yr[:, 1] ** d)
        assert val == pytest.approx(monomial_integral(a, b) * monomial_integral(c, d), rel=1e-12)


def test_wilton_formula_matches_duffy():
    # two independent routes for the in-plane potential of a triangle
    for x in ([0.2, 0.3, 0.0], [0.0, 0.0, 0.0], [0.5, 0.0, 0.0]):
        x = np.array(x)
        assert triangle_potential(REF, x[None])[0] == pytest.approx(duffy_inner_integral(REF, x), rel=1e-12)


@pytest.fixture(scope="module")
def oracle_pairs():
    vertex_y = np.array([[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    edge_y = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    return {
        Adjacency.COINCIDENT: (REF, REF, galerkin_inverse_distance(REF, REF, tol=1e-11)),
        Adjacency.EDGE: (REF, edge_y, galerkin_inverse_distance(REF, edge_y, tol=1e-11)),
        Adjacency.VERTEX: (REF, vertex_y, galerkin_inverse_distance(REF, vertex_y, tol=1e-11)),
    }


@pytest.mark.parametrize("adj", [Adjacency.COINCIDENT, Adjacency.EDGE, Adjacency.VERTEX])
def test_singular_rule_matches_oracle(adj, oracle_pairs):
    tx, ty, ref = oracle_pairs[adj]
    assert classify_pair([0, 1, 2], [[0, 1, 2], [0, 1, 3], [0, 3, 4]][3 - adj]) == adj
    val = pair_value(singular_pair_rule(adj, 8), tx, ty)
    assert abs(val - ref) < 1e-6 * abs(ref)


@pytest.mark.parametrize("adj", [Adjacency.COINCIDENT, Adjacency.EDGE, Adjacency.VERTEX])
def test_singular_rule_error_decreases_with_q(adj, oracle_pairs):
    tx, ty, ref = oracle_pairs[adj]
    errs = [abs(pair_value(singular_pair_rule(adj, q), tx, ty) - ref) for q in range(2, 9)]
    floor = 1e-11 * abs(ref)
    for a, b in zip(errs, errs[1:]):
        assert b <= a or b < floor


def test_disjoint_rule_matches_tensor_gauss():
    ty = REF + np.array([3.0, 0.5, 0.2])
    q = 6
    pair = pair_value(singular_pair_rule(Adjacency.DISJOINT, q), REF, ty)
    rule = gauss_triangle(2 * q - 1)
    x = np.column_stack([rule.points, np.zeros(len(rule))])
    y = x + np.array([3.0, 0.5, 0.2])
    d = np.linalg.norm(x[:, None] - y[None], axis=-1)
    tensor = float(rule.weights @ (1 / d) @ rule.weights) / (4 * np.pi)
    assert pair == pytest.approx(tensor, rel=1e-12)


@given(st.permutations([0, 1, 2]), st.permutations([0, 1, 2]), st.integers(0, 3))
def test_canonical_orders_put_shared_vertices_first(px, py, shared):
    verts_x = [10, 11, 12]
    verts_y = [10, 11, 12][:shared] + [20, 21, 22][: 3 - shared]
    tx = [verts_x[i] for i in px]
    ty = [verts_y[i] for i in py] if shared < 3 else list(tx)  # coincident = same element
    ox, oy = canonical_orders(tx, ty)
    assert sorted(ox) == [0, 1, 2] and sorted(oy) == [0, 1, 2]
    for c in range(shared):
        assert tx[ox[c]] == ty[oy[c]]
    assert classify_pair(tx, ty) == Adjacency(shared)


@given(st.permutations([0, 1, 2]))
def test_permuted_ref_round_trip(perm):
    bary = np.array([[0.2, 0.3, 0.5], [0.1, 0.6, 0.3]])
    ref = permuted_ref(bary, perm)
    assert ref.shape == (2, 2)
    full = np.column_stack([1 - ref.sum(1), ref])
    assert np.allclose(full[:, list(perm)], bary)
