"""Proriol basis on the triangle, its transforms, J_x, J_y, E_y, Q_y and D_y.

Oracles: the explicit product formula, scipy's Jacobi values, and 1-D Gauss
quadrature of the y-integral.
"""
from math import factorial

import numpy as np
import pytest
from scipy.special import eval_jacobi, roots_legendre

from sparsevolterra import triangle
from sparsevolterra.jacobi import VOLTERRA, CoeffVec, expand
from sparsevolterra.triangle import (DEFAULT, TriangleBasis, TriangleCoeffs, block_jacobi_ops, dimension,
                                     dy_diagonal, dy_entries, extension_op, flat_index, proriol_eval,
                                     qy_op, triangle_analysis, triangle_rule, triangle_synthesis)


def interior_points(m, seed=0):
    rng = np.random.default_rng(seed)
    u, v = rng.uniform(0.02, 0.98, (2, m))
    flip = u + v > 0.98
    u[flip], v[flip] = 0.98 - u[flip], 0.98 - v[flip]
    return u, v


def ref_proriol(k, n, x, y, a=0.0, b=0.0, c=0.0):
    s = y / (1 - x)
    return ((1 - x) ** k * eval_jacobi(n - k, 2 * k + b + c + 1, a, 2 * x - 1)
            * eval_jacobi(k, c, b, 2 * s - 1))


def random_poly(deg, seed):
    rng = np.random.default_rng(seed)
    terms = [(i, j, rng.standard_normal()) for i in range(deg + 1) for j in range(deg + 1 - i)]
    return lambda x, y: sum(c * x**i * y**j for i, j, c in terms)


def test_flat_index_and_dimension():
    assert [flat_index(n, k) for n in range(3) for k in range(n + 1)] == list(range(6))
    assert dimension(4) == 15
    c = TriangleCoeffs(DEFAULT, np.arange(10.0))
    np.testing.assert_array_equal(c.block(3), [6, 7, 8, 9])
    with pytest.raises(ValueError):
        TriangleCoeffs(DEFAULT, np.zeros(7))


def test_quadrature_exact_on_monomials():
    rule = triangle_rule(12)
    for i in range(13):
        for j in range(13 - i):
            exact = factorial(i) * factorial(j) / factorial(i + j + 2)
            assert abs(rule.integrate(rule.x**i * rule.y**j) - exact) <= 1e-15


def test_proriol_constant():
    x, y = interior_points(5)
    np.testing.assert_array_equal(proriol_eval(0, 0, DEFAULT, x, y), 1.0)


def test_proriol_linear_example():
    assert proriol_eval(0, 1, DEFAULT, 0.5, 0.25) == pytest.approx(0.5, abs=1e-15)
    x, y = interior_points(7)
    np.testing.assert_allclose(proriol_eval(0, 1, DEFAULT, x, y), 3 * x - 1, atol=1e-15)


@pytest.mark.parametrize("basis", [DEFAULT, TriangleBasis(1, 0, 2)])
def test_proriol_matches_formula(basis):
    x, y = interior_points(20)
    for n in range(7):
        for k in range(n + 1):
            ref = ref_proriol(k, n, x, y, basis.alpha, basis.beta, basis.gamma)
            np.testing.assert_allclose(proriol_eval(k, n, basis, x, y), ref, atol=1e-13, rtol=1e-13)


def test_proriol_at_the_apex():
    assert proriol_eval(1, 1, DEFAULT, 1.0, 0.0) == 0.0
    assert proriol_eval(0, 2, DEFAULT, 1.0, 0.0) == pytest.approx(eval_jacobi(2, 1, 0, 1.0))


def test_proriol_rejects_outside_points():
    with pytest.raises(ValueError):
        proriol_eval(0, 1, DEFAULT, 0.8, 0.5)


def test_two_basis_functions_orthogonal():
    rule = triangle_rule(10)
    p01 = proriol_eval(0, 1, DEFAULT, rule.x, rule.y)
    p11 = proriol_eval(1, 1, DEFAULT, rule.x, rule.y)
    assert abs(rule.integrate(p01 * p11)) <= 1e-13


def test_gram_matrix_diagonal_through_degree_eight():
    # independent rule: Legendre tensor product under the Duffy map
    t, w = roots_legendre(30)
    xs, ws = (t + 1) / 2, w / 2
    X, S = np.meshgrid(xs, xs, indexing="ij")
    W = np.outer(ws, ws) * (1 - X)
    x, y, w = X.ravel(), ((1 - X) * S).ravel(), W.ravel()
    P = np.stack([ref_proriol(k, n, x, y) for n in range(9) for k in range(n + 1)], axis=1)
    G = P.T @ (w[:, None] * P)
    d = np.sqrt(np.diag(G))
    off = np.abs(G - np.diag(np.diag(G))) / np.outer(d, d)
    assert off.max() <= 1e-12
    np.testing.assert_allclose(np.diag(G), triangle.triangle_norms(DEFAULT, 8), rtol=1e-12)


def test_analysis_of_constant():
    c = triangle_analysis(lambda x, y: np.ones_like(x), DEFAULT, 4).coeffs
    np.testing.assert_allclose(c, np.eye(15)[0], atol=1e-15)


def test_analysis_of_linear_basis_function():
    c = triangle_analysis(lambda x, y: 3 * x - 1, DEFAULT, 4).coeffs
    np.testing.assert_allclose(c, np.eye(15)[flat_index(1, 0)], atol=1e-15)


def test_analysis_round_trip_degree_five():
    p = random_poly(5, 1)
    c = triangle_analysis(p, DEFAULT, 5)
    x, y = interior_points(30, 2)
    np.testing.assert_allclose(triangle_synthesis(c, x, y), p(x, y), atol=1e-12)


def test_jacobi_ops_on_constant():
    Jx, Jy = block_jacobi_ops(5)
    e0 = np.eye(dimension(5))[0]
    # top-degree coefficients carry ~1e-15 quadrature noise (small norms)
    np.testing.assert_allclose(Jx @ e0, triangle_analysis(lambda x, y: x, DEFAULT, 5).coeffs, atol=1e-14)
    np.testing.assert_allclose(Jy @ e0, triangle_analysis(lambda x, y: y, DEFAULT, 5).coeffs, atol=1e-14)


def test_jacobi_ops_pointwise():
    N = 6
    Jx, Jy = block_jacobi_ops(N)
    f = np.zeros(dimension(N))
    f[:dimension(4)] = np.random.default_rng(3).standard_normal(dimension(4))
    x, y = interior_points(30, 4)
    fx = triangle_synthesis(TriangleCoeffs(DEFAULT, f), x, y)
    np.testing.assert_allclose(triangle_synthesis(TriangleCoeffs(DEFAULT, Jx @ f), x, y), x * fx, atol=1e-12)
    np.testing.assert_allclose(triangle_synthesis(TriangleCoeffs(DEFAULT, Jy @ f), x, y), y * fx, atol=1e-12)


def test_jacobi_ops_are_block_tridiagonal():
    N = 8
    Jx, Jy = block_jacobi_ops(N)
    block = np.concatenate([[n] * (n + 1) for n in range(N + 1)])
    for J in (Jx, Jy):
        i, j = J.nonzero()
        assert np.max(np.abs(block[i] - block[j])) <= 1


def test_jacobi_ops_commute():
    N = 8
    Jx, Jy = block_jacobi_ops(N)
    f = np.zeros(dimension(N))
    f[:dimension(N - 2)] = np.random.default_rng(5).standard_normal(dimension(N - 2))
    comm = Jx @ (Jy @ f) - Jy @ (Jx @ f)
    x, y = interior_points(30, 6)
    assert np.max(np.abs(triangle_synthesis(TriangleCoeffs(DEFAULT, comm), x, y))) <= 1e-12


def test_qy_examples():
    N = 6
    Q = qy_op(N).toarray()
    np.testing.assert_array_equal(Q @ np.eye(dimension(N))[0], np.eye(N + 1)[0])
    assert (Q @ np.eye(dimension(N))[flat_index(1, 1)])[1] == 0.0


def _y_integral(f, x, m=40):
    t, w = roots_legendre(m)
    s, w = (t + 1) / 2, w / 2
    y = (1 - x[:, None]) * s[None, :]
    return (1 - x) * (f(x[:, None], y) @ w)


@pytest.mark.parametrize("seed", range(4))
def test_qy_matches_one_dimensional_quadrature(seed):
    N = 6
    p = random_poly(6, 10 + seed)
    q = CoeffVec(VOLTERRA, qy_op(N) @ triangle_analysis(p, DEFAULT, N).coeffs)
    x = np.linspace(0.05, 0.95, 10)
    np.testing.assert_allclose((1 - x) * q(x), _y_integral(p, x), atol=1e-12)


def test_extension_of_constant():
    E = extension_op(6)
    np.testing.assert_allclose(E[:, 0], np.eye(dimension(6))[0], atol=1e-14)


def test_extension_defining_property():
    N = 20
    E = extension_op(N)
    x, y = interior_points(40, 7)
    for j in range(N + 1):
        got = triangle_synthesis(TriangleCoeffs(DEFAULT, E[:, j]), x, y)
        want = eval_jacobi(j, 1, 0, 2 * y - 1)
        np.testing.assert_allclose(got, want, atol=1e-12 * max(1, np.max(np.abs(want))))


def test_extension_columns_finitely_supported():
    N = 20
    E = extension_op(N)
    block = np.concatenate([[n] * (n + 1) for n in range(N + 1)])
    scale = np.max(np.abs(E))
    for j in range(N + 1):
        rows = np.nonzero(np.abs(E[:, j]) > 1e-13 * scale)[0]
        assert block[rows].max() <= j + 1


def test_dy_is_diagonal_with_alternating_harmonic_entries():
    N = 30
    D = dy_diagonal(N)
    off = D - np.diag(np.diag(D))
    assert np.max(np.abs(off)) <= 1e-13
    d = np.diag(D)
    assert np.all(np.sign(d[1:]) == -np.sign(d[:-1]))
    # 0-based j gives (-1)^j / (j + 1)
    np.testing.assert_allclose(d, dy_entries(N + 1), atol=1e-13)
    np.testing.assert_allclose(np.abs(d) * np.arange(1, N + 2), 1.0, atol=1e-12)


def test_dy_matches_quadrature_oracle():
    # column j: int_0^{1-x} P~_j(y) dy / (1 - x) expanded in P~^(1,0)(x) has coefficient j equal to D_jj
    N = 12
    d = np.diag(dy_diagonal(N))
    for j in range(N + 1):
        def g(x, j=j):
            return _y_integral(lambda X, Y: eval_jacobi(j, 1, 0, 2 * Y - 1) + 0 * X, x) / (1 - x)
        c = expand(g, VOLTERRA, N + 1).coeffs
        assert abs(c[j] - d[j]) <= 1e-13
        assert np.max(np.abs(np.delete(c, j))) <= 1e-13
