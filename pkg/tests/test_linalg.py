"""Banded and almost-banded storage, products and solves against dense references."""
import time

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from sparsevolterra.linalg import (AlmostBandedMatrix, BandedMatrix, SingularMatrixError,
                                   almost_banded_solve, band_mul_band, band_mul_vec, banded_condest,
                                   banded_solve, dense_solve)


def random_banded(rng, rows, cols, lower, upper, dominant=0.0):
    A = rng.standard_normal((rows, cols))
    i, j = np.indices(A.shape)
    A[(j - i > upper) | (i - j > lower)] = 0.0
    if dominant:
        k = min(rows, cols)
        A[np.arange(k), np.arange(k)] += dominant
    return A


# -- storage ------------------------------------------------------------------

def test_from_dense_round_trip_and_band_profile():
    rng = np.random.default_rng(0)
    A = random_banded(rng, 9, 7, 2, 3)
    B = BandedMatrix.from_dense(A)
    assert (B.lower, B.upper) == (2, 3)
    np.testing.assert_array_equal(B.to_dense(), A)
    assert B.entry(0, 5) == 0.0


def test_from_diagonals_is_indexed_by_row():
    B = BandedMatrix.from_diagonals(3, 3, {0: [1, 2, 3], 1: [4, 5], -1: [0, 6, 7]})
    np.testing.assert_array_equal(B.to_dense(), [[1, 4, 0], [6, 2, 5], [0, 7, 3]])


def test_shift_down_prepends_zero_rows():
    B = BandedMatrix.from_dense(np.arange(1.0, 10.0).reshape(3, 3))
    S = B.shift_down(2)
    assert S.shape == (5, 3)
    np.testing.assert_array_equal(S.to_dense()[2:], B.to_dense())
    np.testing.assert_array_equal(S.to_dense()[:2], 0.0)


# -- band_mul_vec -------------------------------------------------------------

def test_band_mul_vec_identity():
    np.testing.assert_array_equal(band_mul_vec(BandedMatrix.identity(3), [1, 2, 3]), [1, 2, 3])


def test_band_mul_vec_zero_matrix():
    np.testing.assert_array_equal(band_mul_vec(BandedMatrix.zeros(4, 4), [1, -2, 3, 9]), 0.0)


def test_band_mul_vec_matches_dense():
    rng = np.random.default_rng(1)
    A = random_banded(rng, 8, 8, 2, 1)
    v = rng.standard_normal(8)
    np.testing.assert_allclose(band_mul_vec(BandedMatrix.from_dense(A), v), A @ v, rtol=0, atol=1e-15)


def test_band_mul_vec_rectangular_matches_dense():
    rng = np.random.default_rng(2)
    A = random_banded(rng, 11, 6, 4, 2)
    v = rng.standard_normal(6)
    np.testing.assert_allclose(band_mul_vec(BandedMatrix.from_dense(A), v), A @ v, atol=1e-15)


def test_band_mul_vec_dimension_mismatch():
    with pytest.raises(ValueError):
        band_mul_vec(BandedMatrix.identity(3), [1.0, 2.0])


# -- band_mul_band ------------------------------------------------------------

def test_band_mul_band_identity_left():
    rng = np.random.default_rng(3)
    B = BandedMatrix.from_dense(random_banded(rng, 6, 6, 1, 2))
    np.testing.assert_array_equal(band_mul_band(BandedMatrix.identity(6), B).to_dense(), B.to_dense())


def test_two_bidiagonals_give_upper_bandwidth_two():
    U = BandedMatrix.from_diagonals(5, 5, {0: np.ones(5), 1: np.ones(5)})
    C = band_mul_band(U, U)
    assert (C.lower, C.upper) == (0, 2)


def test_band_mul_band_matches_dense():
    rng = np.random.default_rng(4)
    A = random_banded(rng, 12, 10, 2, 3)
    B = random_banded(rng, 10, 9, 1, 2)
    C = band_mul_band(BandedMatrix.from_dense(A), BandedMatrix.from_dense(B))
    np.testing.assert_allclose(C.to_dense(), A @ B, rtol=0, atol=1e-14)


def test_band_mul_band_dimension_mismatch():
    with pytest.raises(ValueError):
        band_mul_band(BandedMatrix.identity(3), BandedMatrix.identity(4))


def test_product_trims_numerically_empty_outer_bands():
    # (I + N)(I - N) = I - N^2 with N nilpotent superdiagonal: the band 1 cancels
    N = BandedMatrix.from_diagonals(6, 6, {1: np.ones(6)})
    P = band_mul_band(BandedMatrix.identity(6) + N, BandedMatrix.identity(6) - N)
    np.testing.assert_allclose(P.to_dense(), np.eye(6) - np.eye(6, k=2), atol=0)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 64), l1=st.integers(0, 5), u1=st.integers(0, 5), l2=st.integers(0, 5),
       u2=st.integers(0, 5), seed=st.integers(0, 2**32 - 1))
def test_bandwidth_additivity(n, l1, u1, l2, u2, seed):
    rng = np.random.default_rng(seed)
    A = BandedMatrix.from_dense(random_banded(rng, n, n, l1, u1), min(l1, n - 1), min(u1, n - 1))
    B = BandedMatrix.from_dense(random_banded(rng, n, n, l2, u2), min(l2, n - 1), min(u2, n - 1))
    C = band_mul_band(A, B)
    assert C.lower <= min(A.lower + B.lower, n - 1)
    assert C.upper <= min(A.upper + B.upper, n - 1)
    np.testing.assert_allclose(C.to_dense(), A.to_dense() @ B.to_dense(), rtol=0,
                               atol=1e-13 * max(1.0, np.abs(A.to_dense()).max() * np.abs(B.to_dense()).max()))


# -- solves -------------------------------------------------------------------

def test_almost_banded_identity_without_top_rows():
    A = AlmostBandedMatrix(BandedMatrix.identity(4), np.zeros((0, 4)))
    b = np.array([3.0, -1.0, 2.5, 7.0])
    np.testing.assert_array_equal(almost_banded_solve(A, b), b)


def test_almost_banded_one_dense_row():
    A = AlmostBandedMatrix(BandedMatrix.identity(3), [[1.0, 1.0, 1.0]])
    np.testing.assert_allclose(almost_banded_solve(A, [6.0, 2.0, 3.0]), [1.0, 2.0, 3.0], rtol=0, atol=1e-15)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_almost_banded_random_matches_dense(r):
    rng = np.random.default_rng(10 + r)
    n, l, u = 60, 3, 4
    band = BandedMatrix.from_dense(random_banded(rng, n, n, l, u, dominant=8.0), l, u)
    A = AlmostBandedMatrix(band, rng.standard_normal((r, n)))
    b = rng.standard_normal(n)
    x = almost_banded_solve(A, b)
    ref = scipy.linalg.solve(A.to_dense(), b)
    assert np.linalg.norm(x - ref) <= 1e-11 * np.linalg.norm(ref)
    assert np.linalg.norm(A.to_dense() @ x - b) <= 1e-12 * np.linalg.norm(b)


@pytest.mark.parametrize("n", [5, 40, 200])
def test_almost_banded_agrees_with_dense_solve(n):
    rng = np.random.default_rng(n)
    l, u, r = 2, 3, 2
    band = BandedMatrix.from_dense(random_banded(rng, n, n, l, u, dominant=10.0), l, u)
    A = AlmostBandedMatrix(band, rng.standard_normal((r, n)) + 5 * np.eye(r, n))
    D = A.to_dense()
    assert np.linalg.cond(D, 1) < 1e6
    b = rng.standard_normal(n)
    x = almost_banded_solve(A, b)
    ref = dense_solve(D, b)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)


def test_almost_banded_small_trailing_block():
    # n - r smaller than the bandwidths stored for the full matrix
    rng = np.random.default_rng(7)
    n, r = 5, 3
    band = BandedMatrix.from_dense(random_banded(rng, n, n, 4, 4, dominant=6.0), 4, 4)
    A = AlmostBandedMatrix(band, rng.standard_normal((r, n)) + 4 * np.eye(r, n))
    b = rng.standard_normal(n)
    np.testing.assert_allclose(A.to_dense() @ almost_banded_solve(A, b), b, atol=1e-12)


def test_banded_solve_singular_reports_pivot():
    A = BandedMatrix.from_diagonals(3, 3, {0: [1.0, 0.0, 1.0]})
    with pytest.raises(SingularMatrixError) as info:
        banded_solve(A, np.ones(3))
    assert info.value.pivot == 0.0


def test_dense_solve_identity():
    np.testing.assert_array_equal(dense_solve(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_dense_solve_diagonal():
    np.testing.assert_allclose(dense_solve(np.diag([2.0, 2.0]), [2.0, 4.0]), [1.0, 2.0])


def test_dense_solve_hilbert_residual():
    H = scipy.linalg.hilbert(5)
    b = np.arange(1.0, 6.0)
    x = dense_solve(H, b)
    assert np.linalg.norm(H @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_dense_solve_singular():
    with pytest.raises(SingularMatrixError):
        dense_solve(np.ones((3, 3)), np.ones(3))


def test_condest_matches_dense_condition_number():
    rng = np.random.default_rng(8)
    A = random_banded(rng, 50, 50, 2, 2, dominant=3.0)
    est = banded_condest(BandedMatrix.from_dense(A, 2, 2))
    exact = np.linalg.cond(A, 1)
    assert exact / 3 <= est <= exact * 1.0000001


def test_almost_banded_cost_is_linear_in_n():
    rng = np.random.default_rng(9)
    l, u, r = 4, 4, 2

    def build(n):
        band = BandedMatrix.from_dense(random_banded(rng, n, n, l, u, dominant=10.0), l, u)
        return AlmostBandedMatrix(band, rng.standard_normal((r, n))), rng.standard_normal(n)

    def best_time(A, b):
        times = []
        for _ in range(7):
            t0 = time.perf_counter()
            almost_banded_solve(A, b)
            times.append(time.perf_counter() - t0)
        return min(times)

    small, large = build(1000), build(4000)
    assert best_time(*large) < 10 * best_time(*small)
