"""Banded and almost-banded matrix storage and solvers.

Banded matrices use the LAPACK general-band layout: for a matrix with lower
bandwidth ``l`` and upper bandwidth ``u`` the packed array ``ab`` has shape
``(l + u + 1, cols)`` and ``ab[u + i - j, j] == A[i, j]``.  Slots of ``ab``
that do not correspond to a valid ``(i, j)`` are kept at zero.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack
from scipy.sparse.linalg import LinearOperator, onenormest

__all__ = [
    "SingularMatrixError",
    "BandedMatrix",
    "AlmostBandedMatrix",
    "band_mul_vec",
    "band_mul_band",
    "almost_banded_solve",
    "banded_solve",
    "banded_condest",
    "dense_solve",
]

TRIM_TOL = 1e-15


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a factorization meets a pivot that is zero to tolerance."""

    def __init__(self, message: str, pivot: float):
        super().__init__(f"{message} (smallest pivot magnitude {pivot:.3e})")
        self.pivot = pivot


def _valid_mask(rows, cols, lower, upper):
    # mask[u - p, j] is True where row i = j - p lies inside the matrix
    offsets = upper - np.arange(lower + upper + 1)
    i = np.arange(cols)[None, :] - offsets[:, None]
    return (i >= 0) & (i < rows)


class BandedMatrix:
    """A rows x cols matrix with packed band storage."""

    __slots__ = ("rows", "cols", "lower", "upper", "ab")

    def __init__(self, rows, cols, lower, upper, ab=None):
        lower = int(min(max(lower, 0), max(rows - 1, 0)))
        upper = int(min(max(upper, 0), max(cols - 1, 0)))
        self.rows = int(rows)
        self.cols = int(cols)
        self.lower = lower
        self.upper = upper
        if ab is None:
            ab = np.zeros((lower + upper + 1, cols))
        else:
            ab = np.array(ab, dtype=float)
            if ab.shape != (lower + upper + 1, cols):
                raise ValueError(f"band storage has shape {ab.shape}, expected {(lower + upper + 1, cols)}")
            ab[~_valid_mask(rows, cols, lower, upper)] = 0.0
        self.ab = ab

    @property
    def shape(self):
        return (self.rows, self.cols)

    def __repr__(self):
        return f"BandedMatrix({self.rows}x{self.cols}, lower={self.lower}, upper={self.upper})"

    # construction ---------------------------------------------------------

    @classmethod
    def zeros(cls, rows, cols):
        return cls(rows, cols, 0, 0)

    @classmethod
    def identity(cls, n):
        return cls(n, n, 0, 0, np.ones((1, n)))

    @classmethod
    def from_diagonals(cls, rows, cols, diagonals):
        """Build from ``{offset: values}``, values indexed by row along each diagonal.

        Offset ``p`` means entries ``A[i, i + p]``; ``values[i]`` is used for
        every valid row ``i``.  Short arrays are zero padded.
        """
        if not diagonals:
            return cls.zeros(rows, cols)
        upper = max(max(diagonals), 0)
        lower = max(-min(diagonals), 0)
        out = cls(rows, cols, lower, upper)
        for p, vals in diagonals.items():
            vals = np.asarray(vals, dtype=float)
            if vals.ndim == 0:
                vals = np.full(rows, float(vals))
            i = np.arange(min(len(vals), rows))
            j = i + p
            keep = (j >= 0) & (j < cols)
            out.ab[out.upper - p, j[keep]] = vals[i[keep]]
        return out

    @classmethod
    def from_dense(cls, A, lower=None, upper=None, tol=0.0):
        """Pack a dense array.  Bandwidths default to the smallest band holding
        every entry with magnitude above ``tol * max|A|``."""
        A = np.asarray(A, dtype=float)
        rows, cols = A.shape
        if lower is None or upper is None:
            l, u = _measure_band(A, tol)
            lower = l if lower is None else lower
            upper = u if upper is None else upper
        out = cls(rows, cols, lower, upper)
        for p in range(-out.lower, out.upper + 1):
            d = np.diagonal(A, offset=p)
            if p >= 0:
                out.ab[out.upper - p, p:p + len(d)] = d
            else:
                out.ab[out.upper - p, :len(d)] = d
        return out

    # access ---------------------------------------------------------------

    def entry(self, i, j):
        p = j - i
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError((i, j))
        if p > self.upper or -p > self.lower:
            return 0.0
        return float(self.ab[self.upper - p, j])

    def diagonal(self, p=0):
        """Entries ``A[i, i + p]`` for the valid rows ``i``."""
        if p > self.upper or -p > self.lower:
            return np.zeros(max(0, min(self.rows, self.cols - p) - max(0, -p)))
        j0 = max(p, 0)
        j1 = min(self.cols, self.rows + p)
        return self.ab[self.upper - p, j0:j1].copy()

    def to_dense(self):
        A = np.zeros((self.rows, self.cols))
        for p in range(-self.lower, self.upper + 1):
            j0 = max(p, 0)
            j1 = min(self.cols, self.rows + p)
            if j1 > j0:
                j = np.arange(j0, j1)
                A[j - p, j] = self.ab[self.upper - p, j0:j1]
        return A

    def maxabs(self):
        return float(np.max(np.abs(self.ab))) if self.ab.size else 0.0

    # structural operations -------------------------------------------------

    def trim(self, rtol=TRIM_TOL):
        """Drop outer bands whose entries are all below ``rtol * max|A|``."""
        scale = self.maxabs()
        if scale == 0.0:
            return BandedMatrix.zeros(self.rows, self.cols)
        small = np.max(np.abs(self.ab), axis=1) <= rtol * scale
        top = 0
        while top < self.upper and small[top]:
            top += 1
        bottom = self.ab.shape[0] - 1
        while bottom > self.upper and small[bottom]:
            bottom -= 1
        return BandedMatrix(self.rows, self.cols, bottom - self.upper, self.upper - top,
                            self.ab[top:bottom + 1])

    def with_bandwidths(self, lower, upper):
        """Same matrix re-stored with at least the given bandwidths."""
        lower = max(lower, self.lower)
        upper = max(upper, self.upper)
        out = BandedMatrix(self.rows, self.cols, lower, upper)
        out.ab[out.upper - self.upper:out.upper + self.lower + 1] = self.ab
        return out

    def truncate(self, rows, cols):
        """Leading ``rows x cols`` block."""
        out = BandedMatrix(rows, cols, self.lower, self.upper)
        c = min(cols, self.cols)
        for p in range(-out.lower, out.upper + 1):
            if p <= self.upper and -p <= self.lower:
                out.ab[out.upper - p, :c] = self.ab[self.upper - p, :c]
        out.ab[~_valid_mask(rows, cols, out.lower, out.upper)] = 0.0
        return out

    def shift_down(self, k):
        """Prepend ``k`` zero rows, so ``B[i + k, j] = A[i, j]``."""
        if k == 0:
            return self
        if self.upper >= k:
            ab = self.ab
        else:
            ab = np.vstack([np.zeros((k - self.upper, self.cols)), self.ab])
        return BandedMatrix(self.rows + k, self.cols, self.lower + k, max(self.upper - k, 0), ab)

    @property
    def T(self):
        out = BandedMatrix(self.cols, self.rows, self.upper, self.lower)
        for p in range(-self.lower, self.upper + 1):
            d = self.diagonal(p)
            if len(d):
                j0 = max(-p, 0)
                out.ab[out.upper + p, j0:j0 + len(d)] = d
        return out

    # arithmetic -----------------------------------------------------------

    def __matmul__(self, other):
        if isinstance(other, BandedMatrix):
            return band_mul_band(self, other)
        other = np.asarray(other)
        if other.ndim == 1:
            return band_mul_vec(self, other)
        return np.column_stack([band_mul_vec(self, c) for c in other.T])

    def __rmatmul__(self, other):
        other = np.asarray(other)
        if other.ndim == 1:
            return band_mul_vec(self.T, other)
        return NotImplemented

    def __mul__(self, c):
        return BandedMatrix(self.rows, self.cols, self.lower, self.upper, self.ab * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __add__(self, other):
        if not isinstance(other, BandedMatrix):
            return NotImplemented
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        lower = max(self.lower, other.lower)
        upper = max(self.upper, other.upper)
        a = self.with_bandwidths(lower, upper)
        b = other.with_bandwidths(lower, upper)
        return BandedMatrix(self.rows, self.cols, lower, upper, a.ab + b.ab)

    def __sub__(self, other):
        return self + (-other)


def _measure_band(A, tol=0.0):
    A = np.asarray(A)
    scale = np.max(np.abs(A)) if A.size else 0.0
    i, j = np.nonzero(np.abs(A) > tol * scale)
    if len(i) == 0:
        return 0, 0
    return int(max(np.max(i - j), 0)), int(max(np.max(j - i), 0))


def band_mul_vec(A: BandedMatrix, v) -> np.ndarray:
    """Product ``A @ v`` touching only the stored bands."""
    v = np.asarray(v, dtype=float)
    if v.shape != (A.cols,):
        raise ValueError(f"vector of length {v.shape} does not match {A.cols} columns")
    y = np.zeros(A.rows)
    for p in range(-A.lower, A.upper + 1):
        j0 = max(p, 0)
        j1 = min(A.cols, A.rows + p)
        if j1 > j0:
            y[j0 - p:j1 - p] += A.ab[A.upper - p, j0:j1] * v[j0:j1]
    return y


def band_mul_band(A: BandedMatrix, B: BandedMatrix, rtol=TRIM_TOL) -> BandedMatrix:
    """Banded product; bandwidths add, then numerically empty outer bands are trimmed."""
    if A.cols != B.rows:
        raise ValueError(f"cannot multiply {A.shape} by {B.shape}")
    C = BandedMatrix(A.rows, B.cols, A.lower + B.lower, A.upper + B.upper)
    for q in range(-B.lower, B.upper + 1):
        # column j of C picks B[j - q, j]; needs 0 <= j - q < B.rows
        jlo = max(0, q)
        jhi = min(B.cols, B.rows + q)
        if jhi <= jlo:
            continue
        bq = B.ab[B.upper - q, jlo:jhi]
        for p in range(-A.lower, A.upper + 1):
            s = p + q
            if s > C.upper or -s > C.lower:
                continue
            C.ab[C.upper - s, jlo:jhi] += A.ab[A.upper - p, jlo - q:jhi - q] * bq
    C.ab[~_valid_mask(C.rows, C.cols, C.lower, C.upper)] = 0.0
    return C.trim(rtol) if rtol is not None else C


@dataclass(frozen=True)
class AlmostBandedMatrix:
    """Square matrix whose first ``r`` rows are dense and whose remaining rows
    obey the band profile of ``band``.  Rows ``0..r-1`` of ``band`` are ignored."""

    band: BandedMatrix
    top: np.ndarray

    def __post_init__(self):
        top = np.atleast_2d(np.asarray(self.top, dtype=float))
        if top.size == 0:
            top = np.zeros((0, self.band.cols))
        object.__setattr__(self, "top", top)
        if top.shape[1] != self.band.cols:
            raise ValueError("top block must span every column")

    @property
    def r(self):
        return self.top.shape[0]

    @property
    def shape(self):
        return self.band.shape

    def to_dense(self):
        A = self.band.to_dense()
        A[:self.r] = self.top
        return A

    def __matmul__(self, v):
        y = band_mul_vec(self.band, v)
        y[:self.r] = self.top @ v
        return y

    def nnz(self, tol=0.0):
        """Number of entries whose magnitude exceeds ``tol * max|A|``."""
        scale = max(self.band.maxabs(), float(np.max(np.abs(self.top))) if self.top.size else 0.0)
        if scale == 0.0:
            return 0
        body = self.band.ab[:, :]
        mask = _valid_mask(self.band.rows, self.band.cols, self.band.lower, self.band.upper)
        offsets = self.band.upper - np.arange(self.band.ab.shape[0])
        rows = np.arange(self.band.cols)[None, :] - offsets[:, None]
        mask &= rows >= self.r
        return int(np.count_nonzero(np.abs(body[mask]) > tol * scale)
                   + np.count_nonzero(np.abs(self.top) > tol * scale))


def _check_pivots(diag, scale, n):
    pivots = np.abs(diag)
    smallest = float(np.min(pivots)) if len(pivots) else 1.0
    if smallest <= n * np.finfo(float).eps * scale:
        raise SingularMatrixError("matrix is singular to working precision", smallest)


class _BandedLU:
    def __init__(self, A: BandedMatrix):
        if A.rows != A.cols:
            raise ValueError("banded factorization needs a square matrix")
        l, u = A.lower, A.upper
        self.l, self.u, self.n = l, u, A.rows
        ab = np.zeros((2 * l + u + 1, A.cols))
        ab[l:] = A.ab
        lu, piv, info = lapack.dgbtrf(ab, l, u)
        if info < 0:
            raise ValueError(f"dgbtrf argument {-info} invalid")
        _check_pivots(lu[l + u], max(A.maxabs(), np.finfo(float).tiny), A.rows)
        self.lu, self.piv = lu, piv

    def solve(self, b, trans=0):
        b = np.asarray(b, dtype=float)
        x, info = lapack.dgbtrs(self.lu, self.l, self.u, b, self.piv, trans=trans)
        if info != 0:
            raise ValueError(f"dgbtrs failed with info={info}")
        return x


def banded_solve(A: BandedMatrix, b) -> np.ndarray:
    """Solve a square banded system with partially pivoted band LU."""
    b = np.asarray(b, dtype=float)
    if A.rows != len(b):
        raise ValueError("right-hand side length does not match matrix")
    return _BandedLU(A).solve(b)


def banded_condest(A: BandedMatrix) -> float:
    """1-norm condition number estimate (Higham-Tisseur block estimator on
    the LU factors, so the inverse is never formed)."""
    lu = _BandedLU(A)
    n = A.rows
    inv = LinearOperator((n, n), matvec=lambda v: lu.solve(v), rmatvec=lambda v: lu.solve(v, trans=1),
                         dtype=float)
    # column sums of the packed array are the column sums of A
    norm_a = float(np.max(np.sum(np.abs(A.ab), axis=0)))
    return norm_a * float(onenormest(inv))


def dense_solve(A, b) -> np.ndarray:
    """Pivoted LU solve of a dense system, with a singularity check."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.zeros_like(b)
    with warnings.catch_warnings():
        # an exactly zero pivot is reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    _check_pivots(np.diag(lu), max(np.max(np.abs(A)), np.finfo(float).tiny), A.shape[0])
    return scipy.linalg.lu_solve((lu, piv), b)


def almost_banded_solve(A: AlmostBandedMatrix, b) -> np.ndarray:
    """Solve an almost-banded system by bordered elimination.

    With the unknowns split at ``r`` the banded trailing block ``B2`` is
    factorized once; the dense rows are reduced to an ``r x r`` Schur
    complement.  Work is O(n (l + u)^2 + n r^2).
    """
    b = np.asarray(b, dtype=float)
    n = A.band.rows
    if A.band.rows != A.band.cols:
        raise ValueError("almost-banded solve needs a square matrix")
    if b.shape[0] != n:
        raise ValueError("right-hand side length does not match matrix")
    r = A.r
    if r == 0:
        return banded_solve(A.band, b)
    if r >= n:
        return dense_solve(A.to_dense(), b)
    band = A.band
    # trailing block B2 = band[r:, r:] keeps the same offsets
    l, u = band.lower, band.upper
    B2 = BandedMatrix(n - r, n - r, l, u)
    for p in range(-B2.lower, B2.upper + 1):
        B2.ab[B2.upper - p] = band.ab[u - p, r:]
    B2.ab[~_valid_mask(n - r, n - r, B2.lower, B2.upper)] = 0.0
    # coupling block B1 = band[r:, :r], nonzero only in the first l rows
    k = min(l, n - r)
    B1 = np.zeros((n - r, r))
    for p in range(-l, u + 1):
        for j in range(r):
            i = j - p
            if r <= i < r + k:
                B1[i - r, j] = band.ab[u - p, j]
    lu = _BandedLU(B2)
    Y = lu.solve(np.column_stack([b[r:], B1]))
    T1, T2 = A.top[:, :r], A.top[:, r:]
    schur = T1 - T2 @ Y[:, 1:]
    x1 = dense_solve(schur, b[:r] - T2 @ Y[:, 0])
    x2 = Y[:, 0] - Y[:, 1:] @ x1
    return np.concatenate([x1, x2])
