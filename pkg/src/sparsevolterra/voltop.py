"""Assembly of the Volterra integral operator for a general kernel.

For ``u`` expanded in ``P~^(1,0)(y)`` the weight-free operator ``V_K`` returns
the ``P~^(1,0)(x)`` coefficients of

    w(x) = (1 - x)^{-1} int_0^{1-x} K(1 - x, y) u(y) dy,

and ``S R L V_K`` gives the coefficients of ``int_0^x K(x, y) u(y) dy``.

On the triangle ``V_K = Q_y M_K E_y`` with ``M_K`` the multiplication
operator of the flipped kernel.  Since ``Q_y J_x = X Q_y`` and
``J_y E_y = E_y Y`` (``X``, ``Y`` multiplication by x and y in ``P~^(1,0)``),
a bivariate polynomial in ``(J_x, J_y)`` sandwiched this way equals the same
polynomial with ``x`` acting as ``B -> X B`` and ``y`` acting as
``B -> B Y``, applied to the diagonal ``D_y = Q_y E_y``.  The default
assembly runs the operator-valued Clenshaw recurrence in that form, on
banded univariate matrices only.  It is ordered by total degree
so intermediate quantities stay bounded on the triangle.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps

from . import jacobi, triangle
from .jacobi import Basis, VOLTERRA, LEGENDRE
from .linalg import AlmostBandedMatrix, BandedMatrix

__all__ = [
    "KernelExpansion",
    "KernelUnderresolvedWarning",
    "VolterraOperator",
    "expand_kernel",
    "assemble_volterra",
    "oracle_volterra",
    "weighted_volterra",
    "bandwidth_report",
]

TAIL_TOL = 1e-14
MAX_DEGREE = 64
STORE_RTOL = 1e-14


class KernelUnderresolvedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KernelExpansion:
    """Proriol (0,0,0) coefficients of the flipped kernel ``K(1 - x, y)``."""

    coeffs: triangle.TriangleCoeffs
    tail: float

    @property
    def degree(self) -> int:
        return self.coeffs.degree

    def block_coeffs(self, k):
        """Coefficients ``K_{m+k, k}`` for m = 0..degree-k."""
        d = self.degree
        return np.array([self.coeffs.coeffs[triangle.flat_index(m + k, k)] for m in range(d - k + 1)])


def _block_sizes(coeffs: triangle.TriangleCoeffs) -> np.ndarray:
    """Per-degree max of the L2-normalized coefficients, relative to the largest.

    Raw Proriol coefficients of high degree carry quadrature noise scaled by
    ``1/sqrt(norm)``, so decay is judged on ``|c| sqrt(h)``.
    """
    c = np.abs(coeffs.coeffs) * np.sqrt(triangle.triangle_norms(coeffs.basis, coeffs.degree))
    scale = c.max() if len(c) else 0.0
    if scale == 0.0:
        return np.zeros(coeffs.degree + 1)
    return np.array([c[triangle.flat_index(n, 0):triangle.flat_index(n, n) + 1].max() / scale
                     for n in range(coeffs.degree + 1)])


def _tail(coeffs: triangle.TriangleCoeffs) -> float:
    if coeffs.degree == 0:
        return 0.0
    return float(_block_sizes(coeffs)[-2:].max())


def _chop(coeffs: triangle.TriangleCoeffs, rtol=TAIL_TOL) -> triangle.TriangleCoeffs:
    sizes = _block_sizes(coeffs)
    d = coeffs.degree
    while d > 0 and sizes[d] <= rtol:
        d -= 1
    return triangle.TriangleCoeffs(coeffs.basis, coeffs.coeffs[:triangle.dimension(d)])


def expand_kernel(K: Callable, degree: int | None = None) -> KernelExpansion:
    """Expand ``(x, y) -> K(1 - x, y)`` in Proriol (0,0,0) polynomials.

    With ``degree=None`` the degree grows in steps of 8 until the relative
    size of the last two coefficient blocks drops below 1e-14 (capped at 64),
    then trailing blocks below that level are dropped.  Keeping the degree
    minimal matters: the banded assembly evaluates the kernel polynomial on
    the unit square, where high-degree Proriol noise is amplified.
    """
    def flipped(x, y):
        return K(1 - x, y)

    def project(d):
        return triangle.triangle_analysis(flipped, triangle.DEFAULT, d, exactness=2 * d + 5)

    if degree is not None:
        c = project(int(degree))
        tail = _tail(c)
        if tail > TAIL_TOL and c.degree > 0:
            warnings.warn(f"kernel expansion tail {tail:.1e} at degree {degree}; kernel may be under-resolved",
                          KernelUnderresolvedWarning, stacklevel=2)
        return KernelExpansion(c, tail)
    for d in range(8, MAX_DEGREE + 1, 8):
        c = project(d)
        tail = _tail(c)
        if tail <= TAIL_TOL:
            chopped = _chop(c)
            dropped = _block_sizes(c)[chopped.degree + 1:]
            return KernelExpansion(chopped, float(dropped.max()) if len(dropped) else 0.0)
    warnings.warn(f"kernel expansion tail {tail:.1e} at the degree cap {MAX_DEGREE}",
                  KernelUnderresolvedWarning, stacklevel=2)
    return KernelExpansion(c, tail)


@dataclass(frozen=True)
class VolterraOperator:
    """``V_K`` stored with ``extra`` exact rows/columns beyond ``n`` so that
    compositions with raising operators can be truncated exactly."""

    raw_ext: BandedMatrix
    n: int
    kernel_degree: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def extra(self) -> int:
        return self.raw_ext.rows - self.n

    @property
    def raw(self) -> BandedMatrix:
        return self.raw_ext.truncate(self.n, self.n)

    @property
    def composed(self) -> BandedMatrix:
        """``S_(0,0)^(1,0) R L_(1,0)^(0,0) V_K``: coefficients of ``int_0^x K u dy``."""
        return self.weighted(VOLTERRA)

    def weighted(self, target) -> BandedMatrix:
        target = target if isinstance(target, Basis) else Basis(*target)
        if target not in self._cache:
            self._cache[target] = weighted_volterra(self.raw_ext, target, self.n)
        return self._cache[target]


def weighted_volterra(raw_ext: BandedMatrix, target: Basis, n: int) -> BandedMatrix:
    """``(S_(0,0)^target R L_(1,0)^(0,0) V_K)[:n, :n]``."""
    bw = int(round(target.alpha + target.beta))
    m = raw_ext.rows
    if m < n + bw:
        raise ValueError(f"need {bw} exact extra rows, have {m - n}")
    L = jacobi.lowering_op(VOLTERRA, "1-x", m)          # (m+1) x m, into (0,0)
    R = jacobi.reflection_op(LEGENDRE, m + 1)
    S = jacobi.raising_op(LEGENDRE, target, m + 1)
    return (S @ (R @ (L @ raw_ext))).truncate(n, n)


def _block_clenshaw(ke: KernelExpansion, mulx, muly, unit):
    """Evaluate ``sum K_nk P_nk(x, y)`` with ``x``, ``y`` replaced by the
    commuting linear maps ``mulx``, ``muly`` acting on operators, starting
    from ``unit``.

    The recurrence runs backwards in total degree.  Within a degree block,
    ``P_{n+1,k}`` (k <= n) follows the x-recurrence of its
    ``P~^(2k+1,0)`` factor, and ``P_{n+1,n+1}`` follows the Legendre-type
    recurrence in ``y / (1 - x)`` scaled by ``(1 - x)^{n+1}``:

        P_{n+1,n+1} = a_n (2y - 1 + x) P_nn - g_n (1 - x)^2 P_{n-1,n-1}.
    """
    d = ke.degree
    rec = [jacobi.shifted_recurrence(Basis(2 * k + 1, 0), d + 2) for k in range(d + 1)]

    def xstep(k, m, B):
        # ((x - A_m) / B_m) applied to B, for the x-factor of degree m
        A_, B_, _ = rec[k]
        return (mulx(B) - B * A_[m]) * (1.0 / B_[m])

    def one_minus_x(B):
        return B - mulx(B)

    def diag_step(B):
        return muly(B) * 2.0 - B + mulx(B)

    b1 = b2 = None                       # b_{n+1}, b_{n+2}
    for n in range(d, -1, -1):
        blk = ke.coeffs.block(n)
        bn = []
        for k in range(n + 1):
            term = unit * blk[k]
            if b1 is not None:
                term = term + xstep(k, n - k, b1[k])
                if k == n:
                    term = term + diag_step(b1[n + 1]) * ((2 * n + 1) / (n + 1))
            if b2 is not None:
                _, B_, C_ = rec[k]
                term = term - b2[k] * (C_[n - k] / B_[n + 1 - k])
                if k == n:
                    term = term - one_minus_x(one_minus_x(b2[n + 2])) * ((n + 1) / (n + 2))
            bn.append(term)
        b1, b2 = bn, b1
    return b1[0]


def _raw_banded(ke: KernelExpansion, N: int) -> BandedMatrix:
    X = jacobi.jacobi_operator(VOLTERRA, N)
    Dy = BandedMatrix.from_diagonals(N, N, {0: triangle.dy_entries(N)})
    return _block_clenshaw(ke, lambda B: X @ B, lambda B: B @ X, Dy)


def _raw_triangle(ke: KernelExpansion, N: int) -> np.ndarray:
    Jx, Jy = triangle.block_jacobi_ops(N)
    I = sps.identity(Jx.shape[0], format="csr")
    MK = _block_clenshaw(ke, lambda B: Jx @ B, lambda B: Jy @ B, I)
    return triangle.qy_op(N) @ (MK @ triangle.extension_op(N))


def assemble_volterra(ke: KernelExpansion, n: int, extra: int = 2,
                      method: str = "banded") -> VolterraOperator:
    """Build ``V_K`` for ``n`` coefficients (plus ``extra`` exact ones).

    ``method="banded"`` is the fast path; ``method="triangle"`` forms
    ``Q_y M_K E_y`` explicitly on the triangle and is meant for cross-checks
    at small ``n``.
    """
    d = ke.degree
    m = n + extra
    N = m + d + 4
    if method == "banded":
        raw = _raw_banded(ke, N).truncate(m, m)
    elif method == "triangle":
        raw = BandedMatrix.from_dense(_raw_triangle(ke, N)[:m, :m], tol=1e-15)
    else:
        raise ValueError(f"unknown assembly method {method!r}")
    return VolterraOperator(raw.trim(STORE_RTOL), n, d)


def oracle_volterra(K: Callable, n: int, inner: int | None = None, outer: int | None = None) -> np.ndarray:
    """Brute-force ``n x n`` matrix of ``u -> int_0^x K(x, y) u(y) dy`` in ``P~^(1,0)``.

    Column j is the analysis of ``x -> int_0^x K(x, y) P~_j(y) dy``; the inner
    integral uses a Gauss-Legendre rule mapped to ``[0, x]``.
    """
    inner = inner or n + 16
    outer = outer or n + 16
    ro = jacobi.gauss_rule(VOLTERRA, outer)
    ri = jacobi.gauss_rule(LEGENDRE, inner)
    x = ro.nodes[:, None]
    y = x * ri.nodes[None, :]
    Kv = np.broadcast_to(np.asarray(K(x, y), dtype=float), y.shape)
    P = jacobi.vandermonde(VOLTERRA, n, y)                 # outer x inner x n
    vals = np.einsum("qr,r,qrj->qj", Kv, ri.weights, P) * ro.nodes[:, None]
    Vt = jacobi.vandermonde(VOLTERRA, n, ro.nodes)
    return (Vt.T @ (ro.weights[:, None] * vals)) / jacobi.norms(VOLTERRA, n)[:, None]


def bandwidth_report(op, tol: float = 1e-13, skip_rows: int = 0):
    """``(lower, upper, nnz)`` of entries with magnitude >= ``tol * max|A|``.

    ``op`` may be a :class:`VolterraOperator` (its composed operator), a
    banded, almost-banded or dense matrix.  Rows before ``skip_rows`` are
    counted in ``nnz`` but excluded from the band.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(op, VolterraOperator):
        op = op.composed
    if isinstance(op, AlmostBandedMatrix):
        skip_rows = max(skip_rows, op.r)
        A = op.to_dense()
    elif isinstance(op, BandedMatrix):
        A = op.to_dense()
    else:
        A = np.asarray(op, dtype=float)
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0:
        return 0, 0, 0
    mask = np.abs(A) >= tol * scale
    nnz = int(np.count_nonzero(mask))
    i, j = np.nonzero(mask[skip_rows:])
    i = i + skip_rows
    if len(i) == 0:
        return 0, 0, nnz
    return int(max(np.max(i - j), 0)), int(max(np.max(j - i), 0)), nnz
