"""Proriol (triangle Jacobi) polynomials on T = {0 <= x <= 1, 0 <= y <= 1 - x}.

    P_{n,k}(x, y) = (1-x)^k P~_{n-k}^{(2k+b+c+1, a)}(x) P~_k^{(c, b)}(y / (1-x))

with weight ``x^a y^b (1-x-y)^c``.  Coefficients are stored flat, block by
total degree: entry ``(n, k)`` sits at ``n(n+1)/2 + k``.

Operators here are built numerically by Galerkin projection with an exact
Duffy-mapped tensor Gauss rule; they are meant for moderate degrees.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sps

from . import jacobi
from .jacobi import Basis

__all__ = [
    "TriangleBasis",
    "TriangleCoeffs",
    "TriangleQuadrature",
    "flat_index",
    "dimension",
    "triangle_rule",
    "proriol_eval",
    "proriol_vandermonde",
    "triangle_norms",
    "triangle_analysis",
    "triangle_synthesis",
    "block_jacobi_ops",
    "extension_op",
    "qy_op",
    "dy_diagonal",
    "dy_entries",
]


@dataclass(frozen=True)
class TriangleBasis:
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) <= -1:
            raise ValueError("triangle Jacobi parameters must exceed -1")

    def x_basis(self, k) -> Basis:
        return Basis(2 * k + self.beta + self.gamma + 1, self.alpha)

    def s_basis(self) -> Basis:
        return Basis(self.gamma, self.beta)


DEFAULT = TriangleBasis()


def dimension(N: int) -> int:
    """Number of polynomials of total degree <= N."""
    return (N + 1) * (N + 2) // 2


def flat_index(n: int, k: int) -> int:
    if not 0 <= k <= n:
        raise IndexError((n, k))
    return n * (n + 1) // 2 + k


def _degree_of(size: int) -> int:
    N = int((np.sqrt(8 * size + 1) - 3) // 2)
    while dimension(N) < size:
        N += 1
    if dimension(N) != size:
        raise ValueError(f"{size} is not a triangular number of coefficients")
    return N


@dataclass(frozen=True)
class TriangleCoeffs:
    basis: TriangleBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        _degree_of(len(c))
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return _degree_of(len(self.coeffs))

    def block(self, n: int) -> np.ndarray:
        i = n * (n + 1) // 2
        return self.coeffs[i:i + n + 1]

    def __call__(self, x, y):
        return triangle_synthesis(self, x, y)


@dataclass(frozen=True)
class TriangleQuadrature:
    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    exactness: int

    def integrate(self, values):
        return self.weights @ np.asarray(values)


def triangle_rule(exactness: int, basis: TriangleBasis = DEFAULT) -> TriangleQuadrature:
    """Duffy-mapped tensor Gauss-Jacobi rule for the weight of ``basis``.

    ``y = (1 - x) s``; the Jacobian ``(1 - x)`` and the weight factors are
    absorbed into the one-dimensional rules, so the result integrates
    ``p(x, y) x^a y^b (1-x-y)^c`` exactly for total degree <= exactness.
    """
    m = exactness // 2 + 1
    rx = jacobi.gauss_rule(Basis(basis.beta + basis.gamma + 1, basis.alpha), m)
    rs = jacobi.gauss_rule(basis.s_basis(), m)
    X, S = np.meshgrid(rx.nodes, rs.nodes, indexing="ij")
    W = np.outer(rx.weights, rs.weights)
    return TriangleQuadrature(X.ravel(), ((1 - X) * S).ravel(), W.ravel(), 2 * m - 1)


def _check_triangle(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tol = 1e-14
    if np.any(x < -tol) or np.any(y < -tol) or np.any(x + y > 1 + tol):
        raise ValueError("points must lie in the triangle 0 <= x, 0 <= y, x + y <= 1")
    return np.clip(x, 0, 1), np.clip(y, 0, 1)


def _ratio(x, y):
    one_minus = 1 - x
    safe = np.where(one_minus > 0, one_minus, 1.0)
    return np.where(one_minus > 0, np.clip(y / safe, 0, 1), 0.0)


def proriol_eval(k: int, n: int, basis: TriangleBasis, x, y):
    """Value of ``P_{n,k}`` at points of the triangle.

    At ``x = 1`` the ratio ``y / (1 - x)`` is replaced by 0: the factor
    ``(1 - x)^k`` vanishes there for ``k >= 1`` and ``P~_0 = 1`` for ``k = 0``.
    """
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    x, y = _check_triangle(x, y)
    s = _ratio(x, y)
    px = jacobi.vandermonde(basis.x_basis(k), n - k + 1, x)[..., n - k]
    ps = jacobi.vandermonde(basis.s_basis(), k + 1, s)[..., k]
    return (1 - x) ** k * px * ps


def proriol_vandermonde(basis: TriangleBasis, N: int, x, y) -> np.ndarray:
    """Values of every ``P_{n,k}``, n <= N, at the points; shape ``(npts, dim(N))``."""
    x, y = _check_triangle(x, y)
    x = np.ravel(x)
    y = np.ravel(y)
    s = _ratio(x, y)
    Vs = jacobi.vandermonde(basis.s_basis(), N + 1, s)
    out = np.empty((len(x), dimension(N)))
    w = np.ones_like(x)
    for k in range(N + 1):
        Vx = jacobi.vandermonde(basis.x_basis(k), N - k + 1, x)
        cols = [flat_index(n, k) for n in range(k, N + 1)]
        out[:, cols] = (w * Vs[:, k])[:, None] * Vx
        w = w * (1 - x)
    return out


def triangle_norms(basis: TriangleBasis, N: int) -> np.ndarray:
    out = np.empty(dimension(N))
    hs = jacobi.norms(basis.s_basis(), N + 1)
    for k in range(N + 1):
        hx = jacobi.norms(basis.x_basis(k), N - k + 1)
        for n in range(k, N + 1):
            out[flat_index(n, k)] = hx[n - k] * hs[k]
    return out


def _projector(basis: TriangleBasis, N: int, exactness: int):
    rule = triangle_rule(exactness, basis)
    V = proriol_vandermonde(basis, N, rule.x, rule.y)
    return rule, V, triangle_norms(basis, N)


def triangle_analysis(f: Callable, basis: TriangleBasis = DEFAULT, N: int = 10,
                      exactness: int | None = None) -> TriangleCoeffs:
    """Coefficients ``<f, P_nk> / <P_nk, P_nk>`` through total degree N."""
    rule, V, h = _projector(basis, N, exactness or 2 * N + 4)
    vals = np.broadcast_to(np.asarray(f(rule.x, rule.y), dtype=float), rule.x.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function returned non-finite values at quadrature nodes")
    return TriangleCoeffs(basis, (V.T @ (rule.weights * vals)) / h)


def triangle_synthesis(c: TriangleCoeffs, x, y):
    shape = np.shape(x)
    V = proriol_vandermonde(c.basis, c.degree, x, y)
    return (V @ c.coeffs).reshape(shape)


def _galerkin(N: int, image: Callable, exactness: int, basis=DEFAULT):
    """Matrix whose column j holds the Proriol coefficients of image(j)."""
    rule, V, h = _projector(basis, N, exactness)
    F = image(rule)
    return (V.T @ (rule.weights[:, None] * F)) / h[:, None]


def _sparsify(M, tol=1e-13):
    M = np.where(np.abs(M) > tol * max(np.max(np.abs(M)), 1e-300), M, 0.0)
    return sps.csr_matrix(M)


def block_jacobi_ops(N: int, basis: TriangleBasis = DEFAULT):
    """Multiplication by x and by y on flat coefficients of total degree <= N.

    Exact on the span of degree <= N - 1; block tridiagonal in the degree blocks.
    """
    exactness = 2 * N + 2
    rule, V, h = _projector(basis, N, exactness)
    P = (V.T * rule.weights) / h[:, None]
    Jx = P @ (rule.x[:, None] * V)
    Jy = P @ (rule.y[:, None] * V)
    return _sparsify(Jx), _sparsify(Jy)


def extension_op(N: int) -> np.ndarray:
    """``E_y``: coefficients of ``u`` in ``P~^(1,0)`` to Proriol (0,0,0)
    coefficients of the function ``(x, y) -> u(y)``.  Shape ``(dim(N), N + 1)``."""
    def image(rule):
        return jacobi.vandermonde(jacobi.VOLTERRA, N + 1, rule.y)
    E = _galerkin(N, image, 2 * N + 2)
    E[np.abs(E) < 1e-15 * np.max(np.abs(E))] = 0.0
    return E


def qy_op(N: int) -> sps.csr_matrix:
    """``Q_y``: row n picks the (n, 0) coefficient, so that
    ``int_0^{1-x} f dy = (1 - x) * sum_n (Q_y f)_n P~_n^(1,0)(x)``."""
    rows = np.arange(N + 1)
    cols = [flat_index(n, 0) for n in rows]
    return sps.csr_matrix((np.ones(N + 1), (rows, cols)), shape=(N + 1, dimension(N)))


def dy_diagonal(N: int) -> np.ndarray:
    """The composition ``Q_y E_y`` as a dense (N+1) x (N+1) matrix."""
    return qy_op(N) @ extension_op(N)


def dy_entries(n: int) -> np.ndarray:
    """Closed form of the diagonal of ``Q_y E_y``: ``(-1)^j / (j + 1)`` for j < n."""
    j = np.arange(n)
    return (-1.0) ** j / (j + 1)
