"""Shifted Jacobi polynomials on [0, 1] and their sparse operator calculus.

Throughout, ``P~_n^(a,b)(x) = P_n^(a,b)(2x - 1)``, orthogonal on [0, 1] with
weight ``(1 - x)^a x^b``.  Polynomials are *not* normalized: ``P_n(1)`` is the
binomial coefficient ``(a + 1)_n / n!``.

Operators act on coefficient vectors from the left.  ``X`` below denotes the
matrix of multiplication by ``x``: ``coeffs(x f) = X @ coeffs(f)``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import betaln, binom, gammaln

from .linalg import BandedMatrix

__all__ = [
    "Basis",
    "CoeffVec",
    "QuadratureRule",
    "recurrence_coeffs",
    "shifted_recurrence",
    "jacobi_operator",
    "norms",
    "vandermonde",
    "clenshaw_eval",
    "gauss_rule",
    "analysis",
    "synthesis",
    "expand",
    "raising_op",
    "lowering_op",
    "reflection_op",
    "derivative_op",
    "eval_functional",
    "multiplication_op",
    "operator_clenshaw",
]


@dataclass(frozen=True)
class Basis:
    """Jacobi parameters (alpha, beta) of a shifted basis on [0, 1]."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > -1 and self.beta > -1):
            raise ValueError(f"Jacobi parameters must exceed -1, got ({self.alpha}, {self.beta})")

    def __iter__(self):
        return iter((self.alpha, self.beta))

    def __str__(self):
        return f"({self.alpha:g},{self.beta:g})"


LEGENDRE = Basis(0, 0)
VOLTERRA = Basis(1, 0)


@dataclass(frozen=True)
class CoeffVec:
    basis: Basis
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))

    def __len__(self):
        return len(self.coeffs)

    def __call__(self, x):
        return synthesize_at(self, x)

    def trimmed(self, rtol=1e-15):
        c = self.coeffs
        scale = np.max(np.abs(c)) if len(c) else 0.0
        big = np.nonzero(np.abs(c) > rtol * scale)[0]
        end = big[-1] + 1 if len(big) else 1
        return CoeffVec(self.basis, c[:end])


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule; ``nodes_ext`` keeps the nodes in long double so that the
    transform matrices are evaluated at the true nodes, not the rounded ones."""

    nodes: np.ndarray
    weights: np.ndarray
    basis: Basis
    nodes_ext: np.ndarray | None = field(default=None, repr=False, compare=False)
    _vcache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self):
        return len(self.nodes)

    def integrate(self, values):
        """Integral of ``values * weight`` over [0, 1]."""
        return self.weights @ np.asarray(values)

    def vandermonde(self, n: int) -> np.ndarray:
        """Read-only ``P~_k(node_i)`` for k < n."""
        V = self._vcache.get(n)
        if V is None:
            x = self.nodes if self.nodes_ext is None else self.nodes_ext
            V = vandermonde(self.basis, n, x).astype(float)
            V.setflags(write=False)
            self._vcache[n] = V
        return V


def _as_basis(basis) -> Basis:
    return basis if isinstance(basis, Basis) else Basis(*basis)


def recurrence_coeffs(n: int, basis) -> tuple[float, float, float]:
    """Natural-domain recurrence ``t P_n = c_{n-1} P_{n-1} + a_n P_n + b_n P_{n+1}``.

    Returns ``(a_n, b_n, c_n)`` where ``c_n`` is the coefficient of ``P_n``
    in ``t P_{n+1}``.
    """
    if n < 0:
        raise ValueError("degree must be nonnegative")
    a, b, c = _natural_recurrence(_as_basis(basis), n + 1)
    return float(a[n]), float(b[n]), float(c[n])


def _natural_recurrence(basis: Basis, n: int, dtype=float):
    """Arrays a[0:n], b[0:n], c[0:n] of the natural-domain recurrence."""
    al, be = dtype(basis.alpha), dtype(basis.beta)
    k = np.arange(n, dtype=dtype)
    s = 2 * k + al + be
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (be**2 - al**2) / (s * (s + 2))
        b = 2 * (k + 1) * (k + al + be + 1) / ((s + 1) * (s + 2))
        # coefficient of P_k in t P_{k+1}
        kk = k + 1
        ss = 2 * kk + al + be
        c = 2 * (kk + al) * (kk + be) / (ss * (ss + 1))
    if n > 0:
        a[0] = (be - al) / (al + be + 2)
        b[0] = 2 / (al + be + 2)
    return a, b, c


def shifted_recurrence(basis, n: int, dtype=float):
    """Recurrence ``x P~_k = C_{k-1} P~_{k-1} + A_k P~_k + B_k P~_{k+1}`` on [0, 1].

    Returns arrays ``(A, B, C)`` of length ``n``.
    """
    a, b, c = _natural_recurrence(_as_basis(basis), n, dtype)
    return (a + 1) / 2, b / 2, c / 2


def jacobi_operator(basis, n: int) -> BandedMatrix:
    """n x n matrix of multiplication by x (the transpose of the shifted Jacobi matrix)."""
    A, B, C = shifted_recurrence(basis, n)
    return BandedMatrix.from_diagonals(n, n, {-1: _below(B[: n - 1]), 0: A, 1: C[: n - 1]})


def norms(basis, n: int) -> np.ndarray:
    """Squared norms ``int_0^1 (1-x)^a x^b P~_k(x)^2 dx`` for k < n."""
    al, be = _as_basis(basis)
    out = np.empty(n)
    if n == 0:
        return out
    out[0] = np.exp(betaln(al + 1, be + 1))
    if n == 1:
        return out
    # exp of a gammaln sum loses ~k*eps*log(k); a running product of the
    # one-step ratios stays near sqrt(k)*eps
    out[1] = np.exp(gammaln(al + 2) + gammaln(be + 2) - gammaln(al + be + 2)) / (al + be + 3)
    k = np.arange(2, n, dtype=float)
    s = 2 * k + al + be
    ratio = (k + al) * (k + be) * (s - 1) / (k * (k + al + be) * (s + 1))
    out[2:] = out[1] * np.cumprod(ratio)
    return out


def vandermonde(basis, n: int, x) -> np.ndarray:
    """Values ``P~_k(x_i)`` for k < n, shape ``(len(x), n)``, by forward recurrence.

    Long double input is evaluated in long double.
    """
    x = np.asarray(x)
    dtype = np.longdouble if x.dtype == np.longdouble else float
    x = x.astype(dtype, copy=False)
    V = np.empty(x.shape + (n,), dtype=dtype)
    if n == 0:
        return V
    A, B, C = shifted_recurrence(basis, n, dtype)
    V[..., 0] = 1.0
    if n > 1:
        V[..., 1] = (x - A[0]) / B[0]
    for k in range(1, n - 1):
        V[..., k + 1] = ((x - A[k]) * V[..., k] - C[k - 1] * V[..., k - 1]) / B[k]
    return V


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or np.any(~np.isfinite(x)):
        raise ValueError("evaluation points must lie in [0, 1]")
    return x


def clenshaw_eval(f: CoeffVec, x):
    """Evaluate ``sum_k f_k P~_k(x)`` with the Clenshaw recurrence."""
    x = _check_domain(x)
    c = f.coeffs
    n = len(c)
    if n == 0:
        return np.zeros_like(x)[()]
    A, B, C = shifted_recurrence(f.basis, n + 1)
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for k in range(n - 1, -1, -1):
        gamma = C[k] / B[k + 1] if k + 1 < n else 0.0
        b1, b2 = c[k] + (x - A[k]) / B[k] * b1 - gamma * b2, b1
    return b1[()] if np.ndim(b1) == 0 else b1


def synthesize_at(f: CoeffVec, x):
    return clenshaw_eval(f, x)


_rule_cache: dict = {}
_rule_lock = threading.Lock()


def gauss_rule(basis, m: int) -> QuadratureRule:
    """Gauss-Jacobi rule with ``m`` nodes on [0, 1] for weight ``(1-x)^a x^b``.

    Nodes are eigenvalues of the symmetrized Jacobi matrix (Golub-Welsch),
    polished by Newton steps on ``P~_m``; weights come from the
    Christoffel function so that small weights keep relative accuracy.
    """
    basis = _as_basis(basis)
    if m < 1:
        raise ValueError("quadrature size must be positive")
    key = (basis, int(m))
    rule = _rule_cache.get(key)
    if rule is not None:
        return rule
    with _rule_lock:
        rule = _rule_cache.get(key)
        if rule is None:
            rule = _build_rule(basis, int(m))
            _rule_cache[key] = rule
    return rule


def _build_rule(basis: Basis, m: int) -> QuadratureRule:
    A, B, C = shifted_recurrence(basis, m)
    off = np.sqrt(B[: m - 1] * C[: m - 1])
    if m == 1:
        nodes = shifted_recurrence(basis, 1, np.longdouble)[0][:1]
    else:
        nodes = np.clip(eigh_tridiagonal(A, off, eigvals_only=True), 0.0, 1.0).astype(np.longdouble)
        # Newton polish in long double: P~_m'(x) = (m + a + b + 1) P~_{m-1}^{(a+1,b+1)}(x)
        up = Basis(basis.alpha + 1, basis.beta + 1)
        for _ in range(3):
            pm = vandermonde(basis, m + 1, nodes)[:, m]
            dpm = (m + basis.alpha + basis.beta + 1) * vandermonde(up, m, nodes)[:, m - 1]
            step = np.where(dpm != 0, pm / np.where(dpm != 0, dpm, 1), 0)
            nodes = np.clip(nodes - step, 0, 1)
    h = norms(basis, m)
    # Christoffel weights keep small weights relatively accurate
    V = vandermonde(basis, m, nodes)
    weights = (1 / np.sum(V**2 / h, axis=1)).astype(float)
    ext = nodes
    nodes = ext.astype(float)
    for arr in (nodes, weights, ext):
        arr.setflags(write=False)
    return QuadratureRule(nodes, weights, basis, ext)


def rule_size(n: int, degree: int = 0) -> int:
    return max(n, degree + 1) + 8


def analysis(values, rule: QuadratureRule, n: int) -> CoeffVec:
    """Coefficients of degree < n from samples at the nodes of ``rule``."""
    if n > rule.size:
        raise ValueError(f"{rule.size}-point rule cannot resolve {n} coefficients")
    values = np.asarray(values, dtype=float)
    V = rule.vandermonde(n)
    coeffs = (V.T @ (rule.weights * values)) / norms(rule.basis, n)
    return CoeffVec(rule.basis, coeffs)


def synthesis(f: CoeffVec, rule: QuadratureRule) -> np.ndarray:
    """Values of ``f`` at the nodes of ``rule``."""
    if f.basis != rule.basis:
        raise ValueError(f"coefficients in basis {f.basis} but rule for {rule.basis}")
    return rule.vandermonde(len(f)) @ f.coeffs


def expand(func: Callable, basis, n: int, m: int | None = None) -> CoeffVec:
    """Project a vectorized callable onto the first ``n`` polynomials."""
    rule = gauss_rule(basis, m or rule_size(n))
    vals = np.asarray(func(rule.nodes), dtype=float)
    vals = np.broadcast_to(vals, rule.nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function returned non-finite values at quadrature nodes")
    return analysis(vals, rule, n)


# -- sparse operators ---------------------------------------------------------

def _unit_raise(basis: Basis, which: str, n: int) -> BandedMatrix:
    al, be = basis
    k = np.arange(n, dtype=float)
    s = 2 * k + al + be + 1
    with np.errstate(divide="ignore", invalid="ignore"):
        diag = (k + al + be + 1) / s
    if which == "alpha":
        sup = -(k[1:] + be) / s[1:]
    else:
        sup = (k[1:] + al) / s[1:]
    if al + be + 1 == 0:
        diag[0] = 1.0
    return BandedMatrix.from_diagonals(n, n, {0: diag, 1: sup})


def _integer_step(d, name):
    steps = round(d)
    if abs(d - steps) > 1e-12 or steps < 0:
        raise ValueError(f"{name} increment must be a nonnegative integer, got {d}")
    return steps


def raising_op(frm, to, n: int) -> BandedMatrix:
    """Conversion ``S`` from ``P~^frm`` to ``P~^to`` (upper triangular, n x n)."""
    frm, to = _as_basis(frm), _as_basis(to)
    da = _integer_step(to.alpha - frm.alpha, "alpha")
    db = _integer_step(to.beta - frm.beta, "beta")
    S = BandedMatrix.identity(n)
    cur = frm
    for _ in range(da):
        S = _unit_raise(cur, "alpha", n) @ S
        cur = Basis(cur.alpha + 1, cur.beta)
    for _ in range(db):
        S = _unit_raise(cur, "beta", n) @ S
        cur = Basis(cur.alpha, cur.beta + 1)
    return S


def lowering_op(frm, which: str, n: int) -> BandedMatrix:
    """Weighted lowering, (n + 1) x n lower bidiagonal.

    ``which="1-x"`` multiplies by ``(1 - x)`` and lowers alpha by one;
    ``which="x"`` multiplies by ``x`` and lowers beta by one.  The pairing
    follows from the weight ``(1 - x)^alpha x^beta``.
    """
    al, be = _as_basis(frm)
    k = np.arange(n, dtype=float)
    s = 2 * k + al + be + 1
    if which == "1-x":
        if al - 1 <= -1:
            raise ValueError("lowering alpha would leave the admissible range")
        diag, sub = (k + al) / s, -(k + 1) / s
    elif which == "x":
        if be - 1 <= -1:
            raise ValueError("lowering beta would leave the admissible range")
        diag, sub = (k + be) / s, (k + 1) / s
    else:
        raise ValueError(f"unknown weight {which!r}; expected 'x' or '1-x'")
    return BandedMatrix.from_diagonals(n + 1, n, {0: diag, -1: _below(sub)})


def _below(vals):
    # from_diagonals indexes by row; entry A[k + 1, k] sits at row k + 1
    return np.concatenate([[0.0], vals])


def lowered_basis(frm, which: str) -> Basis:
    al, be = _as_basis(frm)
    return Basis(al - 1, be) if which == "1-x" else Basis(al, be - 1)


def reflection_op(basis, n: int) -> BandedMatrix:
    """Diagonal ``(-1)^k``; maps ``f`` in (a, b) to ``f(1 - x)`` in (b, a)."""
    return BandedMatrix.from_diagonals(n, n, {0: (-1.0) ** np.arange(n)})


def derivative_op(basis, order: int, n: int) -> BandedMatrix:
    """``d^m/dx^m`` from ``P~^(a,b)`` to ``P~^(a+m,b+m)``, n x n.

    Built as a product of distinct single-step operators.
    """
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    al, be = _as_basis(basis)
    D = BandedMatrix.identity(n)
    for step in range(order):
        a, b = al + step, be + step
        k = np.arange(1, n, dtype=float)
        single = BandedMatrix.from_diagonals(n, n, {1: k + a + b + 1})
        D = single @ D
    return D


def eval_functional(basis, endpoint: int, n: int) -> np.ndarray:
    """Row vector ``e`` with ``e @ coeffs == f(endpoint)``."""
    al, be = _as_basis(basis)
    k = np.arange(n, dtype=float)
    if endpoint == 1:
        return binom(k + al, k)
    if endpoint == 0:
        return (-1.0) ** k * binom(k + be, k)
    raise ValueError("endpoint must be 0 or 1")


def operator_clenshaw(coeffs, basis, X, identity):
    """Evaluate ``sum_k c_k P~_k(X)`` where ``X`` is any operator supporting
    ``@``, ``+``, ``-`` and scalar ``*``."""
    c = np.asarray(coeffs, dtype=float)
    n = len(c)
    A, B, C = shifted_recurrence(basis, n + 1)
    b1 = None
    b2 = None
    for k in range(n - 1, -1, -1):
        term = identity * c[k]
        if b1 is not None:
            term = term + (X @ b1 - b1 * A[k]) * (1.0 / B[k])
        if b2 is not None:
            term = term - b2 * (C[k] / B[k + 1])
        b1, b2 = term, b1
    return b1 if b1 is not None else identity * 0.0


def multiplication_op(w: CoeffVec, n: int) -> BandedMatrix:
    """n x n matrix of multiplication by ``w`` acting on coefficients in ``w.basis``."""
    w = w.trimmed(0.0) if len(w) else w
    deg = max(len(w) - 1, 0)
    N = n + deg + 1
    X = jacobi_operator(w.basis, N)
    M = operator_clenshaw(w.coeffs, w.basis, X, BandedMatrix.identity(N))
    return M.truncate(n, n)
