"""Solvers for linear and nonlinear Volterra integral and integro-differential
equations of the form

    sum_m lambda_m u^(m)(x) = g(x) + int_0^x K(x, y) f(y, u(y)) dy,

with ``u^(m)(0) = c_m`` for m < M.  First-kind equations drop the left side.
The unknown is expanded in ``P~^(1,0)``.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import jacobi
from .jacobi import Basis, CoeffVec, VOLTERRA
from .linalg import (AlmostBandedMatrix, BandedMatrix, SingularMatrixError, almost_banded_solve, banded_condest,
                     banded_solve, dense_solve)
from .voltop import KernelExpansion, VolterraOperator, assemble_volterra, bandwidth_report, expand_kernel

__all__ = [
    "KINDS",
    "ProblemSpec",
    "SolveReport",
    "NewtonConfig",
    "NonConvergenceError",
    "IllConditionedWarning",
    "prepare_operator",
    "solve",
    "solve_vie_first_kind",
    "solve_vie_second_kind",
    "build_vide_operator",
    "solve_vide_linear",
    "compose_nonlinearity",
    "nonlinear_residual",
    "solve_nonlinear",
]

log = logging.getLogger(__name__)

KINDS = ("vie1", "vie2", "vide", "nl_vie", "nl_vide")
COND_WARN = 1e10


class NonConvergenceError(RuntimeError):
    """Newton iteration hit ``max_iter``; ``history`` holds ``||F||_2`` per iterate."""

    def __init__(self, message, history, report=None):
        super().__init__(message)
        self.history = list(history)
        self.report = report


class IllConditionedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """A Volterra problem with callables for the kernel, forcing and nonlinearity.

    ``kernel(x, y)``, ``g(x)`` and ``f(y, u)`` must accept numpy arrays.
    ``f=None`` means the identity ``f(y, u) = u``.  ``lambdas[m]`` multiplies
    ``u^(m)``; for VIE kinds only ``lambdas[0]`` is used.  ``f_power`` marks
    ``f(y, u) = u^p`` so the analytic Jacobian can be used.
    """

    kind: str
    kernel: Callable
    g: Callable
    n: int
    f: Callable | None = None
    lambdas: tuple = (1.0,)
    ics: tuple = ()
    kernel_degree: int | None = None
    f_power: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        object.__setattr__(self, "ics", tuple(float(v) for v in self.ics))
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.kind in ("vide", "nl_vide"):
            if len(self.ics) != self.order:
                raise ValueError(f"{self.kind} of order {self.order} needs {self.order} initial "
                                 f"conditions, got {len(self.ics)}")
            if self.n <= self.order:
                raise ValueError("n must exceed the differential order")
        elif self.kind in ("vie2", "nl_vie") and (not self.lambdas or self.lambdas[0] == 0):
            raise ValueError("second-kind equations need lambdas[0] != 0")
        if self.kind in ("vie1", "vie2", "vide") and self.f is not None:
            raise ValueError(f"kind {self.kind} is linear; use nl_vie/nl_vide for a nonlinearity")

    @property
    def order(self) -> int:
        """M: highest derivative with a nonzero coefficient (0 for VIE kinds)."""
        if self.kind not in ("vide", "nl_vide"):
            return 0
        nz = [m for m, v in enumerate(self.lambdas) if v != 0]
        if not nz:
            raise ValueError("all lambdas are zero")
        return nz[-1]

    @property
    def nonlinear(self) -> bool:
        return self.kind.startswith("nl_")


@dataclass
class SolveReport:
    u: CoeffVec
    residual_norm: float
    newton_iters: int = 0
    op_bandwidth: tuple = (0, 0, 0)
    wall_time: float = 0.0
    assembly_time: float = 0.0
    ic_residuals: list = field(default_factory=list)
    condition: float | None = None
    residual_history: list = field(default_factory=list)
    kernel_degree: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        """JSON-ready fields; non-finite numbers become ``None``."""
        return {
            "coefficients": [float(c) for c in self.u.coeffs],
            "basis": [self.u.basis.alpha, self.u.basis.beta],
            "residual_norm": _finite_or_none(self.residual_norm),
            "newton_iters": self.newton_iters,
            "op_bandwidth": list(self.op_bandwidth),
            "wall_time": self.wall_time,
            "assembly_time": self.assembly_time,
            "ic_residuals": list(self.ic_residuals),
            "condition": self.condition,
            "residual_history": [_finite_or_none(h) for h in self.residual_history],
            "kernel_degree": self.kernel_degree,
            "converged": self.converged,
        }


def _finite_or_none(v):
    return float(v) if v is not None and np.isfinite(v) else None


@dataclass(frozen=True)
class NewtonConfig:
    max_iter: int = 100
    step_tol: float = 1e-14
    resid_tol: float = 1e-12
    jacobian: str = "finite-difference"

    def __post_init__(self):
        if self.max_iter < 1 or self.step_tol <= 0 or self.resid_tol <= 0:
            raise ValueError("Newton tolerances and max_iter must be positive")
        if self.jacobian not in ("finite-difference", "analytic-power"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")


# --------------------------------------------------------------------------
# shared pieces

def prepare_operator(p: ProblemSpec, ke: KernelExpansion | None = None) -> VolterraOperator:
    """Expand the kernel and assemble ``V_K`` with enough extra rows for the
    raising operator of the problem's target basis."""
    ke = ke or expand_kernel(p.kernel, p.kernel_degree)
    return assemble_volterra(ke, p.n, extra=2 * p.order + 2)


def _target(p: ProblemSpec) -> Basis:
    M = p.order
    return Basis(1 + M, M)


def _expand_g(p: ProblemSpec, basis: Basis) -> np.ndarray:
    return jacobi.expand(p.g, basis, p.n, jacobi.rule_size(p.n, 2 * p.n)).coeffs


def _ic_rows(p: ProblemSpec) -> np.ndarray:
    """Row m evaluates ``u^(m)(0)`` from ``P~^(1,0)`` coefficients."""
    n = p.n
    rows = []
    for m in range(p.order):
        D = jacobi.derivative_op(VOLTERRA, m, n)
        e0 = jacobi.eval_functional(Basis(1 + m, m), 0, n)
        rows.append(D.T @ e0)
    return np.array(rows).reshape(p.order, n)


def _differential_part(p: ProblemSpec) -> BandedMatrix:
    """``sum_m lambda_m S_(1+m,m)^(1+M,M) D_m`` on ``n`` coefficients."""
    n, M = p.n, p.order
    tgt = _target(p)
    acc = BandedMatrix.zeros(n, n)
    for m in range(M + 1):
        lam = p.lambdas[m] if m < len(p.lambdas) else 0.0
        if lam == 0.0:
            continue
        D = jacobi.derivative_op(VOLTERRA, m, n)
        S = jacobi.raising_op(Basis(1 + m, m), tgt, n)
        acc = acc + (S @ D) * lam
    return acc


def _ic_residuals(p: ProblemSpec, u) -> list:
    if p.order == 0:
        return []
    return [float(v) for v in np.abs(_ic_rows(p) @ u - np.asarray(p.ics))]


def _finish(p, u, resid, V, t_solve, t_asm, **extra) -> SolveReport:
    rep = SolveReport(u=CoeffVec(VOLTERRA, u), residual_norm=float(resid),
                      wall_time=t_solve, assembly_time=t_asm, kernel_degree=V.kernel_degree,
                      ic_residuals=_ic_residuals(p, u), **extra)
    return rep


# --------------------------------------------------------------------------
# linear pipelines

def solve_vie_first_kind(p: ProblemSpec, V: VolterraOperator | None = None) -> SolveReport:
    """Solve ``int_0^x K(x, y) u(y) dy = g(x)``.

    The right-hand side ``q(x) = g(1 - x) / (1 - x)`` is sampled only at
    interior Gauss nodes, then ``V_K u = q`` is solved with the raw operator.
    """
    if p.kind != "vie1":
        raise ValueError("solve_vie_first_kind needs kind='vie1'")
    t0 = time.perf_counter()
    V = V or prepare_operator(p)
    t1 = time.perf_counter()
    rule = jacobi.gauss_rule(VOLTERRA, jacobi.rule_size(p.n, 2 * p.n))
    xs = rule.nodes
    q = jacobi.analysis(np.asarray(p.g(1 - xs), dtype=float) / (1 - xs), rule, p.n).coeffs
    A = V.raw
    try:
        cond = banded_condest(A)
    except SingularMatrixError as e:
        raise SingularMatrixError("first-kind system is singular (condition estimate inf)", e.pivot) from None
    if cond > COND_WARN:
        warnings.warn(f"first-kind system condition estimate {cond:.2e}", IllConditionedWarning,
                      stacklevel=2)
    u = banded_solve(A, q)
    t2 = time.perf_counter()
    return _finish(p, u, np.linalg.norm(A @ u - q), V, t2 - t1, t1 - t0,
                   condition=cond, op_bandwidth=(A.lower, A.upper, 0))


def solve_vie_second_kind(p: ProblemSpec, V: VolterraOperator | None = None) -> SolveReport:
    """Solve ``lambda_0 u(x) = g(x) + int_0^x K(x, y) u(y) dy``."""
    if p.kind != "vie2":
        raise ValueError("solve_vie_second_kind needs kind='vie2'")
    t0 = time.perf_counter()
    V = V or prepare_operator(p)
    t1 = time.perf_counter()
    A = BandedMatrix.identity(p.n) * p.lambdas[0] - V.composed
    rhs = _expand_g(p, VOLTERRA)
    u = banded_solve(A, rhs)
    t2 = time.perf_counter()
    return _finish(p, u, np.linalg.norm(A @ u - rhs), V, t2 - t1, t1 - t0,
                   op_bandwidth=(A.lower, A.upper, 0))


def build_vide_operator(p: ProblemSpec, V: VolterraOperator) -> tuple[AlmostBandedMatrix, np.ndarray]:
    """Bordered system for a linear VIDE.

    The first M rows evaluate ``u^(m)(0)``; the remaining rows are the first
    ``n - M`` coefficients in ``P~^(1+M,M)`` of
    ``sum_m lambda_m u^(m) - int_0^x K u dy``.
    """
    if p.kind not in ("vide", "nl_vide"):
        raise ValueError("build_vide_operator needs a vide kind")
    n, M = p.n, p.order
    body = _differential_part(p) - V.weighted(_target(p))
    band = body.truncate(n - M, n).shift_down(M) if M else body
    top = _ic_rows(p)
    rhs = np.concatenate([np.asarray(p.ics, dtype=float), _expand_g(p, _target(p))[:n - M]])
    return AlmostBandedMatrix(band, top), rhs


def solve_vide_linear(p: ProblemSpec, V: VolterraOperator | None = None) -> SolveReport:
    if p.kind != "vide":
        raise ValueError("solve_vide_linear needs kind='vide'")
    t0 = time.perf_counter()
    V = V or prepare_operator(p)
    t1 = time.perf_counter()
    A, rhs = build_vide_operator(p, V)
    u = almost_banded_solve(A, rhs)
    t2 = time.perf_counter()
    return _finish(p, u, np.linalg.norm(A @ u - rhs), V, t2 - t1, t1 - t0,
                   op_bandwidth=(A.band.lower, A.band.upper, A.r))


# --------------------------------------------------------------------------
# nonlinear pipelines

def compose_nonlinearity(f: Callable, u: CoeffVec, m: int | None = None) -> CoeffVec:
    """Coefficients of ``y -> f(y, u(y))`` in ``u``'s basis, same length as ``u``.

    ``u`` is synthesized at ``max(2 len(u), len(u) + 16)`` Gauss nodes.
    """
    n = len(u)
    rule = jacobi.gauss_rule(u.basis, m or max(2 * n, n + 16))
    vals = np.broadcast_to(np.asarray(f(rule.nodes, jacobi.synthesis(u, rule)), dtype=float),
                           rule.nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("nonlinearity returned non-finite values")
    return jacobi.analysis(vals, rule, n)


@dataclass(frozen=True)
class _NonlinearSystem:
    """Precomputed linear pieces of ``F(u) = A_lin u - W f(u) - rhs``."""

    A_lin: BandedMatrix | AlmostBandedMatrix
    W: BandedMatrix
    rhs: np.ndarray
    skip: int          # leading rows untouched by the Volterra term
    f: Callable

    def fu(self, u):
        return compose_nonlinearity(self.f, CoeffVec(VOLTERRA, u)).coeffs

    def residual(self, u):
        F = self.A_lin @ u - self.rhs
        F[self.skip:] -= (self.W @ self.fu(u))[:len(F) - self.skip]
        if not np.all(np.isfinite(F)):
            raise FloatingPointError("non-finite residual")
        return F

    def dense_linear(self):
        return self.A_lin.to_dense()

    def volterra_rows(self, J_f):
        """``W J_f`` placed below the skipped rows."""
        out = np.zeros((len(self.rhs), J_f.shape[1]))
        WJ = self.W.to_dense() @ J_f
        out[self.skip:] = WJ[:len(self.rhs) - self.skip]
        return out


def _nonlinear_system(p: ProblemSpec, V: VolterraOperator) -> _NonlinearSystem:
    f = p.f or (lambda y, u: u)
    n, M = p.n, p.order
    if p.kind == "nl_vie":
        A_lin = BandedMatrix.identity(n) * p.lambdas[0]
        return _NonlinearSystem(A_lin, V.composed, _expand_g(p, VOLTERRA), 0, f)
    if p.kind == "nl_vide":
        diff = _differential_part(p)
        band = diff.truncate(n - M, n).shift_down(M) if M else diff
        A_lin = AlmostBandedMatrix(band, _ic_rows(p))
        rhs = np.concatenate([np.asarray(p.ics, dtype=float), _expand_g(p, _target(p))[:n - M]])
        return _NonlinearSystem(A_lin, V.weighted(_target(p)), rhs, M, f)
    raise ValueError(f"kind {p.kind!r} is not nonlinear")


def nonlinear_residual(p: ProblemSpec, u, V: VolterraOperator | None = None) -> np.ndarray:
    """``F(u)``: the linear part acts on ``u``, the Volterra part on ``f(y, u)``.

    For ``nl_vide`` the first M entries are ``u^(m)(0) - c_m``.
    """
    u = u.coeffs if isinstance(u, CoeffVec) else np.asarray(u, dtype=float)
    if len(u) != p.n:
        raise ValueError(f"expected {p.n} coefficients, got {len(u)}")
    return _nonlinear_system(p, V or prepare_operator(p)).residual(u)


def _fd_jacobian(system: _NonlinearSystem, u, F0):
    n = len(u)
    J = np.empty((len(F0), n))
    h0 = np.sqrt(np.finfo(float).eps)
    for i in range(n):
        h = h0 * max(1.0, abs(u[i]))
        up = u.copy()
        up[i] += h
        h = up[i] - u[i]
        J[:, i] = (system.residual(up) - F0) / h
    return J


def _power_jacobian(system: _NonlinearSystem, u, power: int):
    n = len(u)
    uc = CoeffVec(VOLTERRA, u)
    if power == 1:
        J_f = np.eye(n)
    else:
        w = compose_nonlinearity(lambda y, v: power * v ** (power - 1), uc)
        J_f = jacobi.multiplication_op(w, n).to_dense()
    return system.dense_linear() - system.volterra_rows(J_f)


def solve_nonlinear(p: ProblemSpec, cfg: NewtonConfig | None = None, guess=None,
                    V: VolterraOperator | None = None) -> SolveReport:
    """Newton iteration on the coefficients, without linesearch.

    Stops when ``||F||_2 <= resid_tol`` or ``||du||_inf <= step_tol``, or when
    the residual has stagnated at rounding level: a step that fails to halve
    ``||F||_2`` once it is below ``sqrt(resid_tol)`` ends the iteration.
    """
    cfg = cfg or NewtonConfig()
    if not p.nonlinear:
        raise ValueError("solve_nonlinear needs kind nl_vie or nl_vide")
    if cfg.jacobian == "analytic-power" and not p.f_power:
        raise ValueError("analytic-power Jacobian needs f_power")
    t0 = time.perf_counter()
    V = V or prepare_operator(p)
    t1 = time.perf_counter()
    system = _nonlinear_system(p, V)
    u = np.zeros(p.n) if guess is None else np.array(
        guess.coeffs if isinstance(guess, CoeffVec) else guess, dtype=float)
    if u.shape != (p.n,):
        raise ValueError(f"guess must have length {p.n}")

    F = system.residual(u)
    history = [float(np.linalg.norm(F))]
    iters = 0
    converged = history[-1] <= cfg.resid_tol
    while not converged and iters < cfg.max_iter:
        if cfg.jacobian == "analytic-power":
            J = _power_jacobian(system, u, p.f_power)
        else:
            J = _fd_jacobian(system, u, F)
        du = dense_solve(J, F)
        iters += 1
        try:
            F = system.residual(u - du)
        except FloatingPointError:
            history.append(float("inf"))
            break
        u = u - du
        history.append(float(np.linalg.norm(F)))
        log.debug("newton %d: |F| = %.3e, |du| = %.3e", iters, history[-1], np.max(np.abs(du)))
        stagnated = history[-1] <= np.sqrt(cfg.resid_tol) and history[-1] > 0.5 * history[-2]
        converged = (history[-1] <= cfg.resid_tol or np.max(np.abs(du)) <= cfg.step_tol
                     or stagnated)
    t2 = time.perf_counter()
    bw = bandwidth_report(system.W, 1e-13)
    rep = _finish(p, u, history[-1], V, t2 - t1, t1 - t0, newton_iters=iters,
                  residual_history=history, converged=bool(converged),
                  op_bandwidth=(bw[0], bw[1], p.order))
    if not converged:
        why = ("the iterate became non-finite" if not np.isfinite(history[-1])
               else f"no convergence in {cfg.max_iter} iterations")
        raise NonConvergenceError(f"Newton failed: {why} (|F| = {history[-1]:.3e})", history, rep)
    return rep


def solve(p: ProblemSpec, cfg: NewtonConfig | None = None, guess=None,
          V: VolterraOperator | None = None) -> SolveReport:
    """Dispatch on ``p.kind``."""
    if p.kind == "vie1":
        return solve_vie_first_kind(p, V)
    if p.kind == "vie2":
        return solve_vie_second_kind(p, V)
    if p.kind == "vide":
        return solve_vide_linear(p, V)
    return solve_nonlinear(p, cfg, guess, V)
