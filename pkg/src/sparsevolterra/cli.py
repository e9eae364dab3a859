"""Command-line front end: ``volterra solve|converge|operator|repro``.

Exit codes: 0 success, 1 input error, 2 solver non-convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import problems
from .linalg import AlmostBandedMatrix, BandedMatrix, SingularMatrixError
from .problems import InputError, LoadedProblem
from .solver import (NonConvergenceError, SolveReport, build_vide_operator, prepare_operator, solve)
from .voltop import bandwidth_report

log = logging.getLogger("sparsevolterra")

EXIT_OK, EXIT_INPUT, EXIT_NONCONV = 0, 1, 2
SAMPLES = 200


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(r if isinstance(r, str) else _fmt(r) if isinstance(r, float) else str(r)
                              for r in row) + "\n")


def _workers(jobs: int) -> int:
    env = os.environ.get("VOLTERRA_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer VOLTERRA_THREADS=%r", env)
    return max(1, min(cap, jobs))


def _params(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise InputError(f"--param expects NAME=VALUE, got {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise InputError(f"--param {key}: {val!r} is not a number") from None
    return out


def _orders(text: str) -> list[int]:
    """``"8,12,16"`` or ranges ``"8:24:4"`` (inclusive), comma separated."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ":" in part:
                bits = [int(b) for b in part.split(":")]
                lo, hi = bits[0], bits[1]
                step = bits[2] if len(bits) > 2 else 1
                if step <= 0:
                    raise ValueError
                out.extend(range(lo, hi + 1, step))
            else:
                out.append(int(part))
        except (ValueError, IndexError):
            raise InputError(f"--orders: cannot read {part!r}") from None
    if not out or min(out) < 1:
        raise InputError("--orders needs at least one positive integer")
    return sorted(set(out))


def _load(path: str, params=None, n=None) -> LoadedProblem:
    if path.startswith("catalog:"):
        return problems.catalog_problem(path[len("catalog:"):], params, n)
    return problems.load_problem(path, params, n)


def _run(prob: LoadedProblem) -> SolveReport:
    return solve(prob.spec, prob.newton, prob.guess)


def _report_dict(prob: LoadedProblem, rep: SolveReport) -> dict:
    d = {"name": prob.name, "kind": prob.spec.kind, "n": prob.spec.n}
    d.update(rep.to_dict())
    if prob.solution is not None:
        err = problems.sup_error(rep.u, prob.solution)
        d["sup_error"] = err if np.isfinite(err) else None
    return d


def _write_artifacts(out: Path, prob: LoadedProblem, rep: SolveReport):
    out.mkdir(parents=True, exist_ok=True)
    x = np.linspace(0.0, 1.0, SAMPLES)
    _write_csv(out / "solution.csv", ["x", "u"], zip(x.tolist(), rep.u(x).tolist()))
    _write_csv(out / "coefficients.csv", ["index", "coefficient"],
               enumerate(rep.u.coeffs.tolist()))
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_report_dict(prob, rep), fh, indent=2)
        fh.write("\n")


# -- commands -----------------------------------------------------------------

def cmd_solve(args) -> int:
    prob = _load(args.file, _params(args.param), args.n)
    out = Path(args.out) if args.out else Path("volterra_out") / prob.name
    status = EXIT_OK
    try:
        rep = _run(prob)
    except NonConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        rep, status = e.report, EXIT_NONCONV
    _write_artifacts(out, prob, rep)
    summary = _report_dict(prob, rep)
    summary.pop("coefficients")
    summary.pop("residual_history")
    print(json.dumps(summary, indent=2))
    return status


def _converge_one(prob: LoadedProblem, n: int):
    p = prob.with_order(n)
    try:
        return p, _run(p)
    except NonConvergenceError as e:
        return p, e


def cmd_converge(args) -> int:
    orders = _orders(args.orders)
    prob = _load(args.file, _params(args.param))
    with ThreadPoolExecutor(max_workers=_workers(len(orders))) as pool:
        results = list(pool.map(lambda n: _converge_one(prob, n), orders))
    failed = [p.spec.n for p, r in results if isinstance(r, Exception)]
    ref = None
    if prob.solution is None:
        p_ref, r_ref = results[-1]
        if isinstance(r_ref, Exception):
            raise InputError("no analytic solution and the reference (largest) order did not converge")
        ref = r_ref.u
        log.info("no solution given; order %d serves as reference", p_ref.spec.n)
    rows = []
    for p, r in results:
        if isinstance(r, Exception):
            rows.append((p.spec.n, "nan"))
            continue
        if ref is None:
            err = problems.sup_error(r.u, prob.solution)
        else:
            err = problems.sup_error(r.u, ref)
        rows.append((p.spec.n, float(err)))
    if args.out:
        _write_csv(Path(args.out), ["n", "error"], rows)
    else:
        sys.stdout.write("n,error\n")
        for n, e in rows:
            sys.stdout.write(f"{n},{e if isinstance(e, str) else _fmt(e)}\n")
    if failed:
        print(f"error: Newton did not converge for orders {failed}", file=sys.stderr)
        return EXIT_NONCONV
    return EXIT_OK


def system_matrix(prob: LoadedProblem):
    """The linear(ized) system matrix a solve would factorize."""
    p = prob.spec
    V = prepare_operator(p)
    if p.kind == "vie1":
        return V.raw
    if p.kind in ("vie2", "nl_vie"):
        return BandedMatrix.identity(p.n) * p.lambdas[0] - V.composed
    return build_vide_operator(p, V)[0]


def dense_top_rows(A: np.ndarray, tol: float) -> int:
    """Number of leading rows whose entries above ``tol * max|A|`` cover at
    least half of the columns."""
    n = A.shape[1]
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0:
        return 0
    counts = np.count_nonzero(np.abs(A) >= tol * scale, axis=1)
    dense = counts >= max(n // 2, 1)
    return int(np.argmin(dense)) if not dense.all() else len(dense)


def cmd_operator(args) -> int:
    prob = _load(args.file, _params(args.param), args.n)
    M = system_matrix(prob)
    A = M.to_dense()
    tol = args.tol
    if not tol > 0:
        raise InputError("--tol must be positive")
    top = dense_top_rows(A, tol)
    lower, upper, nnz = bandwidth_report(A, tol, skip_rows=top)
    info = {
        "name": prob.name, "kind": prob.spec.kind, "n": prob.spec.n, "tol": tol,
        "lower": lower, "upper": upper, "nnz": nnz, "dense_top_rows": top,
        "structural_top_rows": M.r if isinstance(M, AlmostBandedMatrix) else 0,
    }
    print(json.dumps(info, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "operator.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(info, fh, indent=2)
            fh.write("\n")
        scale = np.max(np.abs(A)) if A.size else 0.0
        i, j = np.nonzero(np.abs(A) >= tol * scale) if scale else ([], [])
        _write_csv(out / "entries.csv", ["row", "col", "value"],
                   ((int(a), int(b), float(A[a, b])) for a, b in zip(i, j)))
    return EXIT_OK


def cmd_repro(args) -> int:
    sets = problems.catalog_sets()
    if args.set not in sets:
        raise InputError(f"unknown set {args.set!r}; choose from {', '.join(sorted(sets))}")
    rows, status = [], EXIT_OK
    for entry in sets[args.set]:
        prob = problems.catalog_problem(entry["problem"], entry.get("params"), entry.get("n"))
        t0 = time.perf_counter()
        try:
            rep = _run(prob)
            err = problems.sup_error(rep.u, prob.solution)
        except NonConvergenceError:
            err, status = float("nan"), EXIT_NONCONV
        elapsed = time.perf_counter() - t0
        label = prob.name + "".join(f" {k}={v:g}" for k, v in entry.get("params", {}).items())
        rows.append((label, prob.spec.n, err, elapsed))
    if args.csv:
        sys.stdout.write("problem,n,error,time\n")
        for label, n, err, t in rows:
            sys.stdout.write(f"{label},{n},{_fmt(err)},{t:.3f}\n")
    else:
        print(f"{'problem':<16}{'n':>6}{'sup error':>12}{'time [s]':>10}")
        for label, n, err, t in rows:
            print(f"{label:<16}{n:>6}{err:>12.2e}{t:>10.3f}")
    return status


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="volterra", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True)

    def problem_args(p):
        p.add_argument("file", help="problem JSON file, or catalog:NAME for a built-in problem")
        p.add_argument("--param", action="append", metavar="NAME=VALUE", help="override a parameter")

    p = sub.add_parser("solve", help="solve one problem and write artifacts")
    problem_args(p)
    p.add_argument("--n", type=int, help="override the approximation order")
    p.add_argument("--out", help="output directory (default volterra_out/NAME)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("converge", help="sup-norm error against the order n")
    problem_args(p)
    p.add_argument("--orders", required=True, help="e.g. 8,12,16 or 8:24:4")
    p.add_argument("--out", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("operator", help="bandwidth and sparsity report of the system matrix")
    problem_args(p)
    p.add_argument("--n", type=int, help="override the approximation order")
    p.add_argument("--tol", type=float, default=1e-13, help="relative entry threshold (default 1e-13)")
    p.add_argument("--out", help="directory for operator.json and entries.csv")
    p.set_defaults(func=cmd_operator)

    p = sub.add_parser("repro", help="rerun a built-in experiment set")
    p.add_argument("set", help="set1, set3-low, set3-high, nl-set1 or nl-vide")
    p.add_argument("--csv", action="store_true", help="CSV instead of a table")
    p.set_defaults(func=cmd_repro)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (SingularMatrixError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())
