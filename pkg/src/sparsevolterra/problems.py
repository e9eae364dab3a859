"""Problem files (JSON) and the built-in experiment catalog."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping

import jsonschema
import numpy as np

from . import expr
from .solver import KINDS, NewtonConfig, ProblemSpec

__all__ = [
    "PROBLEM_SCHEMA",
    "InputError",
    "LoadedProblem",
    "load_problem",
    "problem_from_dict",
    "catalog_names",
    "catalog_problem",
    "catalog_sets",
    "sup_error",
]

_number = {"type": "number"}
_NEWTON = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "max_iter": {"type": "integer", "minimum": 1},
        "step_tol": {"type": "number", "exclusiveMinimum": 0},
        "resid_tol": {"type": "number", "exclusiveMinimum": 0},
        "jacobian": {"enum": ["finite-difference", "analytic-power"]},
    },
}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "kernel", "g", "n"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "kind": {"enum": list(KINDS)},
        "kernel": {"type": "string"},
        "g": {"type": "string"},
        "f": {"type": "string"},
        "lambdas": {"type": "array", "items": _number, "minItems": 1},
        "ics": {"type": "array", "items": _number},
        "n": {"type": "integer", "minimum": 1},
        "kernel_degree": {"type": "integer", "minimum": 0},
        "solution": {"type": "string"},
        "params": {"type": "object", "additionalProperties": _number},
        "guess": {"oneOf": [{"enum": ["zeros", "ones"]}, {"type": "array", "items": _number}]},
        "newton": _NEWTON,
    },
    "allOf": [
        {"if": {"properties": {"kind": {"enum": ["vide", "nl_vide"]}}},
         "then": {"required": ["ics", "lambdas"]},
         "else": {"not": {"required": ["ics"]}}},
        {"if": {"properties": {"kind": {"enum": ["vie1", "vie2", "vide"]}}},
         "then": {"not": {"required": ["f"]}}},
    ],
}

_SCOPES = {"kernel": ("x", "y"), "g": ("x",), "f": ("y", "u"), "solution": ("x",)}
_RESERVED = set(expr.FUNCTIONS) | set(expr.CONSTANTS) | {"x", "y", "u"}


class InputError(ValueError):
    """Invalid problem file: schema, expression or consistency error."""


@dataclass(frozen=True)
class LoadedProblem:
    name: str
    spec: ProblemSpec
    raw: dict
    solution: Callable | None = None
    guess: np.ndarray | None = None
    newton: NewtonConfig = field(default_factory=NewtonConfig)

    def with_order(self, n: int) -> "LoadedProblem":
        raw = dict(self.raw, n=int(n))
        return problem_from_dict(raw, self.name)


def _schema_message(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "required":
        return f"{where}: {err.message}"
    if err.validator == "not" and err.schema_path and "required" in str(err.validator_value):
        key = err.validator_value["required"][0]
        return f"{where}: key {key!r} is not allowed for kind {err.instance.get('kind')!r}"
    return f"{where}: {err.message}"


def _caret(src: str, offset: int) -> str:
    col = len(src.encode("utf-8")[:offset].decode("utf-8", "ignore"))
    return f"    {src}\n    {' ' * col}^"


def _compile(field_name: str, src: str, params: Mapping[str, float]) -> tuple[Callable, expr.Expr]:
    names = _SCOPES[field_name]
    try:
        tree = expr.parse(src, names + tuple(params))
    except expr.ParseError as e:
        raise InputError(f"{field_name}: {e}\n{_caret(src, e.offset)}") from None
    return expr.compile_expr(tree, names, params), tree


def _power_of_u(tree: expr.Expr) -> int | None:
    if tree == expr.Var("u"):
        return 1
    if (isinstance(tree, expr.BinOp) and tree.op == "^" and tree.left == expr.Var("u")
            and isinstance(tree.right, expr.Num) and float(tree.right.value).is_integer()
            and tree.right.value >= 1):
        return int(tree.right.value)
    return None


def problem_from_dict(data: Mapping[str, Any], name: str = "problem",
                      params: Mapping[str, float] | None = None, n: int | None = None) -> LoadedProblem:
    """Validate a problem document and compile its expressions.

    ``params`` and ``n`` override the document's values.
    """
    data = dict(data)
    if params:
        data["params"] = {**data.get("params", {}), **params}
    if n is not None:
        data["n"] = int(n)
    validator = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        raise InputError("; ".join(_schema_message(e) for e in errors))
    prm = {k: float(v) for k, v in data.get("params", {}).items()}
    bad = [k for k in prm if k in _RESERVED or not k.isidentifier()]
    if bad:
        raise InputError(f"params: invalid parameter name(s) {bad}")

    kernel, _ = _compile("kernel", data["kernel"], prm)
    g, _ = _compile("g", data["g"], prm)
    f = f_power = None
    if "f" in data:
        f, ftree = _compile("f", data["f"], prm)
        f_power = _power_of_u(ftree)
    elif data["kind"].startswith("nl_"):
        f_power = 1
    solution = _compile("solution", data["solution"], prm)[0] if "solution" in data else None

    try:
        spec = ProblemSpec(kind=data["kind"], kernel=kernel, g=g, n=data["n"], f=f,
                           lambdas=tuple(data.get("lambdas", (1.0,))), ics=tuple(data.get("ics", ())),
                           kernel_degree=data.get("kernel_degree"), f_power=f_power)
    except ValueError as e:
        raise InputError(str(e)) from None

    guess = data.get("guess")
    if guess == "zeros" or guess is None:
        guess_vec = np.zeros(spec.n)
    elif guess == "ones":
        guess_vec = np.ones(spec.n)
    else:
        guess_vec = np.asarray(guess, dtype=float)
        if len(guess_vec) > spec.n:
            raise InputError(f"guess: {len(guess_vec)} coefficients exceed n={spec.n}")
        guess_vec = np.pad(guess_vec, (0, spec.n - len(guess_vec)))
    try:
        newton = NewtonConfig(**data.get("newton", {}))
    except ValueError as e:
        raise InputError(f"newton: {e}") from None
    if newton.jacobian == "analytic-power" and not f_power:
        raise InputError("newton: analytic-power Jacobian needs f of the form u^p")
    return LoadedProblem(data.get("name", name), spec, data, solution, guess_vec, newton)


def load_problem(path, params: Mapping[str, float] | None = None, n: int | None = None) -> LoadedProblem:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be an object")
    return problem_from_dict(data, path.stem, params, n)


# -- catalog ------------------------------------------------------------------

def _catalog_dir():
    return resources.files(__package__) / "catalog"


def catalog_names() -> list[str]:
    return sorted(p.name[:-5] for p in _catalog_dir().iterdir()
                  if p.name.endswith(".json") and p.name != "sets.json")


def catalog_problem(name: str, params: Mapping[str, float] | None = None,
                    n: int | None = None) -> LoadedProblem:
    res = _catalog_dir() / f"{name}.json"
    if not res.is_file():
        raise InputError(f"no catalog problem {name!r}; available: {', '.join(catalog_names())}")
    return problem_from_dict(json.loads(res.read_text(encoding="utf-8")), name, params, n)


def catalog_sets() -> dict:
    return json.loads((_catalog_dir() / "sets.json").read_text(encoding="utf-8"))


def sup_error(u, solution: Callable, points: int = 1000) -> float:
    """Max absolute error on a uniform grid of ``points`` points in [0, 1]."""
    x = np.linspace(0.0, 1.0, points)
    err = np.max(np.abs(u(x) - solution(x)))
    return float(err) if math.isfinite(err) else math.inf
