"""A small expression language for kernels, forcings and nonlinearities.

Grammar, loosest binding first::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative, binds tighter than '-'
    atom   := number | name | name '(' expr ')' | '(' expr ')'

so ``-2^2 == -4`` and ``2^3^2 == 512``.  Implicit multiplication is not
supported.  Evaluation is vectorized over numpy arrays.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

import numpy as np

__all__ = [
    "FUNCTIONS",
    "CONSTANTS",
    "DEFAULT_VARIABLES",
    "ParseError",
    "NonFiniteWarning",
    "UnboundVariableError",
    "Num",
    "Var",
    "Const",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "parse",
    "evaluate",
    "to_source",
    "free_variables",
    "compile_expr",
]

FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "atan": np.arctan, "abs": np.abs,
}
CONSTANTS = {"pi": np.pi, "e": np.e}
DEFAULT_VARIABLES = ("x", "y", "u", "k")


class ParseError(ValueError):
    """Syntax error at byte ``offset`` of the source; ``expected`` names what
    the parser was looking for."""

    def __init__(self, message: str, offset: int, expected: str = ""):
        self.message = message
        self.offset = offset
        self.expected = expected
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {offset}{hint}")


class NonFiniteWarning(RuntimeWarning):
    pass


class UnboundVariableError(KeyError):
    pass


# -- AST ----------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Const, Neg, BinOp, Call]


# -- lexer --------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str      # num, name, op, end
    text: str
    offset: int    # byte offset


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    byte = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", byte, "a number, name, operator or parenthesis")
        text = m.group()
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, text, byte))
        pos = m.end()
        byte += len(text.encode("utf-8"))
    toks.append(_Tok("end", "", byte))
    return toks


# -- parser -------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str, variables: frozenset):
        self.toks = _tokenize(src)
        self.i = 0
        self.variables = variables

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str):
        if self.tok.text != text:
            found = self.tok.text or "end of input"
            raise ParseError(f"found {found!r}", self.tok.offset, repr(text))
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self.tok.text!r}", self.tok.offset, "an operator or end of input")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.text in ("+", "-"):
            op = self.advance().text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.advance().text
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text))
        if t.kind == "name":
            self.advance()
            if t.text in FUNCTIONS:
                if self.tok.text != "(":
                    raise ParseError(f"function {t.text!r} needs an argument", self.tok.offset, "'('")
                self.advance()
                arg = self.expr()
                if self.tok.text == ",":
                    raise ParseError(f"function {t.text!r} takes exactly 1 argument", self.tok.offset, "')'")
                self.expect(")")
                return Call(t.text, arg)
            if t.text in CONSTANTS and t.text not in self.variables:
                return Const(t.text)
            if t.text in self.variables:
                return Var(t.text)
            allowed = ", ".join(sorted(self.variables))
            raise ParseError(f"unknown identifier {t.text!r}", t.offset, f"one of: {allowed}" if allowed else "")
        if t.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        found = t.text or "end of input"
        raise ParseError(f"found {found!r}", t.offset, "a number, name, '-' or '('")


def parse(src: str, variables: Iterable[str] = DEFAULT_VARIABLES) -> Expr:
    """Parse ``src``; identifiers other than functions, ``pi``, ``e`` and
    ``variables`` are rejected with their position."""
    if not isinstance(src, str):
        raise TypeError("expression source must be a string")
    return _Parser(src, frozenset(variables)).parse()


# -- evaluation ---------------------------------------------------------------

_BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}


def _eval(e: Expr, env: Mapping):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Neg):
        return np.negative(_eval(e.operand, env))
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        if e.op == "^":
            # float power so negative integer exponents work
            return np.power(np.asarray(a, dtype=float), b)
        return _BINARY[e.op](a, b)
    if isinstance(e, Call):
        return FUNCTIONS[e.func](_eval(e.arg, env))
    raise TypeError(f"not an expression node: {e!r}")


def evaluate(e: Expr, bindings: Mapping | None = None, **kw):
    """Evaluate with IEEE semantics; non-finite results raise a
    :class:`NonFiniteWarning` instead of an error."""
    env = dict(bindings or {})
    env.update(kw)
    with np.errstate(all="ignore"):
        out = _eval(e, env)
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        warnings.warn("expression produced non-finite values", NonFiniteWarning, stacklevel=2)
    return float(out) if out.ndim == 0 else out


def free_variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Call):
        return free_variables(e.arg)
    return set()


def compile_expr(e: Expr | str, argnames: tuple[str, ...], params: Mapping | None = None,
                 variables: Iterable[str] | None = None) -> Callable:
    """Vectorized callable ``f(*args)`` with ``params`` bound.

    The result is broadcast to the common shape of the arguments, so a
    constant expression still returns an array.
    """
    params = dict(params or {})
    if isinstance(e, str):
        e = parse(e, tuple(variables) if variables is not None else tuple(argnames) + tuple(params))
    missing = free_variables(e) - set(argnames) - set(params)
    if missing:
        raise UnboundVariableError(", ".join(sorted(missing)))

    def fn(*args):
        env = dict(params)
        env.update(zip(argnames, args))
        val = evaluate(e, env)
        shape = np.broadcast_shapes(*(np.shape(a) for a in args)) if args else ()
        return np.broadcast_to(val, shape).copy() if shape else val

    fn.expr = e
    return fn


# -- printing -----------------------------------------------------------------

def to_source(e: Expr) -> str:
    """Fully parenthesized source that parses back to the same tree."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, (Var, Const)):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")
