"""Expression language: parsing, precedence, errors, printing and evaluation.

The differential oracle is sympy, fed the same text with ``^`` spelled ``**``.
"""
import math
import warnings

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from sparsevolterra.expr import (BinOp, Call, Const, FUNCTIONS, Neg, NonFiniteWarning, Num, ParseError,
                                 UnboundVariableError, Var, compile_expr, evaluate, free_variables, parse,
                                 to_source)


def ev(src, **kw):
    return evaluate(parse(src), kw)


# -- examples -----------------------------------------------------------------

def test_kernel_example():
    e = parse("x*(1+2*x)*exp(y*(x-y))")
    assert evaluate(e, {"x": 1.0, "y": 0.0}) == 3.0
    assert evaluate(e, {"x": 0.5, "y": 0.5}) == 1.0


def test_power_is_right_associative():
    assert ev("2^3^2") == 512.0


def test_power_binds_tighter_than_unary_minus():
    assert ev("-2^2") == -4.0
    assert ev("2^-1") == 0.5


def test_precedence_and_associativity():
    assert ev("1+2*3") == 7.0
    assert ev("8/4/2") == 1.0
    assert ev("10-4-3") == 3.0
    assert ev("(1+2)*3") == 9.0


def test_constants():
    assert ev("pi") == 3.141592653589793
    assert ev("e") == math.e


def test_functions_and_numbers():
    assert ev("sqrt(4) + abs(-3) + atan(0) + log(1)") == 5.0
    assert ev("1.5e2 + .5") == 150.5


def test_incomplete_call_reports_offset():
    with pytest.raises(ParseError) as info:
        parse("sin(")
    assert info.value.offset == 4


@pytest.mark.parametrize("src, offset", [("x +* y", 3), ("2 x", 2), ("(x", 2), ("x)", 1), ("x $ y", 2),
                                         ("", 0)])
def test_parse_error_positions(src, offset):
    with pytest.raises(ParseError) as info:
        parse(src)
    assert info.value.offset == offset
    assert 0 <= info.value.offset <= len(src.encode())


def test_unknown_identifier_rejected_with_position():
    with pytest.raises(ParseError) as info:
        parse("x + foo")
    assert info.value.offset == 4


def test_function_needs_call_syntax():
    with pytest.raises(ParseError):
        parse("sin x")
    with pytest.raises(ParseError):
        parse("sin(x, y)")


def test_variable_scope():
    parse("u^2", ("y", "u"))
    with pytest.raises(ParseError):
        parse("u^2", ("x", "y"))


def test_unbound_variable():
    with pytest.raises(UnboundVariableError):
        ev("x + y", x=1.0)


def test_non_finite_results_are_flagged():
    with pytest.warns(NonFiniteWarning):
        assert math.isinf(ev("1/x", x=0.0))
    with pytest.warns(NonFiniteWarning):
        assert math.isnan(ev("log(x)", x=-1.0))


def test_vectorized_and_broadcast_compile():
    f = compile_expr("x - y", ("x", "y"))
    np.testing.assert_array_equal(f(np.array([1.0, 2.0]), np.array([[0.5], [1.0]])), [[0.5, 1.5], [0.0, 1.0]])
    g = compile_expr("2", ("x",))
    np.testing.assert_array_equal(g(np.zeros(3)), [2.0, 2.0, 2.0])


def test_compile_binds_parameters():
    f = compile_expr("atan(k*x)", ("x",), {"k": 100.0})
    assert f(0.01) == pytest.approx(math.atan(1.0), abs=1e-15)
    with pytest.raises(UnboundVariableError):
        compile_expr(parse("k*x"), ("x",))


def test_free_variables():
    assert free_variables(parse("x*exp(y) + pi")) == {"x", "y"}


# -- properties ---------------------------------------------------------------

NAMES = ["x", "y", "u", "k"]
SMOOTH = ["sin", "cos", "exp", "atan", "tanh", "sinh", "cosh"]


def ast(depth):
    leaf = st.one_of(st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(Num),
                     st.sampled_from(NAMES).map(Var), st.sampled_from(["pi", "e"]).map(Const))
    if depth == 0:
        return leaf
    sub = st.deferred(lambda: ast(depth - 1))
    return st.one_of(leaf, sub.map(Neg),
                     st.builds(BinOp, st.sampled_from("+-*/^"), sub, sub),
                     st.builds(Call, st.sampled_from(sorted(FUNCTIONS)), sub))


@settings(max_examples=100, deadline=None)
@given(ast(6))
def test_print_parse_fixpoint(e):
    assert parse(to_source(e)) == e


def test_printer_examples_reparse():
    for src in ["-2^2", "2^3^2", "-(x-y)^-2", "x*(1+2*x)*exp(y*(x-y))", "1e-20 + 3"]:
        e = parse(src)
        assert parse(to_source(e)) == e


@settings(max_examples=100, deadline=None)
@given(ast(4), st.floats(-2, 2), st.floats(-2, 2))
def test_eval_is_pure(e, x, y):
    env = {"x": x, "y": y, "u": 0.5, "k": 3.0}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonFiniteWarning)
        a, b = evaluate(e, env), evaluate(e, dict(env))
    assert np.asarray(a).tobytes() == np.asarray(b).tobytes()


def smooth_ast(depth):
    leaf = st.one_of(st.integers(1, 5).map(lambda v: Num(float(v))), st.sampled_from(["x", "y"]).map(Var))
    if depth == 0:
        return leaf
    sub = st.deferred(lambda: smooth_ast(depth - 1))
    return st.one_of(leaf, sub.map(Neg),
                     st.builds(BinOp, st.sampled_from("+-*"), sub, sub),
                     st.builds(Call, st.sampled_from(SMOOTH), sub))


def sympy_of(e):
    return sympy.sympify(to_source(e).replace("^", "**"), locals={"e": sympy.E, "atan": sympy.atan})


@settings(max_examples=100, deadline=None)
@given(smooth_ast(3), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_derivative_matches_central_differences(e, x0, y0):
    f = compile_expr(e, ("x", "y"))
    x, y = sympy.symbols("x y")
    s = sympy_of(e)
    want_val = float(s.subs({x: x0, y: y0}))
    exact = float(sympy.diff(s, x).subs({x: x0, y: y0}))
    if not (math.isfinite(want_val) and math.isfinite(exact)) or abs(want_val) > 1e6 or abs(exact) > 1e6:
        return
    assert f(x0, y0) == pytest.approx(want_val, rel=1e-12, abs=1e-12)
    h = 1e-5
    fd = (f(x0 + h, y0) - f(x0 - h, y0)) / (2 * h)
    assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))
