import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vibramech.expressions import (
    Const,
    EvalDomainError,
    Mul,
    ParseError,
    Pow,
    UnknownVariableError,
    Var,
    compile_expr,
    differentiate,
    evaluate,
    parse_expression,
    simplify,
)

VARS = ["q1", "q2", "u1", "m", "r"]


def central_diff(e, var, point, h=1e-6):
    hi = dict(point, **{var: point[var] + h})
    lo = dict(point, **{var: point[var] - h})
    return (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)


def test_parse_product():
    e = parse_expression("m*r^2", VARS)
    assert e == Mul((Var("m"), Pow(Var("r"), 2)))


def test_parse_function_product():
    e = parse_expression("sin(u1)*q1", VARS)
    assert evaluate(e, {"u1": 0.3, "q1": 2.0}) == pytest.approx(math.sin(0.3) * 2.0)


def test_parse_error_position():
    with pytest.raises(ParseError) as err:
        parse_expression("q1 +", VARS)
    assert err.value.position == 4


def test_unknown_identifier_rejected():
    with pytest.raises(UnknownVariableError):
        parse_expression("q1 + bogus", VARS)


def test_non_integer_exponent_rejected():
    with pytest.raises(ParseError):
        parse_expression("q1^2.5", VARS)


def test_roundtrip_structural_identity():
    texts = [
        "m*r^2",
        "sin(u1)*q1",
        "q1 + q2*u1 - 3/(q1 + 1)",
        "exp(q1)*ln(q2 + 2) - sqrt(u1 + 5)^3",
        "-q1^2 + (q2 - u1)*(q2 + u1)",
        "1/m",
    ]
    for text in texts:
        e = parse_expression(text, VARS + ["q2", "u1"])
        again = parse_expression(str(e), VARS + ["q2", "u1"])
        assert again == e, text


def test_diff_power_rule():
    e = parse_expression("m*q1^2", VARS)
    d = differentiate(e, "q1")
    assert d == parse_expression("2*m*q1", VARS)


def test_diff_independent_variable():
    assert differentiate(parse_expression("sin(u1)", VARS), "q1") == Const(0.0)


def test_diff_product_exp_matches_fd():
    # d/dq1 [q1 e^{q1}] at q1=1 equals 2e; oracle = central finite difference
    e = parse_expression("q1*exp(q1)", VARS)
    d = differentiate(e, "q1")
    point = {"q1": 1.0}
    fd = central_diff(e, "q1", point)
    exact = evaluate(d, point)
    assert abs(exact - fd) / abs(fd) <= 1e-6
    assert exact == pytest.approx(2 * math.e, rel=1e-12)


def test_evaluate_examples():
    assert evaluate(parse_expression("m*r^2", VARS), {"m": 1, "r": 2}) == 4.0
    assert evaluate(parse_expression("sqrt(2)*3", VARS), {}) == pytest.approx(
        math.sqrt(2) * 3, rel=1e-15
    )
    with pytest.raises(EvalDomainError):
        evaluate(parse_expression("ln(q1)", VARS), {"q1": 0.0})
    with pytest.raises(EvalDomainError):
        evaluate(parse_expression("sqrt(q1)", VARS), {"q1": -1.0})
    with pytest.raises(EvalDomainError):
        evaluate(parse_expression("1/q1", VARS), {"q1": 0.0})
    with pytest.raises(UnknownVariableError):
        evaluate(parse_expression("q1", VARS), {})


def test_simplify_normal_form_sorts_commutative():
    a = parse_expression("q1*m + u1", VARS)
    b = parse_expression("u1 + m*q1", VARS)
    assert a == b


def test_negative_exponent():
    e = parse_expression("q1^-2", VARS)
    assert evaluate(e, {"q1": 2.0}) == 0.25
    d = differentiate(e, "q1")
    assert evaluate(d, {"q1": 2.0}) == pytest.approx(-2 * 2.0 ** -3)


_expr_texts = st.sampled_from([
    "q1^3 - 2*q2",
    "sin(q1*q2) + cos(u1)",
    "exp(q1/2)*q2",
    "sqrt(q1^2 + q2^2 + 1)",
    "ln(q1^2 + 3)",
    "(q1 + q2)^2/(u1^2 + 1)",
    "q1*q2*u1 - q1/(q2 + 4)",
])


@settings(max_examples=60, deadline=None)
@given(
    text=_expr_texts,
    q1=st.floats(0.2, 2.0),
    q2=st.floats(0.2, 2.0),
    u1=st.floats(-1.5, 1.5),
    var=st.sampled_from(["q1", "q2", "u1"]),
)
def test_derivative_matches_finite_difference(text, q1, q2, u1, var):
    e = parse_expression(text, ["q1", "q2", "u1"])
    d = differentiate(e, var)
    point = {"q1": q1, "q2": q2, "u1": u1}
    fd = central_diff(e, var, point)
    exact = evaluate(d, point)
    scale = max(1.0, abs(fd))
    assert abs(exact - fd) / scale <= 1e-5


@settings(max_examples=40, deadline=None)
@given(
    text=_expr_texts,
    q1=st.floats(0.2, 2.0),
    q2=st.floats(0.2, 2.0),
    u1=st.floats(-1.5, 1.5),
)
def test_compiled_agrees_with_tree_walk(text, q1, q2, u1):
    e = parse_expression(text, ["q1", "q2", "u1"])
    f = compile_expr(e, ["q1", "q2", "u1"])
    ref = evaluate(e, {"q1": q1, "q2": q2, "u1": u1})
    assert f(q1, q2, u1) == pytest.approx(ref, rel=1e-14, abs=1e-14)


def test_simplify_is_idempotent():
    e = parse_expression("0.5*(2*m*q1) + 0*u1 + q1^1", VARS)
    assert simplify(e) == e
    assert e == parse_expression("m*q1 + q1", VARS)
