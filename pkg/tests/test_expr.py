from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stickysim.errors import ExpressionError
from stickysim.expr import (Bin, Call, Neg, Num, Var, differentiate, evaluate, parse_expression,
                            parse_node, simplify, to_text)


def test_constant_zero():
    e = parse_expression("0")
    assert e.is_constant()
    assert e.evaluate(3.0) == 0.0


def test_gaussian_bump_at_zero():
    assert parse_expression("0.5*exp(-x^2)").evaluate(0.0) == 0.5


def test_division_by_zero_is_located():
    e = parse_expression("1/x")
    with pytest.raises(ExpressionError) as info:
        e.evaluate(0.0)
    assert info.value.position == 1


def test_precedence_and_associativity():
    assert parse_expression("2^3^2").evaluate(0.0) == 2.0 ** 9
    assert parse_expression("-2^2").evaluate(0.0) == -4.0
    assert parse_expression("1-2-3").evaluate(0.0) == -4.0
    assert parse_expression("8/4/2").evaluate(0.0) == 1.0
    assert parse_expression("1+2*3").evaluate(0.0) == 7.0
    assert parse_expression("(1+2)*3").evaluate(0.0) == 9.0


@pytest.mark.parametrize("text,pos", [("1 + ", 4), ("2 * (x", 6), ("foo(x)", 0), ("x $ 1", 2),
                                      ("", 0), ("1 2", 2)])
def test_syntax_errors_carry_offsets(text, pos):
    with pytest.raises(ExpressionError) as info:
        parse_expression(text)
    assert info.value.position == pos


def test_unknown_identifier():
    with pytest.raises(ExpressionError, match="unknown identifier"):
        parse_expression("y + 1")


def test_piecewise_blocks():
    e = parse_expression("x | 0: 3*x | 2: 6")
    assert e.breakpoints == (0.0, 2.0)
    assert e.evaluate(-1.0) == -1.0
    assert e.evaluate(0.0) == 0.0  # right-continuous
    assert e.evaluate(1.0) == 3.0
    assert e.evaluate(5.0) == 6.0
    with pytest.raises(ExpressionError, match="strictly increasing"):
        parse_expression("x | 1: x | 0: x")


def test_functions():
    vals = {"exp(1)": math.e, "log(1)": 0.0, "sqrt(4)": 2.0, "sin(0)": 0.0, "cos(0)": 1.0,
            "abs(-3)": 3.0}
    for text, v in vals.items():
        assert parse_expression(text).evaluate(0.0) == pytest.approx(v)
    with pytest.raises(ExpressionError):
        parse_expression("log(x)").evaluate(0.0)


def test_vectorised_evaluation():
    x = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(parse_expression("x^2 + 1").evaluate(x), x ** 2 + 1)


def test_symbolic_derivative():
    d = differentiate(parse_node("x^3 + sin(x)"))
    for x in (-1.3, 0.0, 0.7):
        assert evaluate(d, x) == pytest.approx(3 * x * x + math.cos(x))
    assert to_text(simplify(differentiate(parse_node("2*x")))) == "2"


leaves = st.one_of(st.builds(Var),
                   st.builds(Num, st.floats(0, 1e6, allow_nan=False, allow_infinity=False)))


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(Bin, st.sampled_from("+-*/^"), children, children),
        st.builds(Call, st.sampled_from(["exp", "log", "sqrt", "sin", "cos", "abs"]), children),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_print_parse_roundtrip(tree):
    text = to_text(tree)
    assert parse_node(text) == tree
    assert to_text(parse_node(text)) == text
