from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from jetcons.expr import ExpLin, Expr, exp, ln
from jetcons.parser import ParseError, SymbolTable, parse_expr

ST = SymbolTable(ivars=("t", "x"), deps=("u",),
                 params=("a", "b", "c", "p", "q"))


def rt(s):
    e = parse_expr(s, ST)
    again = parse_expr(str(e), ST)
    assert again == e
    return e


def test_jet_shorthand():
    assert rt("u_xx") == Expr.jet("u", (("x", 2),))
    assert rt("u_tx") == Expr.jet("u", (("t", 1), ("x", 1)))
    assert parse_expr("diff(u, x, 2)", ST) == parse_expr("u_xx", ST)
    assert parse_expr("diff(u, t, 1, x, 2)", ST) == \
        parse_expr("u_txx", ST)


def test_diff_of_composite():
    e = parse_expr("diff(u^q, x)", ST)
    q = ExpLin.param("q")
    u = Expr.jet("u")
    expect = Expr.param("q") * u.pow(q - ExpLin.of(1)) * \
        Expr.jet("u", (("x", 1),))
    assert e == expect


def test_precedence_and_fractions():
    assert rt("3/2*u_x") == Expr.number(F(3, 2)) * Expr.jet("u", (("x", 1),))
    assert rt("a*u^p + b*q*u^(q-1)*u_xx") is not None
    assert rt("-u^2") == -(Expr.jet("u") ** 2)
    assert parse_expr("2^3", ST) == Expr.number(8)


def test_parenthesized_exponent():
    e = parse_expr("u^(p+1)/(p+1)", ST)
    assert not e.is_zero


def test_elementary():
    assert rt("exp(2*x) - ln(t)") == exp(2 * Expr.var("x")) - ln(Expr.var("t"))


def test_compound_power():
    e = rt("(x^2 + a)^(-1/2)")
    assert e * e == 1 / (Expr.var("x") ** 2 + Expr.param("a"))


def test_errors_carry_position():
    with pytest.raises(ParseError) as err:
        parse_expr("u + nosuch", ST)
    assert "nosuch" in str(err.value)
    with pytest.raises(ParseError):
        parse_expr("u +", ST)
    with pytest.raises(ParseError):
        parse_expr("diff(u, q)", ST)  # not an independent variable


@settings(max_examples=80, deadline=None)
@given(st.recursive(
    st.sampled_from(["u", "u_x", "u_xx", "x", "t", "a", "2", "q"]),
    lambda s: st.one_of(
        st.tuples(s, s).map(lambda ab: f"({ab[0]} + {ab[1]})"),
        st.tuples(s, s).map(lambda ab: f"({ab[0]} * {ab[1]})"),
        s.map(lambda z: f"(-{z})"),
        s.map(lambda z: f"({z}^2)"),
    ),
    max_leaves=6,
))
def test_roundtrip_random(src):
    e = parse_expr(src, ST)
    assert parse_expr(str(e), ST) == e
