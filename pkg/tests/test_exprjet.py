import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fmcheck.exprjet import (Bin, Call, DomainError, Neg, Num, ParseError, Param,
                             UnboundParameterError, UnboundVariableError, Var,
                             eval_jet, eval_value, finite_diff_oracle, parse,
                             principal, to_source)


def test_parse_shapes():
    e = parse("2/(u1-u2)^2")
    assert e == Bin("/", Num(2 + 0j), Bin("^", Bin("-", Var(1), Var(2)), Num(2 + 0j)))
    assert parse("pow(u1,2)") == parse("u1^2")
    assert parse("x*y") == Bin("*", Var(1), Var(2))


def test_parse_right_assoc_pow():
    assert parse("u1^2^3") == Bin("^", Var(1), Bin("^", Num(2 + 0j), Num(3 + 0j)))


def test_parse_unary_binds_before_pow():
    # the grammar puts unary inside the power base: -2^2 == (-2)^2
    assert eval_value(parse("-2^2"), []) == 4


def test_parse_errors():
    with pytest.raises(ParseError):
        parse("2*(u1")
    with pytest.raises(ParseError):
        parse("foo(u1)")
    with pytest.raises(ParseError):
        parse("sin(u1)")
    with pytest.raises(ParseError):
        parse("u1 @ u2")
    with pytest.raises(ParseError):
        parse("pow(u1)")


def test_eval_errors():
    with pytest.raises(UnboundVariableError):
        eval_value(parse("u3"), [1.0, 2.0])
    with pytest.raises(UnboundParameterError):
        eval_value(parse("a*u1"), [1.0])
    with pytest.raises(DomainError):
        eval_value(parse("1/(u1-1)"), [1.0])
    with pytest.raises(DomainError):
        eval_value(parse("ln(u1-2)"), [2.0])


def test_principal_sqrt_of_minus_one():
    assert eval_value(parse("sqrt(-1)"), []) == 1j


def test_imag_literal_and_arith():
    assert eval_value(parse("2i*2i"), []) == -4
    assert eval_value(parse("u1*u2 + ln(u3)"), [1.0, 2.0, np.e]) == pytest.approx(3.0)


def test_jet_polynomial_example():
    jet = eval_jet(parse("u1^2*u2"), [3.0, 2.0])
    assert jet.val == 18
    assert np.allclose(jet.grad, [12, 9])
    assert np.allclose(jet.hess, [[4, 6], [6, 0]])


def test_jet_sqrt_example():
    jet = eval_jet(parse("sqrt(u1)"), [4.0])
    assert jet.val == 2
    assert np.allclose(jet.grad, [0.25])
    assert np.allclose(jet.hess, [[-1 / 32]])


def test_fd_oracle_exp():
    grad, _ = finite_diff_oracle(parse("exp(u1)"), [0.0], step=1e-5)
    assert abs(grad[0] - 1.0) < 1e-9


def test_fd_oracle_cross_term():
    # second differences lose ~eps/h^2, so the 1e-8 claim needs h = 1e-4
    _, hess = finite_diff_oracle(parse("u1*u2"), [1.0, 1.0], step=1e-4)
    assert abs(hess[0, 1] - 1.0) < 1e-8


def test_jet_matches_fd_on_nasty_expr():
    src = "sqrt(u1)*ln(u2)+exp(u1*u2)/(u1-u2)^2 + u1^(3/2)"
    e = parse(src)
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = [0.5 + 0.5 * rng.random(), 1.3 + 0.5 * rng.random()]
        jet = eval_jet(e, p)
        g_fd, h_fd = finite_diff_oracle(e, p)
        assert np.all(np.abs(jet.grad - g_fd) <= 1e-6 * (1 + np.abs(jet.grad)))
        assert np.all(np.abs(jet.hess - h_fd) <= 1e-4 * (1 + np.abs(jet.hess)))


def test_principal_branch_plus_zero():
    # exact-real arguments must land on the upper side of the cut
    assert eval_value(parse("sqrt(-(b^2+1))"), [], {"b": 1.0}) == pytest.approx(1j * np.sqrt(2))
    assert principal(complex(-2.0, -0.0)).imag == 0.0
    assert np.sqrt(principal(-(2 + 0j))) == pytest.approx(1j * np.sqrt(2))


@given(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False))
@settings(max_examples=100, deadline=None)
def test_sqrt_squares_back(z):
    w = np.sqrt(principal(z))
    assert abs(w * w - z) <= 1e-12 * (1 + abs(z))


_leaf = st.one_of(
    st.integers(min_value=0, max_value=9).map(lambda v: Num(complex(v))),
    st.sampled_from([Var(1), Var(2), Var(3), Param("a"), Param("b")]),
)


def _exprs(depth):
    if depth == 0:
        return _leaf
    sub = _exprs(depth - 1)
    return st.one_of(
        _leaf,
        st.tuples(st.sampled_from("+-*/^"), sub, sub).map(lambda t: Bin(*t)),
        sub.map(Neg),
        st.tuples(st.sampled_from(["sqrt", "ln", "exp"]), sub).map(lambda t: Call(t[0], t[1])),
    )


@given(_exprs(4))
@settings(max_examples=200, deadline=None)
def test_print_parse_roundtrip(e):
    assert parse(to_source(e)) == e


@given(st.lists(st.integers(min_value=-3, max_value=3), min_size=5, max_size=5),
       st.integers(min_value=0, max_value=4))
@settings(max_examples=80, deadline=None)
def test_polynomial_jets_exact(coeffs, k):
    # jets of (c0 + c1 x + c2 x^2 + c3 x y + c4 y^2) * x^k against hand rules
    src = f"({coeffs[0]}+{coeffs[1]}*u1+{coeffs[2]}*u1^2+{coeffs[3]}*u1*u2+{coeffs[4]}*u2^2)*u1^{k}"
    x, y = 1.5, -2.0

    def val(x, y):
        return (coeffs[0] + coeffs[1] * x + coeffs[2] * x ** 2
                + coeffs[3] * x * y + coeffs[4] * y ** 2) * x ** k

    def dx(x, y):
        base = coeffs[1] + 2 * coeffs[2] * x + coeffs[3] * y
        return base * x ** k + (val(x, y) / x ** k if k == 0 else
                                (coeffs[0] + coeffs[1] * x + coeffs[2] * x ** 2
                                 + coeffs[3] * x * y + coeffs[4] * y ** 2)) * (k * x ** (k - 1) if k else 0)

    jet = eval_jet(parse(src), [x, y])
    assert abs(jet.val - val(x, y)) <= 1e-12 * (1 + abs(val(x, y)))
    assert abs(jet.grad[0] - dx(x, y)) <= 1e-12 * (1 + abs(dx(x, y)))


def test_expr_composition_operators():
    e = (Var(1) + 2) * Var(2) / Param("a")
    assert eval_value(parse(to_source(e)), [1.0, 3.0], {"a": 2.0}) == pytest.approx(4.5)


def test_family_metric_component_oracle():
    # leading metric component of the 3-coordinate family at the reference
    # point, with the arbitrary-function slots zeroed
    import fmcheck.catalog as cat
    ent = cat.entry("nonss3d")
    src = ent.spec.g[0][0]
    env = ent.spec.env({"b": 0.0})
    point = [0.0, 1.0, 1.0]
    jet = eval_jet(parse(src), point, env)
    g_fd, h_fd = finite_diff_oracle(parse(src), point, env)
    assert np.all(np.abs(jet.grad - g_fd) <= 1e-6 * (1 + np.abs(jet.grad)))
    # closed-form value at that point: (2/9)*(7/9) with unit constants
    assert abs(jet.val - 14 / 81) < 1e-12
