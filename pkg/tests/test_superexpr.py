import pytest

import _props
from smech.grassmann import GrassmannElement, Parity
from smech.superexpr import (
    EvaluationError,
    ParityError,
    SuperExpr,
    SymbolTable,
    apply_func,
    deven,
    dodd_left,
    eval_at,
    is_even_lagrangian,
    parity_of_expr,
    render_expr,
    substitute,
    sx_sin,
)

SX = SuperExpr


@pytest.fixture
def chart():
    st = SymbolTable()
    st.add_coord("x", Parity.EVEN)
    st.add_coord("psi_p", Parity.ODD)
    st.add_coord("psi_m", Parity.ODD)
    st.add_param("k")
    return st


def test_deven_kinetic_term(chart):
    dx = chart["dx"]
    L = SX.num(0.5) * SX.sym(dx) ** 2
    assert deven(L, dx) == SX.sym(dx)


def test_deven_through_formal_potential(chart):
    # d/dx of U(x) psi_p psi_m is U'(x) psi_p psi_m
    x, pp, pm = chart["x"], chart["psi_p"], chart["psi_m"]
    e = apply_func("U", 0, SX.sym(x)) * SX.sym(pp) * SX.sym(pm)
    expect = apply_func("U", 1, SX.sym(x)) * SX.sym(pp) * SX.sym(pm)
    assert deven(e, x) == expect


def test_deven_vanishes_without_symbol(chart):
    e = SX.sym(chart["psi_p"]) * SX.sym(chart["psi_m"])
    assert deven(e, chart["x"]).is_zero()


def test_dodd_left_convention(chart):
    # the momentum of psi_p in (1/2) psi_p dpsi_p is -(1/2) psi_p
    pp, dpp = chart["psi_p"], chart["dpsi_p"]
    L = SX.num(0.5) * SX.sym(pp) * SX.sym(dpp)
    assert dodd_left(L, dpp) == SX.sym(pp).scale(-0.5)
    # while in (1/2) dpsi_p psi_p it is +(1/2) psi_p
    L2 = SX.num(0.5) * SX.sym(dpp) * SX.sym(pp)
    assert dodd_left(L2, dpp) == SX.sym(pp).scale(0.5)


def test_dodd_single_symbol(chart):
    pp = chart["psi_p"]
    assert dodd_left(SX.sym(pp), pp) == SX.num(1.0)


def test_dodd_requires_odd(chart):
    with pytest.raises(ParityError):
        dodd_left(SX.sym(chart["x"]), chart["x"])
    with pytest.raises(ParityError):
        deven(SX.sym(chart["psi_p"]), chart["psi_p"])


def test_substitute_cancellation(chart):
    p, dx = chart["p_x"], chart["dx"]
    e = SX.sym(p) - SX.sym(dx)
    assert substitute(e, {p: SX.sym(dx)}).is_zero()


def test_substitute_nilpotency(chart):
    pp, pm = chart["psi_p"], chart["psi_m"]
    e = SX.sym(pp) * SX.sym(pm)
    assert substitute(e, {pp: SX.sym(pm)}).is_zero()


def test_substitute_parity_guard(chart):
    pp, x = chart["psi_p"], chart["x"]
    with pytest.raises(ParityError):
        substitute(SX.sym(pp), {pp: SX.sym(x)})
    # odd image built from an even prefactor is fine: psi_p -> x * psi_m
    out = substitute(SX.sym(x) * SX.sym(pp), {x: SX.sym(x) ** 2,
                                              pp: SX.sym(x) * SX.sym(pm_ := chart["psi_m"])})
    assert out == SX.sym(x) ** 3 * SX.sym(pm_)


def test_eval_odd_monomial(chart):
    pp, pm = chart["psi_p"], chart["psi_m"]
    z1 = GrassmannElement.generator(1, 2)
    z2 = GrassmannElement.generator(2, 2)
    v = eval_at(SX.sym(pp) * SX.sym(pm), {pp: z1, pm: z2}, 2)
    assert v.terms == {3: 1.0}


def test_eval_even_scale(chart):
    x, pp = chart["x"], chart["psi_p"]
    z1 = GrassmannElement.generator(1, 3)
    v = eval_at(SX.sym(x) * SX.sym(pp), {x: 2.0, pp: z1}, 3)
    assert v.terms == {1: 2.0}


def test_eval_linear_potential_hand_expansion(chart):
    # U(x) = k x with k = 1, x = 3, psi_p = z1, psi_m = z2: hand expansion
    # gives exactly 3 z1 z2
    x, pp, pm, k = chart["x"], chart["psi_p"], chart["psi_m"], chart["k"]
    e = SX.sym(k) * SX.sym(x) * SX.sym(pp) * SX.sym(pm)
    v = eval_at(e, {k: 1.0, x: 3.0,
                    pp: GrassmannElement.generator(1, 2),
                    pm: GrassmannElement.generator(2, 2)}, 2)
    assert v.terms == {3: 3.0}


def test_eval_missing_binding(chart):
    with pytest.raises(EvaluationError):
        eval_at(SX.sym(chart["x"]), {}, 2)


def test_eval_rejects_wrong_parity_binding(chart):
    z1 = GrassmannElement.generator(1, 2)
    with pytest.raises(ParityError):
        eval_at(SX.sym(chart["x"]), {chart["x"]: z1}, 2)


def test_eval_rejects_inhomogeneous_odd_binding(chart):
    mixed = GrassmannElement(2, {0: 1.0, 1: 1.0})  # 1 + z1
    with pytest.raises(ParityError):
        eval_at(SX.sym(chart["psi_p"]), {chart["psi_p"]: mixed}, 2)


def test_eval_formal_function_refuses(chart):
    e = apply_func("U", 0, SX.sym(chart["x"]))
    with pytest.raises(EvaluationError):
        eval_at(e, {chart["x"]: 1.0}, 2)


def test_parity_queries(chart):
    dx, pp, dpp = chart["dx"], chart["psi_p"], chart["dpsi_p"]
    L = SX.num(0.5) * SX.sym(dx) ** 2 + SX.sym(dpp) * SX.sym(pp)
    assert parity_of_expr(L) is Parity.EVEN
    assert is_even_lagrangian(L)
    assert parity_of_expr(SX.sym(pp)) is Parity.ODD
    assert parity_of_expr(SX.sym(dx) + SX.sym(pp)) is None
    assert parity_of_expr(SX.zero()) is Parity.EVEN


def test_function_argument_must_be_even(chart):
    with pytest.raises(ParityError):
        sx_sin(SX.sym(chart["psi_p"]))


def test_taylor_expansion_truncates(chart):
    # sin(x + psi_p psi_m) = sin x + cos x psi_p psi_m exactly
    x, pp, pm = chart["x"], chart["psi_p"], chart["psi_m"]
    e = sx_sin(SX.sym(x) + SX.sym(pp) * SX.sym(pm))
    expect = sx_sin(SX.sym(x)) + apply_func("cos", 0, SX.sym(x)) * SX.sym(pp) * SX.sym(pm)
    assert e == expect


def test_numeric_constant_folding():
    assert sx_sin(SX.num(0.0)) == SX.num(0.0)
    assert apply_func("exp", 0, SX.num(0.0)) == SX.num(1.0)


def test_render_is_deterministic(chart):
    e = SX.sym(chart["dx"]) * SX.sym(chart["dx"]) + SX.sym(chart["psi_p"]) * SX.sym(chart["psi_m"]) * 3.0
    assert render_expr(e) == render_expr(e)
    assert render_expr(SX.zero()) == "0"


# --- randomized property suites --------------------------------------------

def test_signed_leibniz_rule():
    assert _props.superexpr_leibniz(60) == 60


def test_odd_derivative_squares_to_zero():
    assert _props.superexpr_dodd_squared(60) == 60


def test_even_and_odd_derivatives_commute():
    assert _props.superexpr_derivatives_commute(60) == 60


def test_eval_is_algebra_morphism():
    assert _props.superexpr_eval_morphism(60) == 60


def test_deven_matches_finite_differences():
    assert _props.superexpr_deven_finite_difference(30) == 30
