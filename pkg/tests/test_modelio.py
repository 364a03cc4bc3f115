import random

import numpy as np
import pytest

from smech.grassmann import GrassmannElement, Parity
from smech.modelio import (
    ModelSyntaxError,
    SchemaError,
    parse_element,
    parse_expr_text,
    parse_model,
    parse_reparam,
    read_trajectory,
    render_element,
    render_model,
    trajectory_to_csv,
    write_trajectory,
)
from smech.superexpr import render_expr
from smech.trajectory import Trajectory, mask_label, parse_mask_label

DIRAC_TEXT = """
model dirac
coords { psi_p: odd  psi_m: odd }
params { m = 1.0 }
lagrangian: (1/2)*(psi_p*dpsi_p + psi_m*dpsi_m) - m*psi_p*psi_m
"""


def test_parse_dirac_structure():
    m = parse_model(DIRAC_TEXT)
    assert m.name == "dirac"
    assert [(n, p.name) for n, p in m.coord_decls] == [
        ("psi_p", "ODD"), ("psi_m", "ODD")]
    assert m.params == {"m": 1.0}
    assert m.lagrangian.parity() is Parity.EVEN


def test_empty_coordinate_block_is_error():
    with pytest.raises(ModelSyntaxError):
        parse_model("model bad coords { } lagrangian: 1")


def test_odd_lagrangian_reports_offending_term():
    with pytest.raises(ModelSyntaxError) as exc:
        parse_model("model bad coords { psi_p: odd } lagrangian: psi_p")
    assert "psi_p" in str(exc.value) and "odd" in str(exc.value)


def test_undeclared_symbol_has_position():
    with pytest.raises(ModelSyntaxError) as exc:
        parse_model("model bad coords { x: even }\nlagrangian: dx + y")
    assert exc.value.line == 2 and exc.value.col > 0


def test_every_parse_error_carries_a_span():
    bad_inputs = [
        "model",
        "model m coords { x }",
        "model m coords { x: strange }",
        "model m coords { x: even } lagrangian: (dx",
        "model m coords { x: even } lagrangian: dx ^ x",
        "model m coords { x: even } constraint { x = 0 }",
        "model m coords { x: even } lagrangian: sin(p_x)",
        "model m coords { x: even } unknownblock { }",
        "model m coords { x: even } lagrangian: dx / 0",
    ]
    for text in bad_inputs:
        with pytest.raises(ModelSyntaxError) as exc:
            parse_model(text)
        assert exc.value.line >= 1 and exc.value.col >= 1, text


def test_momenta_are_not_lagrangian_symbols():
    with pytest.raises(ModelSyntaxError):
        parse_model("model m coords { x: even } lagrangian: p_x*dx")


def test_render_parse_round_trip_fixed_models():
    m = parse_model(DIRAC_TEXT)
    assert parse_model(render_model(m)) == m


def test_round_trip_random_models():
    rng = random.Random(7)
    for _ in range(25):
        n_even = rng.randint(0, 2)
        n_odd = rng.randint(1, 3)
        coords = [f"x{i}: even" for i in range(n_even)]
        coords += [f"th{i}: odd" for i in range(n_odd)]
        rng.shuffle(coords)
        terms = []
        for i in range(n_odd):
            terms.append(f"(1/2)*th{i}*dth{i}")
        for i in range(n_even):
            c = rng.choice(["1", "2", "0.5"])
            terms.append(f"{c}*dx{i}^2")
            if rng.random() < 0.5:
                terms.append(f"sin(x{i})*th0*dth0")
        text = (
            f"model rnd{rng.randint(0, 999)}\n"
            f"coords {{ {'  '.join(coords)} }}\n"
            f"params {{ g = {rng.choice(['1.0', '0.25', '3'])} }}\n"
            f"lagrangian: {' + '.join(terms)}\n"
        )
        m = parse_model(text)
        m2 = parse_model(render_model(m))
        assert m2 == m
        assert parse_model(render_model(m2)) == m2


def test_formal_function_suffix_parsing():
    m = parse_model(
        "model f coords { x: even } lagrangian: U(x)*U1(x) + U2(x)*dx^2")
    s = render_expr(m.lagrangian)
    assert "U1(x)" in s and "U2(x)" in s


def test_declared_symbol_cannot_be_called():
    with pytest.raises(ModelSyntaxError):
        parse_model("model f coords { x: even } lagrangian: x(dx)")


# --- Grassmann element text -------------------------------------------------

def test_element_round_trip():
    e = parse_element("1 + 0.5*z1^z3 - z2", 3)
    assert e.terms == {0: 1.0, 5: 0.5, 2: -1.0}
    assert parse_element(render_element(e), 3) == e
    assert render_element(GrassmannElement.zero(2)) == "0"
    assert parse_element("0", 3).is_zero()


def test_element_rejects_out_of_range_generator():
    with pytest.raises(ModelSyntaxError):
        parse_element("z4", 3)


def test_element_rejects_repeated_generator():
    with pytest.raises(ModelSyntaxError):
        parse_element("z1^z1", 3)


def test_reparam_parsing():
    sq, tq, images = parse_reparam("reparam { z1 = z1, z2 = z2, z3 = 0 }")
    assert (sq, tq) == (3, 2)
    assert images[3].is_zero()
    sq, tq, images = parse_reparam("reparam { z1 = z2, z2 = z1 + 0.5*z1^z2^z3 }")
    assert (sq, tq) == (2, 3)


def test_reparam_requires_contiguous_sources():
    with pytest.raises(ModelSyntaxError):
        parse_reparam("reparam { z1 = z1, z3 = 0 }")


# --- trajectory files --------------------------------------------------------

def _toy_traj():
    colspec = (("x", 0), ("x", 3), ("psi", 1), ("psi", 2))
    times = np.array([0.0, 0.1, 0.2])
    data = np.arange(12, dtype=float).reshape(3, 4) / 7.0
    return Trajectory(2, colspec, times, data, {"dt": 0.1})


def test_mask_labels():
    assert mask_label(0) == "1"
    assert mask_label(5) == "z1z3"
    assert parse_mask_label("z1z3") == 5
    assert parse_mask_label("1") == 0


def test_csv_round_trip(tmp_path):
    traj = _toy_traj()
    p = tmp_path / "t.csv"
    write_trajectory(traj, p)
    back = read_trajectory(p)
    assert back.q == 2
    assert back.colspec == traj.colspec
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.data, traj.data)


def test_csv_has_header_and_rows():
    text = trajectory_to_csv(_toy_traj())
    lines = text.strip().split("\n")
    assert lines[0] == "t,x.1,x.z1z2,psi.z1,psi.z2"
    assert len(lines) == 4


def test_json_round_trip(tmp_path):
    traj = _toy_traj()
    p = tmp_path / "t.json"
    write_trajectory(traj, p)
    back = read_trajectory(p)
    assert back.q == 2
    assert back.meta["dt"] == 0.1
    assert np.array_equal(back.data, traj.data)


def test_csv_is_bit_stable(tmp_path):
    traj = _toy_traj()
    a = trajectory_to_csv(traj)
    b = trajectory_to_csv(traj)
    assert a == b
    # 17 significant digits survive the round trip exactly
    p = tmp_path / "t.csv"
    write_trajectory(traj, p)
    assert np.array_equal(read_trajectory(p).data, traj.data)


def test_schema_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,notat\n1,2\n")
    with pytest.raises(SchemaError):
        read_trajectory(p)
    p2 = tmp_path / "empty.csv"
    p2.write_text("")
    with pytest.raises(SchemaError):
        read_trajectory(p2)


def test_expr_text_parser(dirac_model):
    t = dirac_model.table
    e = parse_expr_text("psi_p*psi_m", t)
    assert e.parity() is Parity.EVEN
    with pytest.raises(ModelSyntaxError):
        parse_expr_text("psi_p*", t)
    with pytest.raises(ModelSyntaxError):
        parse_expr_text("nope", t)


def test_expression_render_parse_identity():
    # parse(render(e)) == e on normal forms, for random expressions
    import _props

    rng = random.Random(23)
    table = _props.make_table()
    allowed = {"coord", "velocity", "param"}
    for _ in range(60):
        e = _props.random_expr(rng, table, depth=1)
        back = parse_expr_text(render_expr(e), table, allowed)
        assert back == e, render_expr(e)
    # negative powers and formal derivative orders survive too
    from smech.superexpr import SuperExpr, apply_func

    x = table["x0"]
    e = apply_func("sin", 0, SuperExpr.sym(x)) ** -2 + apply_func(
        "U", 3, SuperExpr.sym(x))
    assert parse_expr_text(render_expr(e), table, allowed) == e
