"""Command-line surface: reproducible runs with file outputs.

Exit codes: 0 success / verification pass, 1 verification failure or
divergence, 2 usage, parse, or model errors.
"""

from __future__ import annotations

import argparse
import sys

from .grassmann import GrassmannError, qcap
from .mech import (
    ConstraintSpec,
    ImplicitReport,
    LagrangianSystem,
    MechError,
    SuperVectorField,
    check_symmetry,
    constrained_euler_lagrange,
    constrained_generators,
    constrained_tulczyjew,
    display_equation,
    euler_lagrange,
    normal_form,
    phase_generators,
    tulczyjew,
)
from .modelio import (
    ModelSyntaxError,
    load_model,
    parse_element,
    parse_expr_text,
    parse_reparam,
    read_trajectory,
    write_trajectory,
    trajectory_to_csv,
)
from .scurves import (
    IntegrationDiverged,
    Reparametrisation,
    SCurveError,
    check_constant,
    expand_system,
    integrate,
    numeric_symmetry_check,
    system_for,
    verify_solution,
)
from .superexpr import SuperExprError, render_expr


class UsageError(Exception):
    pass


def _load(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise UsageError(f"model file not found: {path}")
    except ModelSyntaxError as exc:
        raise UsageError(f"{path}: {exc}")


def _constraint(model, args):
    if not getattr(args, "constrained", False):
        return None
    if not model.constraint:
        raise UsageError(f"model {model.name!r} declares no constraint block")
    return ConstraintSpec.from_names(model.table, model.constraint)


def _parse_inits(model, q, pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--init expects name=value, got {item!r}")
        name, _, text = item.partition("=")
        name = name.strip()
        if name not in model.table:
            raise UsageError(f"--init: unknown symbol {name!r}")
        try:
            out[name] = parse_element(text.strip(), q)
        except (ModelSyntaxError, GrassmannError) as exc:
            raise UsageError(f"--init {name}: {exc}")
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_tulczyjew(args) -> int:
    model = _load(args.model)
    sys_ = LagrangianSystem.from_model(model)
    spec = _constraint(model, args)
    t = model.table
    lines = [f"model {model.name}"]
    if spec is None:
        tl = tulczyjew(sys_)
        gens = phase_generators(sys_).generators
        eqs = euler_lagrange(sys_)
        surviving = sys_.coords
    else:
        tl = constrained_tulczyjew(sys_, spec)
        gens = constrained_generators(sys_, spec).generators
        eqs = constrained_euler_lagrange(sys_, spec)
        dropped = set(spec.coords(t))
        surviving = [c for c in sys_.coords if c not in dropped]
    lines.append("tulczyjew:")
    for c in surviving:
        lines.append(f"  {t.momentum(c).name} = {render_expr(tl[t.momentum(c)])}")
    for c in surviving:
        lines.append(
            f"  {t.momentum_velocity(c).name} = "
            f"{render_expr(tl[t.momentum_velocity(c)])}")
    lines.append("generators:")
    for name, g in gens:
        lines.append(f"  {name} = {render_expr(g)}")
    lines.append("euler-lagrange:")
    for _, e in eqs:
        lines.append(f"  {render_expr(display_equation(e, t))} = 0")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_el(args) -> int:
    model = _load(args.model)
    sys_ = LagrangianSystem.from_model(model)
    spec = _constraint(model, args)
    t = model.table
    eqs = (euler_lagrange(sys_) if spec is None
           else constrained_euler_lagrange(sys_, spec))
    lines = [f"model {model.name}", "euler-lagrange:"]
    for _, e in eqs:
        lines.append(f"  {render_expr(display_equation(e, t))} = 0")
    nf = normal_form(sys_, constrained=spec)
    if isinstance(nf, ImplicitReport):
        lines.append(f"normal form: {nf}")
    else:
        lines.append("normal form:")
        for c in sys_.coords:
            head = t.accel(c).name if nf.orders[c] == 2 else t.velocity(c).name
            lines.append(f"  {head} = {render_expr(nf.rhs[c])}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_solve(args) -> int:
    model = _load(args.model)
    q = args.q
    if q > qcap():
        raise UsageError(f"--q {q} exceeds the generator cap {qcap()}")
    spec = _constraint(model, args)
    if args.field:
        X = SuperVectorField.from_model(model, args.field)
        csys = expand_system(X, q, params=model.param_values())
        sys_ = LagrangianSystem.from_model(model) if model.lagrangian else None
    else:
        sys_ = LagrangianSystem.from_model(model)
        try:
            csys = system_for(sys_, q, spec=spec)
        except SCurveError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        X = None
    init = _parse_inits(model, q, args.init)
    out_path = args.out or f"{model.name}.traj.{args.format if args.format != 'text' else 'csv'}"
    try:
        traj = integrate(csys, init, args.t0, args.t1, args.dt, backend=args.backend)
    except IntegrationDiverged as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        write_trajectory(exc.trajectory.with_meta(model=model.model_hash()),
                         out_path, None if args.format == "text" else args.format)
        return 1
    traj = traj.with_meta(model=model.model_hash())
    if args.format == "text":
        sys.stdout.write(trajectory_to_csv(traj))
    else:
        write_trajectory(traj, out_path, args.format)
        print(f"wrote {out_path} ({traj.n_samples} samples, q={q})")
    ok = True
    if X is not None:
        rep = verify_solution(None, traj, args.tol, diff_order=4, vector_field=X,
                              params=model.param_values())
    else:
        rep = verify_solution(sys_, traj, args.tol, diff_order=4, spec=spec)
    print(rep)
    ok = ok and rep.passed
    for text in args.constant or []:
        if sys_ is None:
            raise UsageError(
                "--constant needs momentum pullbacks and therefore a "
                "model with a lagrangian")
        f = parse_expr_text(text, model.table,
                            {"coord", "velocity", "momentum", "param"})
        crep = check_constant(sys_, f, traj, args.tol, spec=spec)
        print(f"constant {text}: {crep}")
        ok = ok and crep.passed
    return 0 if ok else 1


def cmd_verify(args) -> int:
    model = _load(args.model)
    traj = read_trajectory(args.trajectory, q=args.q)
    spec = _constraint(model, args)
    if args.field:
        X = SuperVectorField.from_model(model, args.field)
        rep = verify_solution(None, traj, args.tol, diff_order=args.diff_order,
                              vector_field=X, params=model.param_values())
    else:
        sys_ = LagrangianSystem.from_model(model)
        rep = verify_solution(sys_, traj, args.tol, diff_order=args.diff_order,
                              spec=spec)
    print(rep)
    return 0 if rep.passed else 1


def cmd_symcheck(args) -> int:
    model = _load(args.model)
    sys_ = LagrangianSystem.from_model(model)
    spec = _constraint(model, args)
    X = SuperVectorField.from_model(model, args.field)
    rep = check_symmetry(X, sys_, spec=spec)
    if rep.passed:
        print(f"PASS: {args.field} is an infinitesimal symmetry "
              "(all generators reduce to 0 on shell)")
    else:
        print(f"FAIL: nonzero on-shell residuals for {args.field}:")
        for name, r in rep.residuals.items():
            if not r.is_zero():
                print(f"  L_X {name} = {render_expr(r)}")
    ok = rep.passed
    if args.traj:
        traj = read_trajectory(args.traj)
        nrep = numeric_symmetry_check(X, sys_, traj, args.tol, spec=spec)
        print(f"numeric (advisory): {nrep}")
        if not rep.reduced:
            ok = nrep.passed
    return 0 if ok else 1


def cmd_reparam(args) -> int:
    traj = read_trajectory(args.trajectory)
    with open(args.map, "r", encoding="utf-8") as fh:
        source_q, target_q, images = parse_reparam(fh.read(), args.target_q)
    if source_q != traj.q:
        raise UsageError(
            f"map covers z1..z{source_q} but the trajectory has q={traj.q}")
    rep = Reparametrisation(source_q, target_q, images)
    out = args.out or args.trajectory.replace(".", f".q{target_q}.", 1)
    from .scurves import reparametrise

    write_trajectory(reparametrise(traj, rep), out, args.format)
    print(f"wrote {out} (q={target_q})")
    return 0


def cmd_constants(args) -> int:
    model = _load(args.model)
    sys_ = LagrangianSystem.from_model(model)
    spec = _constraint(model, args)
    traj = read_trajectory(args.trajectory)
    ok = True
    for text in args.expr:
        f = parse_expr_text(text, model.table,
                            {"coord", "velocity", "momentum", "param"})
        rep = check_constant(sys_, f, traj, args.tol, spec=spec)
        print(f"{text}: {rep}")
        ok = ok and rep.passed
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="smech",
        description="Mechanics on supermanifolds: Tulczyjew phase dynamics, "
                    "Euler-Lagrange equations, Grassmann-valued trajectories.")
    sub = p.add_subparsers(dest="command", required=True)

    def common_run(sp):
        sp.add_argument("--q", type=int, default=0,
                        help="number of Grassmann generators of the parametrisation")
        sp.add_argument("--t0", type=float, default=0.0)
        sp.add_argument("--t1", type=float, default=10.0)
        sp.add_argument("--dt", type=float, default=1e-3)
        sp.add_argument("--tol", type=float, default=1e-6)
        sp.add_argument("--init", action="append", metavar="SYM=ELEM",
                        help="initial value, e.g. psi_p=z1 or x=1.5+0.25*z1^z2")
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", choices=["csv", "json", "text"], default="csv")

    sp = sub.add_parser("tulczyjew", help="dump Tulczyjew pullbacks, generators, EL")
    sp.add_argument("model")
    sp.add_argument("--constrained", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_tulczyjew)

    sp = sub.add_parser("el", help="dump Euler-Lagrange equations and normal form")
    sp.add_argument("model")
    sp.add_argument("--constrained", action="store_true")
    sp.set_defaults(func=cmd_el)

    sp = sub.add_parser("solve", help="integrate and verify a model")
    sp.add_argument("model")
    common_run(sp)
    sp.add_argument("--field", default=None,
                    help="integrate this declared vector field instead of the lagrangian")
    sp.add_argument("--constrained", action="store_true")
    sp.add_argument("--constant", action="append", metavar="EXPR",
                    help="also report the drift of this phase-space function")
    sp.add_argument("--backend", choices=["auto", "c", "py"], default=None)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="verify a trajectory file against a model")
    sp.add_argument("model")
    sp.add_argument("trajectory")
    sp.add_argument("--q", type=int, default=None)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--diff-order", type=int, choices=[2, 4], default=2)
    sp.add_argument("--constrained", action="store_true")
    sp.add_argument("--field", default=None)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("symcheck", help="test a declared field for phase-dynamics symmetry")
    sp.add_argument("model")
    sp.add_argument("--field", required=True)
    sp.add_argument("--traj", default=None,
                    help="also evaluate residuals numerically along this trajectory")
    sp.add_argument("--tol", type=float, default=1e-7)
    sp.add_argument("--constrained", action="store_true")
    sp.set_defaults(func=cmd_symcheck)

    sp = sub.add_parser("reparam", help="apply a change of parametrisation to a trajectory")
    sp.add_argument("trajectory")
    sp.add_argument("--map", required=True)
    sp.add_argument("--target-q", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=["csv", "json"], default=None)
    sp.set_defaults(func=cmd_reparam)

    sp = sub.add_parser("constants", help="check constants of motion along a trajectory")
    sp.add_argument("model")
    sp.add_argument("trajectory")
    sp.add_argument("--expr", action="append", required=True)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--constrained", action="store_true")
    sp.set_defaults(func=cmd_constants)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelSyntaxError, SuperExprError, MechError, SCurveError,
            GrassmannError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
