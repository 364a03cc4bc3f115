"""Geometric core: phase dynamics of Lagrangians on supermanifold charts.

Given an even Lagrangian L on the tangent bundle of a chart, this module
builds the differential dL into the cotangent bundle of the tangent bundle,
composes with the inverse of the canonical double-bundle diffeomorphism to
obtain the Tulczyjew differential, and reads off the phase-dynamics
generators, the Euler-Lagrange equations, and (when the system is regular
enough) an explicit normal form.  It also provides tangent lifts of vector
fields, the on-shell infinitesimal-symmetry test, linear velocity constraints,
and the induced coordinate changes on all four bundles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .grassmann import Parity
from .modelio import ModelFile
from .superexpr import (
    Symbol,
    SymbolTable,
    SuperExpr,
    SuperExprError,
    derivative,
    render_expr,
    substitute,
)


class MechError(ValueError):
    """Raised for ill-posed geometric inputs (bad charts, parities, fields)."""


# ---------------------------------------------------------------------------
# Lagrangian systems
# ---------------------------------------------------------------------------

@dataclass
class LagrangianSystem:
    """A chart together with an even, autonomous first-order Lagrangian."""

    table: SymbolTable
    coords: list  # [Symbol]
    lagrangian: SuperExpr
    params: dict = field(default_factory=dict)  # Symbol -> float

    def __post_init__(self):
        if self.lagrangian.parity() is not Parity.EVEN:
            raise MechError("lagrangian must be an even superfunction")
        allowed = set(self.coords)
        for c in self.coords:
            allowed.add(self.table.velocity(c))
        allowed.update(s for s in self.table.all_symbols() if s.kind == "param")
        stray = [s.name for s in self.lagrangian.free_symbols() if s not in allowed]
        if stray:
            raise MechError(
                "lagrangian may only use chart coordinates, their velocities "
                f"and parameters; found {', '.join(sorted(stray))}"
            )

    @classmethod
    def from_model(cls, model: ModelFile, param_overrides: dict | None = None):
        if model.lagrangian is None:
            raise MechError(f"model {model.name!r} declares no lagrangian")
        return cls(
            table=model.table,
            coords=list(model.table.coords),
            lagrangian=model.lagrangian,
            params=model.param_values(param_overrides),
        )

    def momentum_pullback(self, coord: Symbol) -> SuperExpr:
        """dL/d(velocity of coord), left convention for odd coordinates."""
        return derivative(self.lagrangian, self.table.velocity(coord))

    def force_pullback(self, coord: Symbol) -> SuperExpr:
        """dL/d(coord)."""
        return derivative(self.lagrangian, coord)


# ---------------------------------------------------------------------------
# dL, alpha, and the Tulczyjew differential
# ---------------------------------------------------------------------------

def lagrangian_differential(sys: LagrangianSystem) -> dict:
    """Pullbacks of the cotangent-of-tangent coordinates along dL.

    On the cotangent bundle of TM with coordinates (x, dx, q_x, dq_x), the
    fibre coordinate conjugate to x pulls back to dL/dx and the one conjugate
    to dx pulls back to dL/d(dx).
    """
    t = sys.table
    out = {}
    for c in sys.coords:
        out[c] = SuperExpr.sym(c)
        out[t.velocity(c)] = SuperExpr.sym(t.velocity(c))
        out[t.cot_momentum(c)] = sys.force_pullback(c)
        out[t.cot_momentum_velocity(c)] = sys.momentum_pullback(c)
    return out


def alpha_map(table: SymbolTable, coords=None) -> dict:
    """Pullback along alpha: cotangent-of-tangent symbols -> tangent-of-cotangent.

    In adapted coordinates alpha(x, p, dx, dp) = (x, dx, dp, p), i.e. q_x
    pulls back to dp_x and dq_x pulls back to p_x.
    """
    coords = coords if coords is not None else table.coords
    out = {}
    for c in coords:
        out[c] = c
        out[table.velocity(c)] = table.velocity(c)
        out[table.cot_momentum(c)] = table.momentum_velocity(c)
        out[table.cot_momentum_velocity(c)] = table.momentum(c)
    return out


def alpha_inv(table: SymbolTable, coords=None) -> dict:
    """Pullback along alpha^{-1}: tangent-of-cotangent symbols -> cotangent-of-tangent."""
    coords = coords if coords is not None else table.coords
    out = {}
    for c in coords:
        out[c] = c
        out[table.velocity(c)] = table.velocity(c)
        out[table.momentum(c)] = table.cot_momentum_velocity(c)
        out[table.momentum_velocity(c)] = table.cot_momentum(c)
    return out

def tulczyjew(sys: LagrangianSystem) -> dict:
    """Pullbacks of tangent-of-cotangent coordinates along alpha^{-1} . dL.

    Composing with the inverse of alpha sends (x, p, dx, dp) to
    (x, dL/d(dx), dx, dL/dx)."""
    dl = lagrangian_differential(sys)
    ainv = alpha_inv(sys.table, sys.coords)
    return {u: dl[ainv[u]] for u in ainv}


@dataclass
class PhaseDynamics:
    """The generator set cutting the image of the Tulczyjew differential."""

    system: LagrangianSystem
    generators: list  # [(name, SuperExpr over (x, p, dx, dp))]

    def substituted_on_image(self) -> list:
        """Generators with the Tulczyjew pullbacks substituted; all must vanish."""
        tl = tulczyjew(self.system)
        sub = {s: e for s, e in tl.items()}
        return [(name, substitute(g, sub)) for name, g in self.generators]


def phase_generators(sys: LagrangianSystem) -> PhaseDynamics:
    """phi_a = p_a - dL/d(dx^a) and phihat_b = dp_b - dL/dx^b."""
    t = sys.table
    gens = []
    for c in sys.coords:
        phi = SuperExpr.sym(t.momentum(c)) - sys.momentum_pullback(c)
        if phi.parity() not in (c.parity, Parity.EVEN) and not phi.is_zero():
            raise MechError(f"generator for {c.name} has wrong parity")
        gens.append((f"phi_{c.name}", phi))
    for c in sys.coords:
        phihat = SuperExpr.sym(t.momentum_velocity(c)) - sys.force_pullback(c)
        gens.append((f"phihat_{c.name}", phihat))
    return PhaseDynamics(sys, gens)


# ---------------------------------------------------------------------------
# total time derivative and Euler-Lagrange equations
# ---------------------------------------------------------------------------

def total_derivative(expr: SuperExpr, table: SymbolTable) -> SuperExpr:
    """Formal d/dt on normal forms: each coordinate-like symbol maps to its dot.

    The dotted factor multiplies from the left, consistent with the left
    derivative convention; no time symbol is introduced.
    """
    out = SuperExpr.zero()
    symbols = sorted(expr.free_symbols(), key=lambda s: s.index)
    for s in symbols:
        if s.kind in ("param", "const"):
            continue
        if s.kind not in ("coord", "velocity", "momentum"):
            raise MechError(f"cannot take a total derivative through {s.name} ({s.kind})")
        out = out + SuperExpr.sym(table.dot(s)) * derivative(expr, s)
    return out


def euler_lagrange(sys: LagrangianSystem) -> list:
    """[(coordinate, residual expression over (x, dx, ddx))] with the
    convention residual = d/dt(dL/d(dx^a)) - dL/dx^a."""
    t = sys.table
    eqs = []
    for c in sys.coords:
        expr = total_derivative(sys.momentum_pullback(c), t) - sys.force_pullback(c)
        eqs.append((c, expr))
    return eqs


def display_equation(expr: SuperExpr, table: SymbolTable) -> SuperExpr:
    """Flip the overall sign so the highest-derivative term enters positively."""
    best = None
    for coeff, factors, odd in expr.terms:
        rank = -1
        for b, _ in factors:
            if isinstance(b, Symbol) and b.kind in ("accel", "velocity"):
                rank = max(rank, 1 if b.kind == "velocity" else 2)
        for s in odd:
            if s.kind in ("accel", "velocity"):
                rank = max(rank, 1 if s.kind == "velocity" else 2)
        if rank > 0 and (best is None or rank > best[0]):
            best = (rank, coeff)
    if best is not None and best[1] < 0:
        return -expr
    return expr


# ---------------------------------------------------------------------------
# normal form
# ---------------------------------------------------------------------------

@dataclass
class NormalForm:
    """Explicit right-hand sides for the highest derivative of each coordinate."""

    orders: dict  # coord Symbol -> 1 or 2
    rhs: dict  # coord Symbol -> SuperExpr over (x, dx of second-order coords)

    def velocity_substitution(self, table: SymbolTable) -> dict:
        """Map replacing first-order velocities by their right-hand sides."""
        return {
            table.velocity(c): e for c, e in self.rhs.items() if self.orders[c] == 1
        }


@dataclass
class ImplicitReport:
    """Returned when no explicit normal form exists; failure is a value."""

    reason: str
    unsolved: list  # coordinate names
    equations: list  # [(coord, expr)]

    def __str__(self):
        names = ", ".join(self.unsolved) if self.unsolved else "(none)"
        return f"implicit dynamics: {self.reason}; unsolved coordinates: {names}"


def _split_linear(expr: SuperExpr, unknowns: set):
    """Write expr as sum of unknown * coefficient plus residual.

    Returns ({unknown: coefficient SuperExpr}, residual SuperExpr) or None when
    a term is nonlinear in the unknowns."""
    coeffs: dict = {}
    resid = []
    for coeff, factors, odd in expr.terms:
        hits = []
        for b, e in factors:
            if isinstance(b, Symbol) and b in unknowns:
                hits.append(("even", b, e))
            elif not isinstance(b, Symbol):
                if unknowns & b.arg.free_symbols():
                    return None
        for s in odd:
            if s in unknowns:
                hits.append(("odd", s, 1))
        if not hits:
            resid.append((coeff, factors, odd))
            continue
        if len(hits) > 1 or hits[0][2] != 1:
            return None
        kind, u, _ = hits[0]
        if kind == "even":
            new_factors = tuple((b, e) for b, e in factors if b != u)
            cterm = SuperExpr([(coeff, new_factors, odd)])
        else:
            pos = odd.index(u)
            sign = -1.0 if pos & 1 else 1.0
            cterm = SuperExpr([(coeff * sign, factors, odd[:pos] + odd[pos + 1:])])
        coeffs[u] = coeffs.get(u, SuperExpr.zero()) + cterm
    return coeffs, SuperExpr(resid)


def _invert_coefficient(c: SuperExpr) -> SuperExpr | None:
    """Reciprocal of an even coefficient whose odd-free head is one monomial.

    A nilpotent tail (e.g. 1 + psi_p psi_m) is fine: the body is then a unit
    wherever the head functions are nonzero, matching the rule that a
    Grassmann-valued coefficient counts as invertible iff its body is."""
    try:
        return c.invert()
    except SuperExprError:
        return None


def normal_form(sys: LagrangianSystem, equations=None, constrained=None):
    """Solve the Euler-Lagrange system for the highest derivatives.

    Equations with a single unknown and a formally invertible coefficient are
    solved directly and eliminated from the rest; whatever stays coupled must
    have constant real coefficients and goes through one matrix solve.
    Anything else is reported as implicit rather than raised.
    """
    t = sys.table
    if equations is None:
        if constrained is not None:
            equations = constrained_euler_lagrange(sys, constrained)
        else:
            equations = euler_lagrange(sys)

    exprs = [e for _, e in equations]
    orders: dict = {}
    for c in sys.coords:
        acc, vel = t.accel(c), t.velocity(c)
        have_acc = any(acc in e.free_symbols() for e in exprs)
        have_vel = any(vel in e.free_symbols() for e in exprs)
        if have_acc:
            orders[c] = 2
        elif have_vel:
            orders[c] = 1
        else:
            orders[c] = 0
    dead = [c.name for c in sys.coords if orders[c] == 0]
    if dead:
        return ImplicitReport(
            "no equation determines a derivative of these coordinates",
            dead, equations)

    unknown_of = {c: (t.accel(c) if orders[c] == 2 else t.velocity(c)) for c in sys.coords}
    by_coord = {u: c for c, u in unknown_of.items()}
    unsolved = set(unknown_of.values())
    rhs: dict = {}

    # elimination rounds: solve every single-unknown equation with an
    # invertible coefficient, substitute, repeat
    remaining = [(c, e) for c, e in equations]
    progress = True
    while remaining and unsolved and progress:
        progress = False
        nxt = []
        for c, e in remaining:
            sub = {unknown_of[cc]: rr for cc, rr in rhs.items()
                   if unknown_of[cc] in e.free_symbols()}
            if sub:
                e = substitute(e, sub)
            split = _split_linear(e, unsolved)
            if split is None:
                return ImplicitReport(
                    "equations are nonlinear in the highest derivatives",
                    [c.name], equations)
            coeffs, resid = split
            if not coeffs:
                if resid.is_zero():
                    progress = True  # redundant equation, drop it
                    continue
                return ImplicitReport(
                    "inconsistent equation with no solvable derivative",
                    [c.name], equations)
            if len(coeffs) == 1:
                u, cf = next(iter(coeffs.items()))
                inv = _invert_coefficient(cf)
                if inv is not None:
                    rhs[by_coord[u]] = -(resid * inv)
                    unsolved.discard(u)
                    progress = True
                    continue
            nxt.append((c, e))
        remaining = nxt

    if remaining and unsolved:
        report = _solve_constant_block(remaining, unsolved, by_coord, rhs, equations)
        if report is not None:
            return report
    elif remaining:
        return ImplicitReport(
            "leftover equations after all derivatives were solved",
            [c.name for c, _ in remaining], equations)

    missing = [by_coord[u].name for u in unsolved]
    if missing:
        return ImplicitReport(
            "no equation determines a derivative of these coordinates",
            missing, equations)
    return _resolve_first_order(sys, orders, rhs, equations)


def _solve_constant_block(remaining, unsolved, by_coord, rhs, equations):
    """Final coupled solve over real constant coefficients; None on success."""
    import numpy as np

    n = len(unsolved)
    unknown_list = sorted(unsolved, key=lambda s: s.index)
    col = {u: j for j, u in enumerate(unknown_list)}
    if len(remaining) != n:
        return ImplicitReport(
            "equation count does not match the remaining unknowns",
            [by_coord[u].name for u in unknown_list], equations)
    mat = np.zeros((n, n))
    resids = []
    for i, (c, e) in enumerate(remaining):
        coeffs, resid = _split_linear(e, unsolved)
        for u, cf in coeffs.items():
            v = cf.as_number()
            if v is None:
                return ImplicitReport(
                    "coupled highest-derivative coefficients are not constant",
                    [c.name], equations)
            mat[i, col[u]] = v
        resids.append(resid)
    if abs(np.linalg.det(mat)) < 1e-12:
        return ImplicitReport(
            "highest-derivative coefficient matrix is singular "
            "(body not invertible)",
            [by_coord[u].name for u in unknown_list], equations)
    inv = np.linalg.inv(mat)
    for j, u in enumerate(unknown_list):
        acc = SuperExpr.zero()
        for i in range(n):
            if inv[j, i] != 0.0:
                acc = acc + resids[i].scale(-inv[j, i])
        rhs[by_coord[u]] = acc
        unsolved.discard(u)
    return None


def _resolve_first_order(sys, orders, rhs, equations):
    """Eliminate first-order velocities from right-hand sides."""
    t = sys.table
    first = {t.velocity(c): c for c in orders if orders[c] == 1}
    for _ in range(len(orders) + 1):
        dirty = False
        for c, e in list(rhs.items()):
            bad = [s for s in e.free_symbols() if s in first]
            if bad:
                rhs[c] = substitute(e, {s: rhs[first[s]] for s in bad})
                dirty = True
        if not dirty:
            break
    else:
        return ImplicitReport("cyclic first-order velocity dependence",
                              [c.name for c in orders], equations)
    for c, e in rhs.items():
        stray = [s.name for s in e.free_symbols() if s.kind == "accel"
                 or (s.kind == "velocity" and orders.get(_base_coord(sys, s), 2) == 1)]
        if stray:
            return ImplicitReport(
                f"right-hand side for {c.name} still references {', '.join(stray)}",
                [c.name], equations)
    return NormalForm(orders={c: o for c, o in orders.items()}, rhs=rhs)


def _base_coord(sys, s: Symbol):
    return sys.table[s.base]


# ---------------------------------------------------------------------------
# linear velocity constraints
# ---------------------------------------------------------------------------

@dataclass
class ConstraintSpec:
    """Velocities forced to zero, defining a subbundle of the tangent bundle."""

    velocities: list  # [Symbol of kind velocity]

    @classmethod
    def from_names(cls, table: SymbolTable, names) -> "ConstraintSpec":
        vels = []
        for nm in names:
            sym = table.get(nm)
            if sym is None or sym.kind != "velocity":
                raise MechError(f"cannot constrain {nm!r}: not a declared velocity")
            vels.append(sym)
        return cls(vels)

    def coords(self, table: SymbolTable) -> list:
        return [table[v.base] for v in self.velocities]


def constrained_tulczyjew(sys: LagrangianSystem, spec: ConstraintSpec) -> dict:
    """Pullbacks along the constrained Tulczyjew differential.

    The momenta (and momentum velocities) dual to constrained directions are
    projected away, the constrained velocities are set to zero in every
    surviving pullback, and the velocity pullback of a constrained coordinate
    is the zero function.
    """
    t = sys.table
    dropped = set(spec.coords(t))
    zero_vel = {v: SuperExpr.zero() for v in spec.velocities}
    tl = tulczyjew(sys)
    out = {}
    for c in sys.coords:
        out[c] = SuperExpr.sym(c)
        if c in dropped:
            out[t.velocity(c)] = SuperExpr.zero()
        else:
            out[t.velocity(c)] = SuperExpr.sym(t.velocity(c))
        if c not in dropped:
            out[t.momentum(c)] = substitute(tl[t.momentum(c)], zero_vel)
            out[t.momentum_velocity(c)] = substitute(tl[t.momentum_velocity(c)], zero_vel)
    return out


def constrained_euler_lagrange(sys: LagrangianSystem, spec: ConstraintSpec) -> list:
    """Equations of motion of the constrained phase dynamics.

    Surviving coordinates obey d/dt(dL/d(dx^a))|_E - (dL/dx^a)|_E = 0 with the
    constrained velocities (and their derivatives) set to zero; each
    constrained coordinate contributes its defining equation dx^c = 0.
    """
    t = sys.table
    dropped = set(spec.coords(t))
    kill = {v: SuperExpr.zero() for v in spec.velocities}
    kill.update({t.accel(c): SuperExpr.zero() for c in dropped})
    eqs = []
    for c in sys.coords:
        if c in dropped:
            eqs.append((c, SuperExpr.sym(t.velocity(c))))
            continue
        mom = substitute(sys.momentum_pullback(c), kill)
        force = substitute(sys.force_pullback(c), kill)
        expr = substitute(total_derivative(mom, t), kill) - force
        eqs.append((c, expr))
    return eqs


def constrained_generators(sys: LagrangianSystem, spec: ConstraintSpec) -> PhaseDynamics:
    """Generators of the constrained phase dynamics on the reduced bundle."""
    t = sys.table
    dropped = set(spec.coords(t))
    kill = {v: SuperExpr.zero() for v in spec.velocities}
    gens = []
    for c in sys.coords:
        if c in dropped:
            continue
        phi = SuperExpr.sym(t.momentum(c)) - substitute(sys.momentum_pullback(c), kill)
        gens.append((f"phi_{c.name}", phi))
    for c in sys.coords:
        if c in dropped:
            continue
        phihat = SuperExpr.sym(t.momentum_velocity(c)) - substitute(
            sys.force_pullback(c), kill)
        gens.append((f"phihat_{c.name}", phihat))
    return PhaseDynamics(sys, gens)


# ---------------------------------------------------------------------------
# vector fields, tangent lifts, symmetries
# ---------------------------------------------------------------------------

@dataclass
class SuperVectorField:
    """Homogeneous vector field over an explicit list of chart symbols."""

    table: SymbolTable
    chart: tuple  # coordinates of the space the field lives on
    components: dict  # Symbol -> SuperExpr
    parity: Parity

    def __post_init__(self):
        chart_set = set(self.chart)
        for s, comp in self.components.items():
            if s not in chart_set:
                raise MechError(f"component for {s.name} is not a chart symbol")
            p = comp.parity()
            if comp.is_zero():
                continue
            if p is None or p is not self.parity + s.parity:
                raise MechError(
                    f"component for {s.name} must have parity "
                    f"{(self.parity + s.parity).name.lower()} for a "
                    f"{self.parity.name.lower()} field; got {render_expr(comp)}"
                )

    @classmethod
    def from_components(cls, table: SymbolTable, chart, components: dict):
        """Infer the field parity from the nonzero components."""
        parities = set()
        for s, comp in components.items():
            p = comp.parity()
            if comp.is_zero():
                continue
            if p is None:
                raise MechError(
                    f"component for {s.name} is inhomogeneous; split the "
                    "field into homogeneous parts first")
            parities.add(p + s.parity)
        if len(parities) > 1:
            raise MechError(
                "field is inhomogeneous; split it into homogeneous parts first")
        parity = parities.pop() if parities else Parity.EVEN
        return cls(table, tuple(chart), dict(components), parity)

    @classmethod
    def from_model(cls, model: ModelFile, name: str):
        """Field declared in a model file, living on the phase space T*M."""
        if name not in model.fields:
            raise MechError(f"model {model.name!r} declares no field {name!r}")
        t = model.table
        chart = list(t.coords) + [t.momentum(c) for c in t.coords]
        comps = {t[nm]: e for nm, e in model.fields[name].items()}
        return cls.from_components(t, chart, comps)

    def component(self, s: Symbol) -> SuperExpr:
        return self.components.get(s, SuperExpr.zero())

    def apply(self, f: SuperExpr) -> SuperExpr:
        """Derivation action: sum of component * left partial derivative."""
        out = SuperExpr.zero()
        for s in self.chart:
            comp = self.components.get(s)
            if comp is None or comp.is_zero():
                continue
            out = out + comp * derivative(f, s)
        return out

    def bracket(self, other: "SuperVectorField") -> "SuperVectorField":
        """Graded Lie bracket [X, Y] = X Y - (-1)^{|X||Y|} Y X."""
        if self.chart != other.chart:
            raise MechError("bracket requires fields on the same chart")
        sign = -1.0 if (self.parity is Parity.ODD and other.parity is Parity.ODD) else 1.0
        comps = {}
        for s in self.chart:
            comps[s] = self.apply(other.component(s)) - other.apply(
                self.component(s)).scale(sign)
        return SuperVectorField(self.table, self.chart, comps, self.parity + other.parity)


def tangent_lift(X: SuperVectorField) -> SuperVectorField:
    """Lift to the tangent bundle of the field's space.

    Base components are unchanged; the component along a dotted symbol is the
    formal total derivative of the corresponding base component, so the lift
    has the same parity as the field."""
    t = X.table
    chart = tuple(X.chart) + tuple(t.dot(s) for s in X.chart)
    comps = dict(X.components)
    for s in X.chart:
        comps[t.dot(s)] = total_derivative(X.component(s), t)
    return SuperVectorField(t, chart, comps, X.parity)


@dataclass
class SymmetryReport:
    """Outcome of the on-shell infinitesimal-symmetry test."""

    passed: bool
    residuals: dict  # generator name -> SuperExpr after full on-shell reduction
    onshell_free: dict  # generator name -> SuperExpr after momentum substitution only
    reduced: bool  # False when no normal form was available for the last step

    def failing(self) -> list:
        return [n for n, e in self.residuals.items() if not e.is_zero()]


def check_symmetry(X: SuperVectorField, sys: LagrangianSystem,
                   nf: NormalForm | ImplicitReport | None = None,
                   spec: ConstraintSpec | None = None) -> SymmetryReport:
    """Test whether the tangent lift of X preserves the phase-dynamics ideal.

    Applies the lifted field to every generator, then reduces on shell by
    substituting the Tulczyjew pullbacks (momenta first) followed by the
    normal-form highest derivatives; the field is a symmetry iff every
    residual reduces to the zero normal form.
    """
    lifted = tangent_lift(X)
    dyn = phase_generators(sys) if spec is None else constrained_generators(sys, spec)
    t = sys.table
    if spec is None:
        tl = tulczyjew(sys)
    else:
        tl = constrained_tulczyjew(sys, spec)
    momentum_sub = {
        s: e for s, e in tl.items() if s.kind in ("momentum", "momentum_velocity")
    }
    if spec is not None:
        momentum_sub.update({v: SuperExpr.zero() for v in spec.velocities})
    if nf is None:
        nf = normal_form(sys, constrained=spec)
    vel_sub = nf.velocity_substitution(t) if isinstance(nf, NormalForm) else {}

    residuals = {}
    onshell_free = {}
    for name, gen in dyn.generators:
        r = lifted.apply(gen)
        r = substitute(r, momentum_sub)
        onshell_free[name] = r
        if vel_sub:
            for _ in range(len(sys.coords) + 1):
                r2 = substitute(r, vel_sub)
                if r2 == r:
                    break
                r = r2
        residuals[name] = r
    passed = all(e.is_zero() for e in residuals.values())
    return SymmetryReport(
        passed=passed,
        residuals=residuals,
        onshell_free=onshell_free,
        reduced=isinstance(nf, NormalForm),
    )


# ---------------------------------------------------------------------------
# induced chart changes
# ---------------------------------------------------------------------------

class ChartError(MechError):
    """The requested coordinate change is outside the supported class."""


@dataclass
class ChartChange:
    """Induced maps of a base coordinate change on all four bundles.

    Every map sends a primed (new-chart) symbol to its expression in the old
    chart.  The momentum laws need the inverse Jacobian, which is computed by
    a terminating Neumann series; this restricts supported changes to those
    whose Jacobian is the identity plus a nilpotent matrix (unit triangular
    body), which covers the shipped polynomial changes.
    """

    old_table: SymbolTable
    new_table: SymbolTable
    base_map: dict  # new coord -> expr(old)
    tangent_map: dict  # + velocities
    cotangent_map: dict  # coords + momenta on the cotangent bundle
    tt_map: dict  # (x, p, dx, dp) on the tangent of the cotangent bundle
    cot_tt_map: dict  # (x, dx, q, dq) on the cotangent of the tangent bundle


def _matmul(A, B):
    n = len(A)
    return [
        [
            sum((A[i][k] * B[k][j] for k in range(n)), SuperExpr.zero())
            for j in range(n)
        ]
        for i in range(n)
    ]


def _matsub_identity(J):
    n = len(J)
    return [
        [J[i][j] - (SuperExpr.num(1.0) if i == j else SuperExpr.zero()) for j in range(n)]
        for i in range(n)
    ]


def _mat_is_zero(A):
    return all(e.is_zero() for row in A for e in row)


def induced_chart_change(table: SymbolTable, new_decls, assignment: dict) -> ChartChange:
    """Build the induced transformations for x' = F(x).

    ``new_decls`` lists (name, parity) for the new chart in an order matching
    the old coordinates; ``assignment`` maps each new name to its expression
    in the old chart.  Velocities transform like differentials, momenta like
    derivatives, and the second-level laws carry the second-derivative
    correction term.
    """
    old = list(table.coords)
    n = len(old)
    if len(new_decls) != n:
        raise ChartError("new chart must have the same number of coordinates")
    new_table = SymbolTable()
    new_coords = []
    for (nm, parity), oc in zip(new_decls, old):
        if parity is not oc.parity:
            raise ChartError(
                f"parity of new coordinate {nm!r} must match position of {oc.name!r}")
        new_coords.append(new_table.add_coord(nm, parity))
    for p in table.all_symbols():
        if p.kind == "param" and p.name not in new_table:
            new_table.add_param(p.name)

    F = []
    for nm, _ in new_decls:
        if nm not in assignment:
            raise ChartError(f"missing assignment for new coordinate {nm!r}")
        e = assignment[nm]
        F.append(e)
    for i, e in enumerate(F):
        p = e.parity()
        if not e.is_zero() and p is not new_coords[i].parity:
            raise ChartError(
                f"assignment for {new_coords[i].name} must be "
                f"{new_coords[i].parity.name.lower()}")

    # forward Jacobian J[b][a'] = d F^{a'} / d x^b (left derivatives)
    J = [[derivative(F[a], old[b]) for a in range(n)] for b in range(n)]

    # inverse via terminating Neumann series; J must be 1 + nilpotent
    N = _matsub_identity(J)
    G = [[SuperExpr.num(1.0) if i == j else SuperExpr.zero() for j in range(n)]
         for i in range(n)]
    power = [row[:] for row in N]
    sign = -1.0
    for _ in range(2 * n + 2 * sum(1 for c in old if c.parity is Parity.ODD) + 2):
        if _mat_is_zero(power):
            break
        for i in range(n):
            for j in range(n):
                G[i][j] = G[i][j] + power[i][j].scale(sign)
        power = _matmul(power, N)
        sign = -sign
    else:
        raise ChartError(
            "Jacobian is not unit-triangular plus nilpotent; this change is "
            "outside the supported class")
    ident = [[SuperExpr.num(1.0) if i == j else SuperExpr.zero() for j in range(n)]
             for i in range(n)]
    if not (_mat_is_zero(_matsub_identity(_matmul(J, G)))
            and _mat_is_zero(_matsub_identity(_matmul(G, J)))):
        raise ChartError("computed inverse Jacobian failed verification")

    # second derivatives of the inverse change, expressed in the old chart:
    # H[e'][d'][f] = d^2 x^f / dx^{e'} dx^{d'}
    H = [[[
        sum((G[e][b] * derivative(G[d][f], old[b]) for b in range(n)),
            SuperExpr.zero())
        for f in range(n)]
        for d in range(n)]
        for e in range(n)]

    base_map = {new_coords[a]: F[a] for a in range(n)}

    tangent_map = dict(base_map)
    for a in range(n):
        acc = SuperExpr.zero()
        for b in range(n):
            acc = acc + SuperExpr.sym(table.velocity(old[b])) * J[b][a]
        tangent_map[new_table.velocity(new_coords[a])] = acc

    cotangent_map = dict(base_map)
    for a in range(n):
        acc = SuperExpr.zero()
        for b in range(n):
            acc = acc + G[a][b] * SuperExpr.sym(table.momentum(old[b]))
        cotangent_map[new_table.momentum(new_coords[a])] = acc

    def _correction(e_idx_free, fiber_sym):
        """sum_c,e',f  dx^c J[c][e'] H[e'][d'][f] fiber_f  for fixed d'."""
        acc = SuperExpr.zero()
        for c in range(n):
            vc = SuperExpr.sym(table.velocity(old[c]))
            for e in range(n):
                je = J[c][e]
                if je.is_zero():
                    continue
                for f in range(n):
                    h = H[e][e_idx_free][f]
                    if h.is_zero():
                        continue
                    acc = acc + vc * je * h * SuperExpr.sym(fiber_sym(old[f]))
        return acc

    tt_map = dict(tangent_map)
    for d in range(n):
        acc = SuperExpr.zero()
        for a in range(n):
            acc = acc + G[d][a] * SuperExpr.sym(table.momentum_velocity(old[a]))
        tt_map[new_table.momentum_velocity(new_coords[d])] = acc
    for d in range(n):
        acc = SuperExpr.zero()
        for a in range(n):
            acc = acc + G[d][a] * SuperExpr.sym(table.momentum(old[a]))
        acc = acc + _correction(d, table.momentum_velocity)
        tt_map[new_table.momentum(new_coords[d])] = acc

    cot_tt_map = dict(tangent_map)
    for c in range(n):
        acc = SuperExpr.zero()
        for a in range(n):
            acc = acc + G[c][a] * SuperExpr.sym(table.cot_momentum(old[a]))
        cot_tt_map[new_table.cot_momentum(new_coords[c])] = acc
    for d in range(n):
        acc = SuperExpr.zero()
        for a in range(n):
            acc = acc + G[d][a] * SuperExpr.sym(table.cot_momentum_velocity(old[a]))
        acc = acc + _correction(d, table.cot_momentum)
        cot_tt_map[new_table.cot_momentum_velocity(new_coords[d])] = acc

    return ChartChange(
        old_table=table,
        new_table=new_table,
        base_map=base_map,
        tangent_map=tangent_map,
        cotangent_map=cotangent_map,
        tt_map=tt_map,
        cot_tt_map=cot_tt_map,
    )
