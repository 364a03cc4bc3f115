"""S-curve realization: component expansion over the Grassmann basis,
fixed-step integration, verification against the phase dynamics,
reparametrisation, and constants of motion.

Expanding every coordinate of a curve over the basis monomials of the algebra
with q generators (keeping only subsets matching the coordinate's parity)
turns an explicit normal form into a closed system of real ODEs: products
truncate by nilpotency, so the right-hand sides are polynomial in the odd
component variables.  Integration is classic fourth-order Runge-Kutta with a
fixed step, which keeps runs deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .grassmann import GrassmannElement, Parity
from .kernel import TapeBuilder
from .mech import (
    ConstraintSpec,
    ImplicitReport,
    LagrangianSystem,
    NormalForm,
    SuperVectorField,
    check_symmetry,
    constrained_tulczyjew,
    normal_form,
    tulczyjew,
)
from .superexpr import (
    Symbol,
    SuperExpr,
    deven,
    eval_at,
    substitute,
)
from .trajectory import Trajectory, parity_masks


class SCurveError(ValueError):
    """Raised for invalid initial data, schemas, or reparametrisations."""


class IntegrationDiverged(RuntimeError):
    """Integration hit a non-finite state; carries the last good time and data."""

    def __init__(self, time: float, trajectory: Trajectory):
        super().__init__(f"integration diverged; last good time t={time:g}")
        self.time = time
        self.trajectory = trajectory


# ---------------------------------------------------------------------------
# S-points
# ---------------------------------------------------------------------------

@dataclass
class SPoint:
    """One point of the chart with algebra-valued, parity-matched coordinates."""

    q: int
    values: dict  # Symbol -> GrassmannElement

    def __post_init__(self):
        for s, v in self.values.items():
            if v.q != self.q:
                raise SCurveError(f"value for {s.name} lives in q={v.q}, expected {self.q}")
            p = v.parity()
            if not v.is_zero() and p is not s.parity:
                raise SCurveError(
                    f"value for {s.name} must be {s.parity.name.lower()}, got "
                    f"{'inhomogeneous' if p is None else p.name.lower()}")

    def get(self, s: Symbol) -> GrassmannElement:
        return self.values.get(s, GrassmannElement.zero(self.q))


# ---------------------------------------------------------------------------
# component systems
# ---------------------------------------------------------------------------

@dataclass
class ComponentSystem:
    """Real first-order ODE system induced on the basis components."""

    table: object
    q: int
    coords: list  # chart order
    orders: dict  # coord -> 1 | 2
    rhs: dict  # coord -> SuperExpr over (coords, velocities of 2nd-order coords)
    params: dict  # Symbol -> float
    layout: list = field(init=False)  # [(Symbol, mask)] state layout
    slot: dict = field(init=False)
    tape: object = field(init=False)

    def __post_init__(self):
        layout = []
        for c in self.coords:
            for m in parity_masks(self.q, c.parity.value):
                layout.append((c, m))
        for c in self.coords:
            if self.orders[c] == 2:
                v = self.table.velocity(c)
                for m in parity_masks(self.q, c.parity.value):
                    layout.append((v, m))
        self.layout = layout
        self.slot = {key: i for i, key in enumerate(layout)}
        self.tape = self._compile()

    @property
    def n_state(self) -> int:
        return len(self.layout)

    def _inputs(self):
        inputs: dict = {}
        for (s, m), i in self.slot.items():
            inputs.setdefault(s, []).append((m, i))
        # coordinates whose parity has no subsets at this q (odd coords at
        # q = 0, say) are identically zero: give them empty gathers
        for c in self.coords:
            inputs.setdefault(c, [])
            if self.orders[c] == 2:
                inputs.setdefault(self.table.velocity(c), [])
        return inputs

    def _compile(self):
        builder = TapeBuilder(
            self.q, self._inputs(), self.params, self.n_state, self.n_state)
        for c in self.coords:
            masks = parity_masks(self.q, c.parity.value)
            if self.orders[c] == 2:
                vel = self.table.velocity(c)
                reg = builder.compile_expr(SuperExpr.sym(vel))
                builder.scatter(reg, [(m, self.slot[(c, m)]) for m in masks])
                builder.free(reg)
                reg = builder.compile_expr(self.rhs[c])
                builder.scatter(reg, [(m, self.slot[(vel, m)]) for m in masks])
                builder.free(reg)
            else:
                reg = builder.compile_expr(self.rhs[c])
                builder.scatter(reg, [(m, self.slot[(c, m)]) for m in masks])
                builder.free(reg)
        return builder.build()

    # --- state construction -------------------------------------------

    def state_from_init(self, init: dict) -> np.ndarray:
        """Build the flat state vector from symbol -> element bindings.

        Keys may be Symbols or names; velocities of first-order coordinates
        cannot be prescribed (the dynamics fixes them)."""
        y = np.zeros(self.n_state)
        point: dict = {}
        for key, val in init.items():
            s = self.table[key] if isinstance(key, str) else key
            if isinstance(val, (int, float)):
                val = GrassmannElement.scalar(float(val), self.q)
            if val.q != self.q:
                val = val.embed(self.q) if val.q < self.q else val
            point[s] = val
        sp = SPoint(self.q, point)  # parity/shape validation
        valid = {s for s, _ in self.layout}
        for s, v in sp.values.items():
            if s not in valid:
                if s.kind == "velocity" and self.table[s.base] in self.orders:
                    raise SCurveError(
                        f"{s.name} is determined by the first-order dynamics "
                        "and cannot be prescribed")
                raise SCurveError(f"{s.name} is not part of the state")
            for m, c in v.terms.items():
                y[self.slot[(s, m)]] = c
        return y

    def rhs_direct(self, y: np.ndarray) -> np.ndarray:
        """Reference derivative via direct symbolic evaluation (slow oracle)."""
        bind = dict(self.params)
        for s in {sym for sym, _ in self.layout}:
            masks = [m for (sym, m) in self.layout if sym is s]
            bind[s] = GrassmannElement(
                self.q, {m: y[self.slot[(s, m)]] for m in masks})
        out = np.zeros_like(y)
        for c in self.coords:
            masks = parity_masks(self.q, c.parity.value)
            if self.orders[c] == 2:
                vel = self.table.velocity(c)
                for m in masks:
                    out[self.slot[(c, m)]] = y[self.slot[(vel, m)]]
                val = eval_at(self.rhs[c], bind, self.q)
                for m in masks:
                    out[self.slot[(vel, m)]] = val.terms.get(m, 0.0)
            else:
                val = eval_at(self.rhs[c], bind, self.q)
                for m in masks:
                    out[self.slot[(c, m)]] = val.terms.get(m, 0.0)
        return out


def expand_system(source, q: int, params: dict | None = None,
                  table=None, coords=None) -> ComponentSystem:
    """Component system from a NormalForm or an explicit vector field on M.

    An ImplicitReport is refused with guidance: implicit systems still support
    the verify-only workflow."""
    if isinstance(source, ImplicitReport):
        raise SCurveError(
            f"cannot expand an implicit system ({source.reason}); "
            "use verify mode on an externally produced trajectory instead")
    if isinstance(source, NormalForm):
        if table is None or coords is None:
            raise SCurveError("expand_system needs the chart table and coordinates")
        return ComponentSystem(
            table=table, q=q, coords=list(coords),
            orders=dict(source.orders), rhs=dict(source.rhs),
            params=dict(params or {}))
    if isinstance(source, SuperVectorField):
        X = source
        coords = [s for s in X.chart if s.kind == "coord"]
        for s in X.chart:
            if s.kind != "coord" and not X.component(s).is_zero():
                raise SCurveError(
                    f"explicit integration of a field needs components on base "
                    f"coordinates only; {s.name} has a nonzero component")
        if X.parity is not Parity.EVEN:
            raise SCurveError("only even vector fields define explicit dynamics")
        rhs = {c: X.component(c) for c in coords}
        return ComponentSystem(
            table=X.table, q=q, coords=coords,
            orders={c: 1 for c in coords}, rhs=rhs, params=dict(params or {}))
    raise TypeError(f"cannot expand {source!r}")


def system_for(sys: LagrangianSystem, q: int, spec: ConstraintSpec | None = None
               ) -> ComponentSystem:
    """Component system of a Lagrangian's (possibly constrained) normal form."""
    nf = normal_form(sys, constrained=spec)
    if isinstance(nf, ImplicitReport):
        raise SCurveError(
            f"cannot integrate: {nf}; use verify mode on an external trajectory")
    return expand_system(nf, q, params=sys.params, table=sys.table, coords=sys.coords)


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def integrate(csys: ComponentSystem, init: dict, t0: float, t1: float,
              dt: float, backend: str | None = None) -> Trajectory:
    """Fixed-step RK4 from t0 to t1; samples at every step, deterministic.

    The returned trajectory carries position components for every coordinate
    and velocity components for all of them (second-order velocities are part
    of the state; first-order velocities are the recorded right-hand sides).
    Raises IntegrationDiverged on non-finite states, carrying the partial run.
    """
    if dt <= 0:
        raise SCurveError("dt must be positive")
    if t1 <= t0:
        raise SCurveError("t1 must exceed t0")
    nsteps = int(round((t1 - t0) / dt))
    if abs(t0 + nsteps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
        raise SCurveError(f"dt={dt} does not evenly divide [{t0}, {t1}]")
    y0 = csys.state_from_init(init)
    impl = kernel.get_backend(backend)
    samples, derivs, diverged = impl.rk4(csys.tape, y0, dt, nsteps)
    n = samples.shape[0]
    times = t0 + dt * np.arange(n)

    colspec = []
    cols = []
    for c in csys.coords:
        for m in parity_masks(csys.q, c.parity.value):
            colspec.append((c.name, m))
            cols.append(samples[:, csys.slot[(c, m)]])
    for c in csys.coords:
        vname = f"d{c.name}"
        for m in parity_masks(csys.q, c.parity.value):
            colspec.append((vname, m))
            if csys.orders[c] == 2:
                cols.append(samples[:, csys.slot[(csys.table.velocity(c), m)]])
            else:
                cols.append(derivs[:, csys.slot[(c, m)]])
    data = np.column_stack(cols) if cols else np.zeros((n, 0))
    meta = {"t0": float(t0), "dt": float(dt), "backend": impl.NAME}
    traj = Trajectory(csys.q, tuple(colspec), times, data, meta)
    if diverged >= 0:
        traj.diverged_at = float(times[-1])
        raise IntegrationDiverged(float(times[-1]), traj)
    return traj


# ---------------------------------------------------------------------------
# batch evaluation of expressions along a trajectory
# ---------------------------------------------------------------------------

def _finite_difference(block: np.ndarray, dt: float, order: int) -> tuple:
    """Time derivative of sampled columns; returns (derivative, interior slice).

    Order 2 uses the 3-point centered stencil, order 4 the 5-point one; values
    outside the interior are filled with one-sided order-2 estimates but the
    returned slice marks where the stated accuracy holds.
    """
    n = block.shape[0]
    d = np.zeros_like(block)
    if n < 3:
        raise SCurveError("need at least 3 samples to reconstruct derivatives")
    if order == 4 and n >= 5:
        d[2:-2] = (-block[4:] + 8 * block[3:-1] - 8 * block[1:-3] + block[:-4]) / (12 * dt)
        d[1] = (block[2] - block[0]) / (2 * dt)
        d[-2] = (block[-1] - block[-3]) / (2 * dt)
        interior = slice(2, n - 2)
    else:
        d[1:-1] = (block[2:] - block[:-2]) / (2 * dt)
        interior = slice(1, n - 1)
    d[0] = (-3 * block[0] + 4 * block[1] - block[2]) / (2 * dt)
    d[-1] = (3 * block[-1] - 4 * block[-2] + block[-3]) / (2 * dt)
    return d, interior


class _TrajectoryBindings:
    """Dense per-sample component matrix for the symbols an expression needs."""

    def __init__(self, sys_table, traj: Trajectory, diff_order: int = 2):
        self.table = sys_table
        self.traj = traj
        self.diff_order = diff_order
        self.columns: dict = {}  # Symbol -> (masks, array (n, k))
        self.interior = slice(0, traj.n_samples)
        self._dt = float(traj.times[1] - traj.times[0]) if traj.n_samples > 1 else 0.0
        if traj.n_samples > 2:
            steps = np.diff(traj.times)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise SCurveError("derivative reconstruction needs a uniform grid")

    def _narrow(self, sl: slice):
        lo = max(self.interior.start, sl.start)
        hi = min(self.interior.stop, sl.stop)
        self.interior = slice(lo, hi)

    def get(self, s: Symbol):
        if s in self.columns:
            return self.columns[s]
        if self.traj.has(s.name):
            self.columns[s] = self.traj.series(s.name)
        elif s.kind == "velocity" and self.traj.has(s.base):
            masks, block = self.traj.series(s.base)
            d, interior = _finite_difference(block, self._dt, self.diff_order)
            self._narrow(interior)
            self.columns[s] = (masks, d)
        elif not parity_masks(self.traj.q, s.parity.value):
            # no subsets of this parity exist at this q: identically zero
            self.columns[s] = ([], np.zeros((self.traj.n_samples, 0)))
        else:
            raise SCurveError(f"trajectory carries no data for {s.name}")
        return self.columns[s]


def batch_eval(table, exprs: list, binds: _TrajectoryBindings, params: dict,
               q: int) -> np.ndarray:
    """Evaluate expressions at every sample; result has shape (n, len(exprs), 2**q)."""
    needed = set()
    for e in exprs:
        for s in e.free_symbols():
            if s not in params:
                needed.add(s)
    inputs = {}
    cols = []
    slot = 0
    for s in sorted(needed, key=lambda s: s.index):
        masks, block = binds.get(s)
        inputs[s] = [(m, slot + j) for j, m in enumerate(masks)]
        cols.append(block)
        slot += len(masks)
    y = np.column_stack(cols) if cols else np.zeros((binds.traj.n_samples, 0))
    dim = 1 << q
    builder = TapeBuilder(q, inputs, params, y.shape[1], len(exprs) * dim)
    for i, e in enumerate(exprs):
        reg = builder.compile_expr(e)
        builder.scatter(reg, [(m, i * dim + m) for m in range(dim)])
        builder.free(reg)
    tape = builder.build()
    from .kernel import pykernel

    out = pykernel.eval_tape(tape, y)
    return out.reshape(binds.traj.n_samples, len(exprs), dim)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    """Residual summary for a trajectory against the phase dynamics."""

    passed: bool
    max_residual: float
    tol: float
    per_equation: dict  # label -> max residual
    horizon: tuple  # (t_first, t_last) actually certified
    n_samples: int

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        lines = [
            f"{status}: max residual {self.max_residual:.3e} "
            f"(tol {self.tol:.1e}) over t in [{self.horizon[0]:g}, {self.horizon[1]:g}], "
            f"{self.n_samples} samples"
        ]
        for label, r in self.per_equation.items():
            lines.append(f"  {label}: {r:.3e}")
        return "\n".join(lines)


def verify_solution(sys: LagrangianSystem, traj: Trajectory, tol: float,
                    diff_order: int = 2, spec: ConstraintSpec | None = None,
                    vector_field: SuperVectorField | None = None,
                    params: dict | None = None) -> VerificationReport:
    """Evaluate the equations of motion at every sample and report residuals.

    Momenta are reconstructed through the symbolic pullbacks dL/d(velocity);
    missing velocities come from centered finite differences (order 2 by
    default, order 4 available for fine, smooth grids).  The report certifies
    only the sampled horizon.
    """
    t = sys.table if sys is not None else vector_field.table
    if params is None:
        params = sys.params if sys is not None else {}
    binds = _TrajectoryBindings(t, traj, diff_order)
    dt = float(traj.times[1] - traj.times[0])
    per = {}

    if vector_field is not None:
        coords = [s for s in vector_field.chart if s.kind == "coord"]
        exprs = [vector_field.component(c) for c in coords]
        vals = batch_eval(t, exprs, binds, params, traj.q)
        for j, c in enumerate(coords):
            masks, block = binds.get(c)
            d, interior = _finite_difference(block, dt, diff_order)
            binds._narrow(interior)
            resid = d[:, :] - vals[:, j, masks]
            per[f"d{c.name}/dt"] = float(
                np.max(np.abs(resid[binds.interior])) if resid.size else 0.0)
    else:
        if spec is None:
            eqs = [(c, sys.momentum_pullback(c), sys.force_pullback(c))
                   for c in sys.coords]
            constrained_coords = set()
        else:
            dropped = set(spec.coords(t))
            kill = {v: SuperExpr.zero() for v in spec.velocities}
            eqs = [
                (c,
                 substitute(sys.momentum_pullback(c), kill),
                 substitute(sys.force_pullback(c), kill))
                for c in sys.coords if c not in dropped
            ]
            constrained_coords = dropped
        exprs = [m for _, m, _ in eqs] + [f for _, _, f in eqs]
        vals = batch_eval(t, exprs, binds, params, traj.q)
        nc = len(eqs)
        for j, (c, _, _) in enumerate(eqs):
            mom = vals[:, j, :]
            force = vals[:, nc + j, :]
            dmom, interior = _finite_difference(mom, dt, diff_order)
            binds._narrow(interior)
            resid = dmom - force
            per[f"EL[{c.name}]"] = float(np.max(np.abs(resid[binds.interior])))
        for c in constrained_coords:
            masks, block = binds.get(c)
            d, interior = _finite_difference(block, dt, diff_order)
            binds._narrow(interior)
            per[f"d{c.name}/dt = 0"] = float(np.max(np.abs(d[binds.interior])))

    mx = max(per.values()) if per else 0.0
    lo, hi = binds.interior.start, binds.interior.stop
    return VerificationReport(
        passed=mx <= tol,
        max_residual=mx,
        tol=tol,
        per_equation=per,
        horizon=(float(traj.times[lo]), float(traj.times[hi - 1])),
        n_samples=traj.n_samples,
    )



# ---------------------------------------------------------------------------
# reparametrisation
# ---------------------------------------------------------------------------

@dataclass
class Reparametrisation:
    """Algebra homomorphism induced by odd images of the source generators."""

    source_q: int
    target_q: int
    images: dict  # generator index (1-based) -> GrassmannElement in the target

    def __post_init__(self):
        for i in range(1, self.source_q + 1):
            if i not in self.images:
                raise SCurveError(f"missing image for generator z{i}")
        for i, img in self.images.items():
            if img.q != self.target_q:
                raise SCurveError(f"image of z{i} lives in q={img.q}, "
                                  f"expected {self.target_q}")
            p = img.parity()
            if not img.is_zero() and p is not Parity.ODD:
                raise SCurveError(f"image of z{i} must be odd or zero")

    @classmethod
    def identity(cls, q: int) -> "Reparametrisation":
        return cls(q, q, {i: GrassmannElement.generator(i, q) for i in range(1, q + 1)})

    @classmethod
    def projection(cls, source_q: int, target_q: int) -> "Reparametrisation":
        """Keep the first target_q generators, send the rest to zero."""
        images = {}
        for i in range(1, source_q + 1):
            if i <= target_q:
                images[i] = GrassmannElement.generator(i, target_q)
            else:
                images[i] = GrassmannElement.zero(target_q)
        return cls(source_q, target_q, images)

    def apply_element(self, e: GrassmannElement) -> GrassmannElement:
        """Extend the generator images multiplicatively and linearly."""
        if e.q != self.source_q:
            raise SCurveError(f"element lives in q={e.q}, map expects {self.source_q}")
        out = GrassmannElement.zero(self.target_q)
        for mask, c in e.terms.items():
            piece = GrassmannElement.scalar(c, self.target_q)
            for i in range(self.source_q):
                if mask >> i & 1:
                    piece = piece * self.images[i + 1]
                    if piece.is_zero():
                        break
            out = out + piece
        return out

    def after(self, other: "Reparametrisation") -> "Reparametrisation":
        """The composite map applying ``other`` first, then this one."""
        if other.target_q != self.source_q:
            raise SCurveError(
                f"cannot compose: inner map lands in q={other.target_q}, "
                f"outer expects q={self.source_q}")
        images = {i: self.apply_element(img) for i, img in other.images.items()}
        return Reparametrisation(other.source_q, self.target_q, images)

    def monomial_images(self) -> dict:
        """source mask -> image element; the linear data of the map."""
        out = {}
        for mask in range(1 << self.source_q):
            out[mask] = self.apply_element(
                GrassmannElement(self.source_q, {mask: 1.0}))
        return out


def reparametrise(traj: Trajectory, rep: Reparametrisation) -> Trajectory:
    """Apply the homomorphism to every sampled element of every column group."""
    if rep.source_q != traj.q:
        raise SCurveError(
            f"trajectory has q={traj.q} but the map expects q={rep.source_q}")
    mono = rep.monomial_images()
    colspec = []
    cols = []
    for name in traj.names():
        masks, block = traj.series(name)
        parity_bit = bin(masks[0]).count("1") & 1 if masks else 0
        tmasks = parity_masks(rep.target_q, parity_bit)
        T = np.zeros((len(masks), len(tmasks)))
        for i, mask in enumerate(masks):
            img = mono[mask]
            for j, tm in enumerate(tmasks):
                T[i, j] = img.terms.get(tm, 0.0)
        out = block @ T
        for j, tm in enumerate(tmasks):
            colspec.append((name, tm))
            cols.append(out[:, j])
    data = np.column_stack(cols) if cols else np.zeros((traj.n_samples, 0))
    meta = dict(traj.meta)
    meta["reparametrised_from_q"] = traj.q
    return Trajectory(rep.target_q, tuple(colspec), traj.times.copy(), data, meta)


# ---------------------------------------------------------------------------
# constants of motion and numeric symmetry residuals
# ---------------------------------------------------------------------------

@dataclass
class ConstantReport:
    passed: bool
    drift: float
    tol: float
    per_component: dict  # mask -> drift

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}: max drift {self.drift:.3e} (tol {self.tol:.1e})"


def check_constant(sys: LagrangianSystem, f: SuperExpr, traj: Trajectory,
                   tol: float, spec: ConstraintSpec | None = None) -> ConstantReport:
    """Drift of a phase-space superfunction along the trajectory.

    Momenta inside f are replaced by their symbolic pullbacks dL/d(velocity)
    before evaluation, so the check needs no numerically reconstructed
    momenta."""
    t = sys.table
    tl = constrained_tulczyjew(sys, spec) if spec is not None else tulczyjew(sys)
    sub = {s: e for s, e in tl.items() if s.kind in ("momentum", "momentum_velocity")}
    if spec is not None:
        for c in spec.coords(t):
            sub[t.momentum(c)] = SuperExpr.zero()
            sub[t.momentum_velocity(c)] = SuperExpr.zero()
        sub.update({v: SuperExpr.zero() for v in spec.velocities})
    g = substitute(f, sub)
    stray = [s.name for s in g.free_symbols()
             if s.kind not in ("coord", "velocity", "param")]
    if stray:
        raise SCurveError(f"constant references symbols outside the schema: "
                          f"{', '.join(sorted(stray))}")
    binds = _TrajectoryBindings(t, traj, diff_order=2)
    vals = batch_eval(t, [g], binds, sys.params, traj.q)[:, 0, :]
    per = {}
    for m in range(vals.shape[1]):
        col = vals[:, m]
        per[m] = float(col.max() - col.min())
    drift = max(per.values()) if per else 0.0
    return ConstantReport(passed=drift <= tol, drift=drift, tol=tol,
                          per_component={m: d for m, d in per.items() if d != 0.0 or m == 0})


@dataclass
class NumericSymmetryReport:
    passed: bool
    max_residual: float
    tol: float
    per_generator: dict

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}: max on-shell residual {self.max_residual:.3e} (tol {self.tol:.1e})"


def numeric_symmetry_check(X: SuperVectorField, sys: LagrangianSystem,
                           traj: Trajectory, tol: float,
                           spec: ConstraintSpec | None = None,
                           diff_order: int = 4) -> NumericSymmetryReport:
    """Evaluate the lifted-field residuals along an integrated solution.

    Complements the symbolic check for systems whose reducer cannot close:
    the residuals here are the momentum-substituted expressions, evaluated
    with derivative data reconstructed from the samples."""
    rep = check_symmetry(X, sys, spec=spec)
    exprs = list(rep.onshell_free.values())
    names = list(rep.onshell_free.keys())
    binds = _TrajectoryBindings(sys.table, traj, diff_order)
    vals = batch_eval(sys.table, exprs, binds, sys.params, traj.q)
    per = {}
    sl = binds.interior
    for j, name in enumerate(names):
        per[name] = float(np.max(np.abs(vals[sl, j, :]))) if vals.size else 0.0
    mx = max(per.values()) if per else 0.0
    return NumericSymmetryReport(passed=mx <= tol, max_residual=mx, tol=tol,
                                 per_generator=per)


# ---------------------------------------------------------------------------
# closed-form solution realization (oracle helper)
# ---------------------------------------------------------------------------

def realize_solution(model, const_binds: dict, times, q: int,
                     params: dict | None = None) -> Trajectory:
    """Sample a model's closed-form solution block into a trajectory.

    The solution expressions (and their exact symbolic time derivatives) are
    evaluated with t and the bound constants as input columns; this path is
    independent of the integrator."""
    if not model.solution:
        raise SCurveError(f"model {model.name!r} has no solution block")
    t = model.table
    times = np.asarray(times, dtype=float)
    n = len(times)
    scalar_params = {t[name]: v for name, v in model.params.items()}
    if params:
        for name, v in params.items():
            scalar_params[t[name] if isinstance(name, str) else name] = float(v)

    tsym = t["t"]
    inputs = {tsym: [(0, 0)]}
    cols = [times]
    slot = 1
    for name, v in const_binds.items():
        s = t[name] if isinstance(name, str) else name
        if isinstance(v, (int, float)):
            v = GrassmannElement.scalar(float(v), q)
        if v.q != q:
            raise SCurveError(f"binding for {s.name} lives in q={v.q}, expected {q}")
        p = v.parity()
        if not v.is_zero() and p is not s.parity:
            raise SCurveError(f"binding for {s.name} has the wrong parity")
        pairs = []
        for m in parity_masks(q, s.parity.value):
            pairs.append((m, slot))
            cols.append(np.full(n, v.terms.get(m, 0.0)))
            slot += 1
        inputs[s] = pairs
    y = np.column_stack(cols)

    exprs = []
    names = []
    for cname, expr in model.solution.items():
        exprs.append(expr)
        exprs.append(deven(expr, tsym))
        names.append(cname)
    for s in {sym for e in exprs for sym in e.free_symbols()}:
        if s not in scalar_params and s not in inputs:
            raise SCurveError(f"solution references unbound constant {s.name}")

    dim = 1 << q
    builder = TapeBuilder(q, inputs, scalar_params, y.shape[1], len(exprs) * dim)
    for i, e in enumerate(exprs):
        reg = builder.compile_expr(e)
        builder.scatter(reg, [(m, i * dim + m) for m in range(dim)])
        builder.free(reg)
    from .kernel import pykernel

    vals = pykernel.eval_tape(builder.build(), y).reshape(n, len(exprs), dim)

    pos_cols: list = []
    vel_cols: list = []
    for j, cname in enumerate(names):
        masks = parity_masks(q, t[cname].parity.value)
        for m in masks:
            pos_cols.append(((cname, m), vals[:, 2 * j, m]))
            vel_cols.append(((f"d{cname}", m), vals[:, 2 * j + 1, m]))
    ordered = pos_cols + vel_cols
    colspec = tuple(cs for cs, _ in ordered)
    data = np.column_stack([col for _, col in ordered])
    return Trajectory(q, colspec, times, data, {"source": "solution-block"})
