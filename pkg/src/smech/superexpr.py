"""Canonical symbolic superfunctions over parity-tagged symbols.

An expression is kept as an expanded, normalized sum of terms

    coefficient * (product of even factors) * (odd monomial)

where even factors are powers of even symbols or of function applications
(sin, cos, sinh, cosh, exp, or a formal function with formal derivatives),
and the odd monomial is a strictly increasing product of odd symbols in the
symbol-table order.  Sorting signs are absorbed into coefficients and repeated
odd symbols annihilate the term, so structurally equal normal forms represent
equal superfunctions.

Odd derivatives follow the LEFT convention: to differentiate a term by an odd
symbol, anticommute that symbol to the front of the monomial (picking up one
sign per odd symbol crossed) and delete it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .grassmann import GrassmannElement, Parity


class SuperExprError(ValueError):
    """Base class for symbolic-layer errors."""


class ParityError(SuperExprError):
    """A parity constraint was violated (odd where even expected, etc.)."""


class UnknownSymbolError(SuperExprError):
    """An operation referenced a symbol the context does not know."""


class EvaluationError(SuperExprError):
    """Numeric evaluation could not be completed."""


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------

KIND_RANK = {
    "coord": 0,
    "velocity": 1,
    "accel": 2,
    "momentum": 3,
    "momentum_velocity": 4,
    "cot_momentum": 5,
    "cot_momentum_velocity": 6,
    "param": 7,
    "const": 8,
    "time": 9,
}


@dataclass(frozen=True)
class Symbol:
    name: str
    parity: Parity
    kind: str
    index: int
    base: str | None = None  # coordinate this symbol derives from, if any

    def key(self):
        return (0, self.index)

    def __repr__(self):
        return self.name


class SymbolTable:
    """Ordered registry of chart symbols and their induced families.

    Each coordinate x eagerly registers the induced symbols dx (velocity),
    ddx (second velocity), p_x (momentum), dp_x (momentum velocity) and q_x,
    dq_x (momenta on the cotangent bundle of the tangent bundle).  All derived
    symbols inherit the parity of their base coordinate.
    """

    def __init__(self):
        self._by_name: dict[str, Symbol] = {}
        self.coords: list[Symbol] = []
        self.params: list[Symbol] = []
        self.consts: list[Symbol] = []

    def _register(self, name: str, parity: Parity, kind: str, base: str | None) -> Symbol:
        if name in self._by_name:
            raise SuperExprError(f"symbol name collision: {name!r}")
        pos = {"param": len(self.params), "const": len(self.consts), "time": 0}.get(kind)
        if pos is None:
            pos = len(self.coords)
        sym = Symbol(name, parity, kind, KIND_RANK[kind] * 100000 + pos, base)
        self._by_name[name] = sym
        return sym

    def add_coord(self, name: str, parity: Parity) -> Symbol:
        derived = [f"d{name}", f"dd{name}", f"p_{name}", f"dp_{name}", f"q_{name}", f"dq_{name}"]
        for d in derived:
            if d in self._by_name:
                raise SuperExprError(
                    f"coordinate {name!r} induces {d!r} which collides with an existing symbol"
                )
        sym = self._register(name, parity, "coord", None)
        self.coords.append(sym)
        self._register(f"d{name}", parity, "velocity", name)
        self._register(f"dd{name}", parity, "accel", name)
        self._register(f"p_{name}", parity, "momentum", name)
        self._register(f"dp_{name}", parity, "momentum_velocity", name)
        self._register(f"q_{name}", parity, "cot_momentum", name)
        self._register(f"dq_{name}", parity, "cot_momentum_velocity", name)
        return sym

    def add_param(self, name: str) -> Symbol:
        sym = self._register(name, Parity.EVEN, "param", None)
        self.params.append(sym)
        return sym

    def add_const(self, name: str, parity: Parity) -> Symbol:
        sym = self._register(name, parity, "const", None)
        self.consts.append(sym)
        return sym

    def add_time(self, name: str = "t") -> Symbol:
        return self._register(name, Parity.EVEN, "time", None)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> Symbol:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownSymbolError(f"undeclared symbol {name!r}") from None

    def get(self, name: str) -> Symbol | None:
        return self._by_name.get(name)

    def all_symbols(self) -> list[Symbol]:
        return list(self._by_name.values())

    # induced-family accessors; argument may be a coordinate Symbol or name
    def _coord_name(self, coord) -> str:
        return coord.name if isinstance(coord, Symbol) else coord

    def velocity(self, coord) -> Symbol:
        return self[f"d{self._coord_name(coord)}"]

    def accel(self, coord) -> Symbol:
        return self[f"dd{self._coord_name(coord)}"]

    def momentum(self, coord) -> Symbol:
        return self[f"p_{self._coord_name(coord)}"]

    def momentum_velocity(self, coord) -> Symbol:
        return self[f"dp_{self._coord_name(coord)}"]

    def cot_momentum(self, coord) -> Symbol:
        return self[f"q_{self._coord_name(coord)}"]

    def cot_momentum_velocity(self, coord) -> Symbol:
        return self[f"dq_{self._coord_name(coord)}"]

    def dot(self, sym: Symbol) -> Symbol:
        """Time-derivative partner: x -> dx, dx -> ddx, p_x -> dp_x."""
        if sym.kind == "coord":
            return self.velocity(sym)
        if sym.kind == "velocity":
            return self.accel(sym.base)
        if sym.kind == "momentum":
            return self.momentum_velocity(sym.base)
        raise SuperExprError(f"symbol {sym.name} has no dotted partner")


# ---------------------------------------------------------------------------
# even-factor function applications
# ---------------------------------------------------------------------------

LIBRARY_FUNCS = ("sin", "cos", "sinh", "cosh", "exp")

# k-th derivative cycles: name -> [(name, sign), ...]
_DERIV_CYCLE = {
    "sin": [("sin", 1.0), ("cos", 1.0), ("sin", -1.0), ("cos", -1.0)],
    "cos": [("cos", 1.0), ("sin", -1.0), ("cos", -1.0), ("sin", 1.0)],
    "sinh": [("sinh", 1.0), ("cosh", 1.0)],
    "cosh": [("cosh", 1.0), ("sinh", 1.0)],
    "exp": [("exp", 1.0)],
}

_NUMERIC = {
    "sin": math.sin,
    "cos": math.cos,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "exp": math.exp,
}


def library_derivative(name: str, k: int) -> tuple[str, float]:
    """(function name, sign) of the k-th derivative of a library function."""
    cycle = _DERIV_CYCLE[name]
    return cycle[k % len(cycle)]


def library_value(name: str, k: int, x: float) -> float:
    fname, sign = library_derivative(name, k)
    return sign * _NUMERIC[fname](x)


@dataclass(frozen=True)
class FuncApp:
    """Application of a named function to a pure-even argument expression.

    ``order`` counts formal derivatives (rendered U, U1, U2, ...); library
    functions always carry order 0 because differentiation rotates their name.
    """

    name: str
    order: int
    arg: "SuperExpr"

    @property
    def formal(self) -> bool:
        return self.name not in LIBRARY_FUNCS

    def key(self):
        return (1, self.name, self.order, self.arg.key())

    def render_name(self) -> str:
        return self.name if self.order == 0 else f"{self.name}{self.order}"


def _base_key(base):
    return base.key()


# ---------------------------------------------------------------------------
# normalized expressions
# ---------------------------------------------------------------------------

def _odd_merge(a: tuple, b: tuple):
    """Merge two ascending odd monomials; returns (merged, sign) or (None, 0)."""
    if not a:
        return b, 1
    if not b:
        return a, 1
    out = []
    sign = 1
    i = j = 0
    while i < len(a) and j < len(b):
        ai, bj = a[i], b[j]
        if ai.index == bj.index:
            return None, 0
        if ai.index < bj.index:
            out.append(ai)
            i += 1
        else:
            out.append(bj)
            j += 1
            if (len(a) - i) & 1:
                sign = -sign
    out.extend(a[i:])
    out.extend(b[j:])
    return tuple(out), sign


def _merge_factors(fa: tuple, fb: tuple) -> tuple:
    exps: dict = {}
    order: list = []
    for base, e in fa + fb:
        k = _base_key(base)
        if k in exps:
            exps[k][1] += e
        else:
            exps[k] = [base, e]
            order.append(k)
    items = [(v[0], v[1]) for k, v in exps.items() if v[1] != 0]
    items.sort(key=lambda f: _base_key(f[0]))
    return tuple(items)


def _term_key(factors, odd):
    return (tuple(s.index for s in odd), tuple((_base_key(b), e) for b, e in factors))


class SuperExpr:
    """Immutable normalized expression; see the module docstring for the form."""

    __slots__ = ("terms", "_key")

    def __init__(self, terms: Iterable[tuple] = ()):  # terms: (coeff, factors, odd)
        agg: dict = {}
        keep: dict = {}
        for coeff, factors, odd in terms:
            if coeff == 0.0:
                continue
            k = _term_key(factors, odd)
            if k in agg:
                agg[k] += coeff
            else:
                agg[k] = float(coeff)
                keep[k] = (factors, odd)
        final = [
            (agg[k], keep[k][0], keep[k][1])
            for k in sorted(agg)
            if agg[k] != 0.0
        ]
        object.__setattr__(self, "terms", tuple(final))
        object.__setattr__(self, "_key", None)

    def __setattr__(self, name, value):
        raise AttributeError("SuperExpr is immutable")

    # --- constructors ---------------------------------------------------

    @classmethod
    def num(cls, c: float) -> "SuperExpr":
        return cls([(float(c), (), ())])

    @classmethod
    def sym(cls, s: Symbol) -> "SuperExpr":
        if s.parity is Parity.EVEN:
            return cls([(1.0, ((s, 1),), ())])
        return cls([(1.0, (), (s,))])

    @classmethod
    def zero(cls) -> "SuperExpr":
        return cls()

    # --- structural queries ----------------------------------------------

    def key(self):
        k = self._key
        if k is None:
            k = tuple(
                (c, tuple((_base_key(b), e) for b, e in f), tuple(s.index for s in o))
                for c, f, o in self.terms
            )
            object.__setattr__(self, "_key", k)
        return k

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        if not isinstance(other, SuperExpr):
            return NotImplemented
        return self.terms == other.terms or self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def parity(self) -> Parity | None:
        """EVEN/ODD for homogeneous expressions, None when mixed; zero is EVEN."""
        if not self.terms:
            return Parity.EVEN
        degrees = {len(o) & 1 for _, _, o in self.terms}
        if len(degrees) > 1:
            return None
        return Parity(degrees.pop())

    def free_symbols(self) -> set:
        out = set()
        for _, factors, odd in self.terms:
            out.update(odd)
            for base, _ in factors:
                if isinstance(base, Symbol):
                    out.add(base)
                else:
                    out.update(base.arg.free_symbols())
        return out

    def as_number(self) -> float | None:
        """The numeric value when the expression is a bare constant, else None."""
        if not self.terms:
            return 0.0
        if len(self.terms) == 1 and not self.terms[0][1] and not self.terms[0][2]:
            return self.terms[0][0]
        return None

    # --- ring operations --------------------------------------------------

    def __add__(self, other):
        other = _coerce(other)
        return SuperExpr(self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return SuperExpr([(-c, f, o) for c, f, o in self.terms])

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) + (-self)

    def __mul__(self, other):
        other = _coerce(other)
        out = []
        for c1, f1, o1 in self.terms:
            for c2, f2, o2 in other.terms:
                odd, sign = _odd_merge(o1, o2)
                if odd is None:
                    continue
                out.append((c1 * c2 * sign, _merge_factors(f1, f2), odd))
        return SuperExpr(out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise SuperExprError("exponents must be integers")
        if n < 0:
            return self.invert() ** (-n)
        acc = SuperExpr.num(1.0)
        for _ in range(n):
            acc = acc * self
        return acc

    def scale(self, k: float) -> "SuperExpr":
        return SuperExpr([(k * c, f, o) for c, f, o in self.terms])

    def invert(self) -> "SuperExpr":
        """Reciprocal of an even expression whose odd-free part is one monomial.

        The nilpotent remainder is handled by a terminating geometric series,
        so e.g. (sin(x) + cos(x) th1 th2)^-1 normalizes exactly.
        """
        if self.parity() is not Parity.EVEN:
            raise SuperExprError("only even expressions can be inverted")
        head = [t for t in self.terms if not t[2]]
        soul = [t for t in self.terms if t[2]]
        if len(head) != 1:
            raise SuperExprError(
                "can only invert expressions whose odd-free part is a single "
                "monomial term")
        c, factors, _ = head[0]
        if c == 0.0:
            raise SuperExprError("cannot invert zero")
        inv0 = SuperExpr([(1.0 / c, tuple((b, -e) for b, e in factors), ())])
        if not soul:
            return inv0
        neg_m = (SuperExpr(soul) * inv0).scale(-1.0)
        acc = SuperExpr.num(1.0)
        power = SuperExpr.num(1.0)
        while True:
            power = power * neg_m  # (-soul/head)^k, nilpotent
            if power.is_zero():
                break
            acc = acc + power
        return inv0 * acc

    def __repr__(self):
        return f"SuperExpr({render_expr(self)})"


def _coerce(x) -> SuperExpr:
    if isinstance(x, SuperExpr):
        return x
    if isinstance(x, (int, float)):
        return SuperExpr.num(x)
    if isinstance(x, Symbol):
        return SuperExpr.sym(x)
    raise TypeError(f"cannot interpret {x!r} as SuperExpr")


# ---------------------------------------------------------------------------
# function application with nilpotent Taylor expansion
# ---------------------------------------------------------------------------

def apply_func(name: str, order: int, arg: SuperExpr) -> SuperExpr:
    """Apply f^(order) to an even argument, expanding over the nilpotent part.

    Splitting arg = a0 + n with a0 odd-free, every term of n carries at least
    two odd symbols, so the Taylor series sum_k f^(k)(a0) n^k / k! terminates
    structurally and the result stays in normal form.
    """
    p = arg.parity()
    if p is Parity.ODD or p is None:
        raise ParityError(f"argument of {name} must be even, got {render_expr(arg)}")
    a0 = SuperExpr([t for t in arg.terms if not t[2]])
    soul = SuperExpr([t for t in arg.terms if t[2]])

    def fk(k: int) -> SuperExpr:
        if name in LIBRARY_FUNCS:
            c = a0.as_number()
            if c is not None:
                return SuperExpr.num(library_value(name, order + k, c))
            fname, sign = library_derivative(name, order + k)
            return SuperExpr([(sign, ((FuncApp(fname, 0, a0), 1),), ())])
        return SuperExpr([(1.0, ((FuncApp(name, order + k, a0), 1),), ())])

    acc = fk(0)
    if soul.is_zero():
        return acc
    power = SuperExpr.num(1.0)
    fact = 1.0
    k = 0
    while True:
        k += 1
        power = power * soul
        if power.is_zero():
            break
        fact *= k
        acc = acc + fk(k) * power.scale(1.0 / fact)
    return acc


def sx_sin(e):
    return apply_func("sin", 0, _coerce(e))


def sx_cos(e):
    return apply_func("cos", 0, _coerce(e))


def sx_sinh(e):
    return apply_func("sinh", 0, _coerce(e))


def sx_cosh(e):
    return apply_func("cosh", 0, _coerce(e))


def sx_exp(e):
    return apply_func("exp", 0, _coerce(e))


def sx_formal(name: str, order: int, e) -> SuperExpr:
    return apply_func(name, order, _coerce(e))


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def deven(e: SuperExpr, x: Symbol) -> SuperExpr:
    """Partial derivative with respect to an even symbol."""
    if not isinstance(x, Symbol):
        raise UnknownSymbolError(f"expected a symbol, got {x!r}")
    if x.parity is not Parity.EVEN:
        raise ParityError(f"deven requires an even symbol, {x.name} is odd")
    out = SuperExpr.zero()
    for coeff, factors, odd in e.terms:
        for i, (base, exp) in enumerate(factors):
            dbase = _dbase(base, x)
            if dbase.is_zero():
                continue
            rest = factors[:i] + ((base, exp - 1),) + factors[i + 1:]
            piece = SuperExpr([(coeff * exp, tuple(f for f in rest if f[1] != 0), odd)])
            out = out + piece * dbase
    return out


def _dbase(base, x: Symbol) -> SuperExpr:
    if isinstance(base, Symbol):
        return SuperExpr.num(1.0) if base == x else SuperExpr.zero()
    darg = deven(base.arg, x)
    if darg.is_zero():
        return SuperExpr.zero()
    return apply_func(base.name, base.order + 1, base.arg) * darg


def dodd_left(e: SuperExpr, theta: Symbol) -> SuperExpr:
    """Left derivative with respect to an odd symbol.

    In each term containing theta, anticommute it to the leftmost position
    (one sign per preceding odd symbol) and delete it.
    """
    if not isinstance(theta, Symbol):
        raise UnknownSymbolError(f"expected a symbol, got {theta!r}")
    if theta.parity is not Parity.ODD:
        raise ParityError(f"dodd_left requires an odd symbol, {theta.name} is even")
    out = []
    for coeff, factors, odd in e.terms:
        if theta not in odd:
            continue
        pos = odd.index(theta)
        sign = -1.0 if pos & 1 else 1.0
        out.append((coeff * sign, factors, odd[:pos] + odd[pos + 1:]))
    return SuperExpr(out)


def derivative(e: SuperExpr, s: Symbol) -> SuperExpr:
    """Parity-dispatching partial derivative (left convention for odd)."""
    return deven(e, s) if s.parity is Parity.EVEN else dodd_left(e, s)


# ---------------------------------------------------------------------------
# substitution
# ---------------------------------------------------------------------------

def substitute(e: SuperExpr, mapping: Mapping[Symbol, SuperExpr]) -> SuperExpr:
    """Simultaneous substitution; every image must match its symbol's parity."""
    images = {}
    for sym, img in mapping.items():
        img = _coerce(img)
        p = img.parity()
        if not img.is_zero() and p is not sym.parity:
            raise ParityError(
                f"image of {sym.name} must be {sym.parity.name.lower()}, "
                f"got {render_expr(img)}"
            )
        images[sym] = img
    out = SuperExpr.zero()
    for coeff, factors, odd in e.terms:
        acc = SuperExpr.num(coeff)
        for base, exp in factors:
            if isinstance(base, Symbol):
                img = images.get(base)
                piece = SuperExpr.sym(base) if img is None else img
                if exp < 0:
                    piece = piece.invert() ** (-exp)
                else:
                    piece = piece ** exp
            else:
                piece = apply_func(base.name, base.order, substitute(base.arg, images))
                if exp < 0:
                    piece = piece.invert() ** (-exp)
                else:
                    piece = piece ** exp
            acc = acc * piece
            if acc.is_zero():
                break
        if acc.is_zero():
            continue
        for s in odd:
            img = images.get(s)
            acc = acc * (SuperExpr.sym(s) if img is None else img)
            if acc.is_zero():
                break
        out = out + acc
    return out


# ---------------------------------------------------------------------------
# evaluation at Grassmann-valued points
# ---------------------------------------------------------------------------

def _coerce_value(sym: Symbol, value, q: int) -> GrassmannElement:
    if isinstance(value, (int, float)):
        if sym.parity is Parity.ODD and float(value) != 0.0:
            raise ParityError(f"odd symbol {sym.name} bound to nonzero scalar {value}")
        return GrassmannElement.scalar(float(value), q)
    if isinstance(value, GrassmannElement):
        if value.q != q:
            raise EvaluationError(
                f"binding for {sym.name} lives in q={value.q}, expected q={q}"
            )
        p = value.parity()
        if not value.is_zero() and p is not sym.parity:
            raise ParityError(
                f"binding for {sym.name} must be {sym.parity.name.lower()}, "
                f"got parity {'inhomogeneous' if p is None else p.name.lower()}"
            )
        return value
    raise EvaluationError(f"cannot bind {sym.name} to {value!r}")


def eval_at(e: SuperExpr, bindings: Mapping[Symbol, object], q: int) -> GrassmannElement:
    """Evaluate at a Grassmann-valued point.

    Even symbols may be bound to floats or even elements, odd symbols to odd
    elements (or zero); library functions of arguments with a nilpotent part
    evaluate through their Taylor expansion around the body.
    """
    missing = [s.name for s in e.free_symbols() if s not in bindings]
    if missing:
        raise EvaluationError(f"missing bindings for: {', '.join(sorted(missing))}")
    cache = {s: _coerce_value(s, v, q) for s, v in bindings.items() if isinstance(s, Symbol)}
    acc = GrassmannElement.zero(q)
    for coeff, factors, odd in e.terms:
        val = GrassmannElement.scalar(coeff, q)
        for base, exp in factors:
            val = val * _eval_base(base, cache, q) ** exp
            if val.is_zero():
                break
        if not val.is_zero():
            for s in odd:
                val = val * cache[s]
                if val.is_zero():
                    break
        acc = acc + val
    return acc


def _eval_base(base, cache, q: int) -> GrassmannElement:
    if isinstance(base, Symbol):
        return cache[base]
    if base.formal:
        raise EvaluationError(
            f"formal function {base.render_name()} has no numeric value; "
            "supply a concrete potential"
        )
    argval = eval_at(base.arg, cache, q)
    b = argval.body()
    soul = argval.soul()
    acc = GrassmannElement.scalar(library_value(base.name, 0, b), q)
    power = GrassmannElement.one(q)
    fact = 1.0
    k = 0
    while True:
        k += 1
        power = power * soul
        if power.is_zero():
            break
        fact *= k
        acc = acc + power.scale(library_value(base.name, k, b) / fact)
    return acc


# ---------------------------------------------------------------------------
# parity helpers and rendering
# ---------------------------------------------------------------------------

def parity_of_expr(e: SuperExpr) -> Parity | None:
    return e.parity()


def is_even_lagrangian(e: SuperExpr) -> bool:
    return e.parity() is Parity.EVEN


def odd_terms(e: SuperExpr) -> list[SuperExpr]:
    """The odd-parity terms of an expression, one SuperExpr each."""
    return [SuperExpr([t]) for t in e.terms if len(t[2]) & 1]


def format_number(c: float) -> str:
    if c == int(c) and abs(c) < 1e15:
        return str(int(c))
    return repr(c)


def _render_factor(base, exp: int) -> str:
    if isinstance(base, Symbol):
        s = base.name
    else:
        s = f"{base.render_name()}({render_expr(base.arg)})"
    if exp == 1:
        return s
    return f"{s}^{exp}"


def render_expr(e: SuperExpr) -> str:
    """Deterministic text form in the model-file grammar."""
    if not e.terms:
        return "0"
    parts = []
    for i, (coeff, factors, odd) in enumerate(e.terms):
        pieces = [_render_factor(b, x) for b, x in factors]
        pieces.extend(s.name for s in odd)
        mag = abs(coeff)
        if mag != 1.0 or not pieces:
            pieces.insert(0, format_number(mag))
        body = "*".join(pieces)
        if i == 0:
            parts.append(body if coeff > 0 else f"-{body}")
        else:
            parts.append(f"+ {body}" if coeff > 0 else f"- {body}")
    return " ".join(parts)
