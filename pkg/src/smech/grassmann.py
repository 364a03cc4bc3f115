"""Exact arithmetic in the finite Grassmann algebra on q anticommuting generators.

An element is a finite linear combination of basis monomials z_{i1} z_{i2} ... z_{in}
with i1 < i2 < ... < in drawn from {1, ..., q}.  Each monomial is keyed by the
bitmask of its generator subset (bit i-1 set iff z_i occurs), so the algebra has
dimension 2**q and products reduce to bitmask logic plus a permutation sign.

Elements are immutable after construction and all operations are pure, so values
can be shared freely across threads.
"""

from __future__ import annotations

import enum
import os
from typing import Iterable, Mapping

DEFAULT_QCAP = 16


class GrassmannError(ValueError):
    """Base class for Grassmann arithmetic errors."""


class DimensionMismatch(GrassmannError):
    """Raised when two elements live in algebras with different q."""


class NotInvertible(GrassmannError):
    """Raised when inverting an element whose body (scalar part) is zero."""


class Parity(enum.Enum):
    EVEN = 0
    ODD = 1

    def flip(self) -> "Parity":
        return Parity.ODD if self is Parity.EVEN else Parity.EVEN

    def __add__(self, other: "Parity") -> "Parity":
        return Parity((self.value + other.value) % 2)


def qcap() -> int:
    """Current generator cap; env var SMECH_QCAP overrides the default of 16."""
    raw = os.environ.get("SMECH_QCAP")
    if raw is None:
        return DEFAULT_QCAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise GrassmannError(f"SMECH_QCAP must be an integer, got {raw!r}") from exc
    if cap < 0:
        raise GrassmannError(f"SMECH_QCAP must be non-negative, got {cap}")
    return cap


def merge_sign(a: int, b: int) -> int:
    """Sign of sorting the concatenation of two disjoint ascending monomials.

    Counts transpositions needed to interleave the generators of mask b into
    those of mask a; both monomials are already internally sorted.
    """
    sign = 1
    bb = b
    while bb:
        low = bb & -bb
        # generators of a strictly above this generator of b must be crossed
        if bin(a >> low.bit_length()).count("1") & 1:
            sign = -sign
        bb ^= low
    return sign


class GrassmannElement:
    """Element of the Grassmann algebra with q generators.

    ``terms`` maps subset bitmasks to nonzero real coefficients; exact zeros are
    dropped on construction so structural equality coincides with equality of
    the represented element.
    """

    __slots__ = ("q", "terms")

    def __init__(self, q: int, terms: Mapping[int, float] | None = None):
        cap = qcap()
        if q < 0 or q > cap:
            raise GrassmannError(f"generator count q={q} outside [0, {cap}]")
        clean: dict[int, float] = {}
        if terms:
            top = 1 << q
            for mask, coeff in terms.items():
                if mask < 0 or mask >= top:
                    raise GrassmannError(
                        f"monomial mask {mask:#b} uses generators beyond q={q}"
                    )
                c = float(coeff)
                if c != 0.0:
                    clean[mask] = c
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, name, value):
        raise AttributeError("GrassmannElement is immutable")

    # --- constructors -------------------------------------------------

    @classmethod
    def zero(cls, q: int) -> "GrassmannElement":
        return cls(q)

    @classmethod
    def scalar(cls, value: float, q: int) -> "GrassmannElement":
        return cls(q, {0: value})

    @classmethod
    def one(cls, q: int) -> "GrassmannElement":
        return cls.scalar(1.0, q)

    @classmethod
    def generator(cls, i: int, q: int) -> "GrassmannElement":
        """The generator z_i, 1-based."""
        if not 1 <= i <= q:
            raise GrassmannError(f"generator index {i} outside 1..{q}")
        return cls(q, {1 << (i - 1): 1.0})

    @classmethod
    def monomial(cls, indices: Iterable[int], q: int, coeff: float = 1.0) -> "GrassmannElement":
        """coeff * z_{i1} ... z_{in} for ascending distinct 1-based indices."""
        mask = 0
        prev = 0
        for i in indices:
            if not 1 <= i <= q:
                raise GrassmannError(f"generator index {i} outside 1..{q}")
            if i <= prev:
                raise GrassmannError("monomial indices must be strictly increasing")
            mask |= 1 << (i - 1)
            prev = i
        return cls(q, {mask: coeff})

    # --- ring operations ----------------------------------------------

    def _check(self, other: "GrassmannElement") -> None:
        if self.q != other.q:
            raise DimensionMismatch(f"q mismatch: {self.q} vs {other.q}")

    def __add__(self, other: "GrassmannElement") -> "GrassmannElement":
        self._check(other)
        out = dict(self.terms)
        for mask, c in other.terms.items():
            out[mask] = out.get(mask, 0.0) + c
        return GrassmannElement(self.q, out)

    def __sub__(self, other: "GrassmannElement") -> "GrassmannElement":
        self._check(other)
        out = dict(self.terms)
        for mask, c in other.terms.items():
            out[mask] = out.get(mask, 0.0) - c
        return GrassmannElement(self.q, out)

    def __neg__(self) -> "GrassmannElement":
        return GrassmannElement(self.q, {m: -c for m, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        self._check(other)
        out: dict[int, float] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                if ma & mb:
                    continue  # repeated generator annihilates
                mo = ma | mb
                out[mo] = out.get(mo, 0.0) + merge_sign(ma, mb) * ca * cb
        return GrassmannElement(self.q, out)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        return NotImplemented

    def scale(self, k: float) -> "GrassmannElement":
        return GrassmannElement(self.q, {m: k * c for m, c in self.terms.items()})

    def __pow__(self, n: int) -> "GrassmannElement":
        if n < 0:
            return self.inv() ** (-n)
        acc = GrassmannElement.one(self.q)
        for _ in range(n):
            acc = acc * self
        return acc

    # --- structure ------------------------------------------------------

    def body(self) -> float:
        """Coefficient of the empty monomial."""
        return self.terms.get(0, 0.0)

    def soul(self) -> "GrassmannElement":
        return GrassmannElement(self.q, {m: c for m, c in self.terms.items() if m})

    def is_zero(self) -> bool:
        return not self.terms

    def parity(self) -> Parity | None:
        """EVEN/ODD when all monomials share degree mod 2, None when mixed.

        The zero element reports EVEN by convention.
        """
        if not self.terms:
            return Parity.EVEN
        degrees = {bin(m).count("1") & 1 for m in self.terms}
        if len(degrees) > 1:
            return None
        return Parity(degrees.pop())

    def inv(self) -> "GrassmannElement":
        """Two-sided inverse via a finite geometric series on the soul.

        The soul is nilpotent (its (q+1)-th power vanishes), so the series
        terminates; requires a nonzero body.
        """
        b = self.body()
        if b == 0.0:
            raise NotInvertible("element has zero body")
        n = self.soul().scale(-1.0 / b)
        acc = GrassmannElement.one(self.q)
        power = GrassmannElement.one(self.q)
        for _ in range(self.q):
            power = power * n
            if power.is_zero():
                break
            acc = acc + power
        return acc.scale(1.0 / b)

    def embed(self, q_new: int) -> "GrassmannElement":
        """Image under the canonical inclusion into an algebra with more generators."""
        if q_new < self.q:
            raise DimensionMismatch(f"cannot embed q={self.q} into smaller q={q_new}")
        return GrassmannElement(q_new, dict(self.terms))

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    # --- comparison / display -------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrassmannElement):
            return NotImplemented
        return self.q == other.q and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.q, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        from .modelio import render_element

        return f"<Λ_{self.q}: {render_element(self)}>"


def gadd(a: GrassmannElement, b: GrassmannElement) -> GrassmannElement:
    """Coefficient-wise sum; operands must share q."""
    return a + b


def gmul(a: GrassmannElement, b: GrassmannElement) -> GrassmannElement:
    """Graded product; overlapping monomials annihilate, signs from sorting."""
    return a * b


def parity_of(a: GrassmannElement) -> Parity | None:
    return a.parity()


def body(a: GrassmannElement) -> float:
    return a.body()


def ginv(a: GrassmannElement) -> GrassmannElement:
    return a.inv()
