"""Compilation of expressions into a flat instruction tape over dense
Grassmann coefficient vectors.

A tape evaluates a fixed list of expressions at points whose coordinates are
elements of the algebra with q generators, represented as dense vectors of
length 2**q indexed by subset bitmask.  Inputs are gathered from a flat state
vector, outputs are scattered back into a flat derivative vector, and the
product of two vectors runs over the precomputed table of disjoint subset
pairs with their interleaving signs.  The same tape is executed by the
numpy backend and by the compiled C backend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import superexpr
from ..grassmann import merge_sign
from ..superexpr import SuperExpr, Symbol

# opcodes
ZERO, GATHER, CONST, ADD, SUB, MUL, SCALE, ACC, FUNC, POW, INV, OUT, COPY = range(13)

FUNC_CODES = {"sin": 0, "cos": 1, "sinh": 2, "cosh": 3, "exp": 4}

TAPE_QMAX = 12  # 3**q product-table entries; beyond this use the slow path


class TapeError(ValueError):
    """The expression cannot be compiled for numeric integration."""


def product_table(q: int):
    """(ia, ib, io, sg) arrays over all disjoint subset pairs of {1..q}."""
    ia, ib, io, sg = [], [], [], []
    for a in range(1 << q):
        free = [m for m in range(1 << q) if not (m & a)]
        for b in free:
            ia.append(a)
            ib.append(b)
            io.append(a | b)
            sg.append(float(merge_sign(a, b)))
    return (
        np.asarray(ia, dtype=np.int32),
        np.asarray(ib, dtype=np.int32),
        np.asarray(io, dtype=np.int32),
        np.asarray(sg, dtype=np.float64),
    )


@dataclass
class Tape:
    q: int
    n_regs: int
    n_state: int
    n_out: int
    instrs: np.ndarray  # (n, 4) int32: op, dst, a, b/aux
    pool: np.ndarray  # (m, 2) int32: (flat slot, mask) pairs for GATHER/OUT
    scalars: np.ndarray  # float64
    consts: np.ndarray  # (ncon, 2**q) float64
    scratch: tuple = (0, 1, 2)  # registers reserved for FUNC/INV internals
    _tables: tuple | None = field(default=None, repr=False)
    _grouped: list | None = field(default=None, repr=False)
    _tensor: object = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return 1 << self.q

    def tables(self):
        if self._tables is None:
            self._tables = product_table(self.q)
        return self._tables

    def grouped_tables(self):
        """Per-output-component (ia, ib, sg) arrays for vectorized products."""
        if self._grouped is None:
            ia, ib, io, sg = self.tables()
            groups = []
            for o in range(self.dim):
                sel = io == o
                groups.append((ia[sel], ib[sel], sg[sel]))
            self._grouped = groups
        return self._grouped

    def mul_tensor(self):
        """Dense structure tensor T[o, i, j] with out = T_oij a_i b_j.

        Only built for small dimensions where the cube stays tiny; one einsum
        per product then beats the grouped gather loops by a wide margin.
        """
        if self._tensor is None:
            ia, ib, io, sg = self.tables()
            T = np.zeros((self.dim, self.dim, self.dim))
            T[io, ia, ib] = sg
            self._tensor = T
        return self._tensor


class TapeBuilder:
    """Compiles normalized expressions against a fixed input layout.

    ``inputs`` maps each input symbol to its (mask, state slot) pairs; symbols
    in ``params`` fold to scalar constants at compile time.
    """

    def __init__(self, q: int, inputs: dict, params: dict, n_state: int, n_out: int):
        if q > TAPE_QMAX:
            raise TapeError(
                f"q={q} exceeds the dense-kernel limit {TAPE_QMAX}; "
                "use the direct evaluator")
        self.q = q
        self.dim = 1 << q
        self.inputs = inputs
        self.params = {s: float(v) for s, v in params.items()}
        self.n_state = n_state
        self.n_out = n_out
        self.instrs: list = []
        self.pool: list = []
        self.scalars: list = []
        self.consts: list = []
        self._const_ids: dict = {}
        self._next_reg = 3  # 0..2 reserved as scratch
        self._free: list = []
        self._sym_regs: dict = {}

    # --- register management -------------------------------------------

    def alloc(self) -> int:
        if self._free:
            return self._free.pop()
        r = self._next_reg
        self._next_reg += 1
        return r

    def free(self, reg: int):
        if reg not in self._sym_regs.values():
            self._free.append(reg)

    # --- emission helpers -------------------------------------------------

    def emit(self, op, dst=0, a=0, b=0):
        self.instrs.append((op, dst, a, b))

    def scalar_id(self, v: float) -> int:
        self.scalars.append(float(v))
        return len(self.scalars) - 1

    def const_reg(self, vec: np.ndarray) -> int:
        key = vec.tobytes()
        if key not in self._const_ids:
            self.consts.append(np.asarray(vec, dtype=np.float64))
            self._const_ids[key] = len(self.consts) - 1
        reg = self.alloc()
        self.emit(CONST, reg, self._const_ids[key])
        return reg

    def scalar_const_reg(self, v: float) -> int:
        vec = np.zeros(self.dim)
        vec[0] = v
        return self.const_reg(vec)

    def input_reg(self, sym: Symbol) -> int:
        if sym in self._sym_regs:
            return self._sym_regs[sym]
        pairs = self.inputs[sym]
        off = len(self.pool)
        self.pool.extend((slot, mask) for mask, slot in pairs)
        reg = self.alloc()
        self.emit(GATHER, reg, off, len(pairs))
        self._sym_regs[sym] = reg
        return reg

    # --- expression compilation -----------------------------------------

    def compile_expr(self, expr: SuperExpr) -> int:
        acc = None
        for coeff, factors, odd in expr.terms:
            reg = None
            for base, exp in factors:
                breg = self._base_reg(base)
                if exp != 1:
                    preg = self.alloc()
                    if exp < 0:
                        ireg = self.alloc()
                        self.emit(INV, ireg, breg)
                        self._pow(preg, ireg, -exp)
                        self.free(ireg)
                    else:
                        self._pow(preg, breg, exp)
                    self.free(breg)
                    breg = preg
                reg = self._mul_into(reg, breg)
            for s in odd:
                sreg = self.input_reg(s)
                reg = self._mul_into(reg, sreg, keep_b=True)
            if reg is None:  # pure numeric term
                reg = self.scalar_const_reg(coeff)
                if acc is None:
                    acc = reg
                else:
                    self.emit(ACC, acc, reg, self.scalar_id(1.0))
                    self.free(reg)
                continue
            if acc is None:
                out = self.alloc()
                self.emit(SCALE, out, reg, self.scalar_id(coeff))
                self.free(reg)
                acc = out
            else:
                self.emit(ACC, acc, reg, self.scalar_id(coeff))
                self.free(reg)
        if acc is None:
            acc = self.alloc()
            self.emit(ZERO, acc)
        return acc

    def _mul_into(self, reg, breg, keep_b=False):
        if reg is None:
            if keep_b:
                out = self.alloc()
                self.emit(COPY, out, breg)
                return out
            return breg
        out = self.alloc()
        self.emit(MUL, out, reg, breg)
        self.free(reg)
        if not keep_b:
            self.free(breg)
        return out

    def _pow(self, dst, base, n):
        if n == 0:
            tmp = self.scalar_const_reg(1.0)
            self.emit(COPY, dst, tmp)
            self.free(tmp)
            return
        self.emit(COPY, dst, base)
        for _ in range(n - 1):
            tmp = self.alloc()
            self.emit(MUL, tmp, dst, base)
            self.emit(COPY, dst, tmp)
            self.free(tmp)

    def _base_reg(self, base) -> int:
        if isinstance(base, Symbol):
            if base in self.params:
                return self.scalar_const_reg(self.params[base])
            if base in self.inputs:
                return self.input_reg(base)
            raise TapeError(f"no numeric binding for symbol {base.name}")
        if base.formal:
            raise TapeError(
                f"formal function {base.render_name()} cannot be evaluated "
                "numerically; supply a concrete potential")
        areg = self.compile_expr(base.arg)
        out = self.alloc()
        self.emit(FUNC, out, areg, FUNC_CODES[base.name])
        self.free(areg)
        return out

    def scatter(self, reg: int, pairs):
        """Write register components into output slots; pairs = (mask, out slot)."""
        off = len(self.pool)
        self.pool.extend((slot, mask) for mask, slot in pairs)
        self.emit(OUT, len(pairs), reg, off)

    def build(self) -> Tape:
        consts = (
            np.stack(self.consts)
            if self.consts
            else np.zeros((0, self.dim))
        )
        pool = (
            np.asarray(self.pool, dtype=np.int32)
            if self.pool
            else np.zeros((0, 2), dtype=np.int32)
        )
        return Tape(
            q=self.q,
            n_regs=self._next_reg,
            n_state=self.n_state,
            n_out=self.n_out,
            instrs=np.asarray(self.instrs, dtype=np.int32).reshape(-1, 4),
            pool=pool,
            scalars=np.asarray(self.scalars, dtype=np.float64),
            consts=consts,
        )


def func_derivative_value(code: int, k: int, x: float) -> float:
    """Value of the k-th derivative of a library function at x."""
    name = ("sin", "cos", "sinh", "cosh", "exp")[code]
    return superexpr.library_value(name, k, x)
