"""Kernel backend selection.

The compiled C kernel is preferred when its extension module imported
successfully; the numpy interpreter is the always-available fallback.  The
environment variable SMECH_KERNEL forces a choice: ``py``, ``c``, or ``auto``.
Both backends execute identical tapes, so results agree to floating-point
round-off (and the test suite cross-checks them).
"""

from __future__ import annotations

import os

import numpy as np

from . import pykernel
from .pykernel import KernelDivergence
from .tape import Tape, TapeBuilder, TapeError, TAPE_QMAX

try:  # pragma: no cover - depends on the build environment
    from . import _ckernel

    _HAVE_C = True
except ImportError:  # pragma: no cover
    _ckernel = None
    _HAVE_C = False


class _CBackend:
    NAME = "c"

    @staticmethod
    def _args(tape: Tape):
        ia, ib, io, sg = tape.tables()
        return (
            np.ascontiguousarray(tape.instrs, dtype=np.int32),
            np.ascontiguousarray(tape.pool, dtype=np.int32)
            if tape.pool.size
            else np.zeros((1, 2), dtype=np.int32),
            np.ascontiguousarray(tape.scalars, dtype=np.float64)
            if tape.scalars.size
            else np.zeros(1),
            np.ascontiguousarray(tape.consts, dtype=np.float64)
            if tape.consts.size
            else np.zeros((1, tape.dim)),
            (
                np.ascontiguousarray(ia),
                np.ascontiguousarray(ib),
                np.ascontiguousarray(io),
                np.ascontiguousarray(sg),
            ),
        )

    @classmethod
    def eval_tape(cls, tape: Tape, y, out=None):
        y = np.asarray(y, dtype=float)
        if y.ndim != 1:
            return pykernel.eval_tape(tape, y, out)  # batch mode stays in numpy
        instrs, pool, scalars, consts, tables = cls._args(tape)
        try:
            res = _ckernel.eval_tape_raw(
                instrs, pool, scalars, consts, tables,
                tape.n_regs, tape.dim, tape.q, tape.n_out, y)
        except ArithmeticError as exc:
            raise KernelDivergence(str(exc)) from None
        if out is not None:
            out[...] = res
            return out
        return res

    @classmethod
    def rk4(cls, tape: Tape, y0, dt: float, nsteps: int):
        instrs, pool, scalars, consts, tables = cls._args(tape)
        return _ckernel.rk4_raw(
            instrs, pool, scalars, consts, tables,
            tape.n_regs, tape.dim, tape.q, tape.n_state,
            np.asarray(y0, dtype=float), float(dt), int(nsteps))


def available_backends() -> list[str]:
    return ["c", "py"] if _HAVE_C else ["py"]


def get_backend(name: str | None = None):
    """Resolve a backend module; None consults SMECH_KERNEL (default auto)."""
    if name is None:
        name = os.environ.get("SMECH_KERNEL", "auto")
    if name in ("auto", ""):
        return _CBackend if _HAVE_C else pykernel
    if name == "py":
        return pykernel
    if name == "c":
        if not _HAVE_C:
            raise RuntimeError(
                "compiled kernel requested via SMECH_KERNEL=c but the "
                "extension is not built; install with Cython and a C compiler")
        return _CBackend
    raise ValueError(f"unknown kernel backend {name!r}")


def active_backend_name() -> str:
    return get_backend().NAME
