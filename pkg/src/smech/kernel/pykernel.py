"""Pure numpy tape interpreter and fixed-step RK4 driver.

This is the fallback backend: it executes the same instruction tapes as the
compiled kernel, operating on register files of shape (n_regs, ..., 2**q) so
a whole batch of sample points can be evaluated in one pass.
"""

from __future__ import annotations

import numpy as np

from .tape import ACC, ADD, CONST, COPY, FUNC, GATHER, INV, MUL, OUT, SCALE, SUB, ZERO, Tape

NAME = "py"


class KernelDivergence(ArithmeticError):
    """Raised when a tape hits a non-invertible (zero-body) element."""


_FDERIV = {
    0: lambda k, b: [np.sin(b), np.cos(b), -np.sin(b), -np.cos(b)][k % 4],
    1: lambda k, b: [np.cos(b), -np.sin(b), -np.cos(b), np.sin(b)][k % 4],
    2: lambda k, b: [np.sinh(b), np.cosh(b)][k % 2],
    3: lambda k, b: [np.cosh(b), np.sinh(b)][k % 2],
    4: lambda k, b: np.exp(b),
}


DENSE_MUL_DIM = 64  # up to q=6 one einsum against the structure tensor wins


def _gmul(tape: Tape, a, b, out):
    if tape.dim <= DENSE_MUL_DIM:
        np.einsum("oij,...i,...j->...o", tape.mul_tensor(), a, b, out=out)
        return
    out[...] = 0.0
    for o, (ia, ib, sg) in enumerate(tape.grouped_tables()):
        if len(ia):
            out[..., o] = (a[..., ia] * b[..., ib] * sg).sum(axis=-1)


def _func(tape: Tape, code, a, out, tmp1):
    body = a[..., 0].copy()
    soul = a.copy()
    soul[..., 0] = 0.0
    out[...] = 0.0
    out[..., 0] = _FDERIV[code](0, body)
    if not soul.any():
        return
    power = soul.copy()
    fact = 1.0
    k = 1
    while True:
        out += power * (_FDERIV[code](k, body) / fact)[..., None]
        _gmul(tape, power, soul, tmp1)
        power[...] = tmp1
        if not power.any():
            return
        k += 1
        fact *= k
        if k > tape.q + 1:  # paranoia: nilpotency must have truncated by now
            raise KernelDivergence("Taylor expansion failed to terminate")


def _inv(tape: Tape, a, out, tmp1):
    body = a[..., 0].copy()
    if np.any(body == 0.0):
        raise KernelDivergence("inverse of an element with zero body")
    n = -a / body[..., None]
    n[..., 0] = 0.0
    out[...] = 0.0
    out[..., 0] = 1.0
    power = n.copy()
    for _ in range(tape.q):
        if not power.any():
            break
        out += power
        _gmul(tape, power, n, tmp1)
        power[...] = tmp1
    out /= body[..., None]


def _index_pairs(tape: Tape, off, n):
    cache = getattr(tape, "_pair_cache", None)
    if cache is None:
        cache = {}
        tape._pair_cache = cache
    key = (off, n)
    if key not in cache:
        block = tape.pool[off:off + n]
        cache[key] = (block[:, 0].copy(), block[:, 1].copy())
    return cache[key]


def eval_tape(tape: Tape, y, out=None):
    """Evaluate the tape at state(s) y of shape (..., n_state)."""
    y = np.asarray(y, dtype=float)
    batch = y.shape[:-1]
    regs = np.zeros((tape.n_regs,) + batch + (tape.dim,))
    if out is None:
        out = np.zeros(batch + (tape.n_out,))
    tmp1 = np.zeros(batch + (tape.dim,))
    for op, dst, a, b in tape.instrs:
        if op == GATHER:
            regs[dst][...] = 0.0
            slots, masks = _index_pairs(tape, a, b)
            regs[dst][..., masks] = y[..., slots]
        elif op == MUL:
            _gmul(tape, regs[a], regs[b], regs[dst])
        elif op == ADD:
            np.add(regs[a], regs[b], out=regs[dst])
        elif op == SUB:
            np.subtract(regs[a], regs[b], out=regs[dst])
        elif op == SCALE:
            np.multiply(regs[a], tape.scalars[b], out=regs[dst])
        elif op == ACC:
            regs[dst] += regs[a] * tape.scalars[b]
        elif op == CONST:
            regs[dst][...] = tape.consts[a]
        elif op == COPY:
            regs[dst][...] = regs[a]
        elif op == FUNC:
            _func(tape, b, regs[a], regs[dst], tmp1)
        elif op == INV:
            _inv(tape, regs[a], regs[dst], tmp1)
        elif op == ZERO:
            regs[dst][...] = 0.0
        elif op == OUT:
            slots, masks = _index_pairs(tape, b, dst)
            out[..., slots] = regs[a][..., masks]
        else:
            raise RuntimeError(f"unknown opcode {op}")
    return out


def rk4(tape: Tape, y0, dt: float, nsteps: int):
    """Classic fixed-step fourth-order Runge-Kutta.

    Returns (samples, derivatives, diverged_index); samples has one row per
    time point, derivatives holds the tape value at each recorded sample, and
    diverged_index is -1 for a clean run or the index of the last finite
    sample otherwise.
    """
    n = tape.n_state
    y = np.array(y0, dtype=float)
    traj = np.empty((nsteps + 1, n))
    derivs = np.zeros((nsteps + 1, n))
    traj[0] = y
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(nsteps):
            try:
                k1 = eval_tape(tape, y)
                derivs[i] = k1
                k2 = eval_tape(tape, y + (0.5 * dt) * k1)
                k3 = eval_tape(tape, y + (0.5 * dt) * k2)
                k4 = eval_tape(tape, y + dt * k3)
            except KernelDivergence:
                return traj[: i + 1], derivs[: i + 1], i
            y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                return traj[: i + 1], derivs[: i + 1], i
            traj[i + 1] = y
        try:
            derivs[nsteps] = eval_tape(tape, y)
        except KernelDivergence:
            return traj[:nsteps], derivs[:nsteps], nsteps - 1
    return traj, derivs, -1
