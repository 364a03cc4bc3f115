# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled tape interpreter and fixed-step RK4 driver.

Executes the same instruction tapes as the numpy backend; the whole
integration loop runs without entering the Python interpreter."""

import numpy as np

from libc.math cimport cos, cosh, exp, isfinite, sin, sinh

NAME = "c"

DEF OP_ZERO = 0
DEF OP_GATHER = 1
DEF OP_CONST = 2
DEF OP_ADD = 3
DEF OP_SUB = 4
DEF OP_MUL = 5
DEF OP_SCALE = 6
DEF OP_ACC = 7
DEF OP_FUNC = 8
DEF OP_POW = 9
DEF OP_INV = 10
DEF OP_OUT = 11
DEF OP_COPY = 12


cdef inline double fderiv(int code, int k, double b) nogil:
    if code == 0:
        k = k & 3
        if k == 0:
            return sin(b)
        elif k == 1:
            return cos(b)
        elif k == 2:
            return -sin(b)
        return -cos(b)
    elif code == 1:
        k = k & 3
        if k == 0:
            return cos(b)
        elif k == 1:
            return -sin(b)
        elif k == 2:
            return -cos(b)
        return sin(b)
    elif code == 2:
        if k & 1:
            return cosh(b)
        return sinh(b)
    elif code == 3:
        if k & 1:
            return sinh(b)
        return cosh(b)
    return exp(b)


cdef inline void vmul(double[:, ::1] regs, int dst, int a, int b,
                      int ntab, int[::1] ia, int[::1] ib, int[::1] io,
                      double[::1] sg, int dim) nogil:
    cdef int i, k
    for i in range(dim):
        regs[dst, i] = 0.0
    for k in range(ntab):
        regs[dst, io[k]] += sg[k] * regs[a, ia[k]] * regs[b, ib[k]]


cdef inline bint vnonzero(double[:, ::1] regs, int r, int dim) nogil:
    cdef int i
    for i in range(dim):
        if regs[r, i] != 0.0:
            return True
    return False


cdef int do_func(double[:, ::1] regs, int dst, int a, int code,
                 int ntab, int[::1] ia, int[::1] ib, int[::1] io,
                 double[::1] sg, int dim, int q) nogil:
    # scratch: regs[0] = soul, regs[1] = power, regs[2] = product buffer
    cdef double body = regs[a, 0]
    cdef double fact = 1.0
    cdef int i, k
    for i in range(dim):
        regs[0, i] = regs[a, i]
    regs[0, 0] = 0.0
    for i in range(dim):
        regs[dst, i] = 0.0
    regs[dst, 0] = fderiv(code, 0, body)
    if not vnonzero(regs, 0, dim):
        return 0
    for i in range(dim):
        regs[1, i] = regs[0, i]
    k = 1
    while True:
        for i in range(dim):
            regs[dst, i] += (fderiv(code, k, body) / fact) * regs[1, i]
        vmul(regs, 2, 1, 0, ntab, ia, ib, io, sg, dim)
        for i in range(dim):
            regs[1, i] = regs[2, i]
        if not vnonzero(regs, 1, dim):
            return 0
        k += 1
        fact *= k
        if k > q + 1:
            return -1


cdef int do_inv(double[:, ::1] regs, int dst, int a,
                int ntab, int[::1] ia, int[::1] ib, int[::1] io,
                double[::1] sg, int dim, int q) nogil:
    cdef double body = regs[a, 0]
    cdef int i, k
    if body == 0.0:
        return -1
    for i in range(dim):
        regs[0, i] = -regs[a, i] / body
    regs[0, 0] = 0.0
    for i in range(dim):
        regs[dst, i] = 0.0
    regs[dst, 0] = 1.0
    for i in range(dim):
        regs[1, i] = regs[0, i]
    for k in range(q):
        if not vnonzero(regs, 1, dim):
            break
        for i in range(dim):
            regs[dst, i] += regs[1, i]
        vmul(regs, 2, 1, 0, ntab, ia, ib, io, sg, dim)
        for i in range(dim):
            regs[1, i] = regs[2, i]
    for i in range(dim):
        regs[dst, i] /= body
    return 0


cdef int run_tape(double[:, ::1] regs,
                  int[:, ::1] instrs, int[:, ::1] pool,
                  double[::1] scalars, double[:, ::1] consts,
                  int ntab, int[::1] ia, int[::1] ib, int[::1] io,
                  double[::1] sg, int dim, int q,
                  double[::1] y, double[::1] out) nogil:
    cdef int n = instrs.shape[0]
    cdef int idx, op, dst, a, b, i
    cdef double s
    for idx in range(n):
        op = instrs[idx, 0]
        dst = instrs[idx, 1]
        a = instrs[idx, 2]
        b = instrs[idx, 3]
        if op == OP_GATHER:
            for i in range(dim):
                regs[dst, i] = 0.0
            for i in range(a, a + b):
                regs[dst, pool[i, 1]] = y[pool[i, 0]]
        elif op == OP_MUL:
            vmul(regs, dst, a, b, ntab, ia, ib, io, sg, dim)
        elif op == OP_SCALE:
            s = scalars[b]
            for i in range(dim):
                regs[dst, i] = s * regs[a, i]
        elif op == OP_ACC:
            s = scalars[b]
            for i in range(dim):
                regs[dst, i] += s * regs[a, i]
        elif op == OP_ADD:
            for i in range(dim):
                regs[dst, i] = regs[a, i] + regs[b, i]
        elif op == OP_SUB:
            for i in range(dim):
                regs[dst, i] = regs[a, i] - regs[b, i]
        elif op == OP_CONST:
            for i in range(dim):
                regs[dst, i] = consts[a, i]
        elif op == OP_COPY:
            for i in range(dim):
                regs[dst, i] = regs[a, i]
        elif op == OP_ZERO:
            for i in range(dim):
                regs[dst, i] = 0.0
        elif op == OP_FUNC:
            if do_func(regs, dst, a, b, ntab, ia, ib, io, sg, dim, q) != 0:
                return -1
        elif op == OP_INV:
            if do_inv(regs, dst, a, ntab, ia, ib, io, sg, dim, q) != 0:
                return -1
        elif op == OP_OUT:
            for i in range(b, b + dst):
                out[pool[i, 0]] = regs[a, pool[i, 1]]
        else:
            return -2
    return 0


def eval_tape_raw(instrs, pool, scalars, consts, tables, int n_regs, int dim,
                  int q, int n_out, y):
    """Evaluate a tape at a single flat state vector."""
    ia, ib, io, sg = tables
    regs = np.zeros((n_regs, dim))
    out = np.zeros(n_out)
    y = np.ascontiguousarray(y, dtype=np.float64)
    cdef int status = run_tape(regs, instrs, pool, scalars, consts,
                               ia.shape[0], ia, ib, io, sg, dim, q, y, out)
    if status != 0:
        raise ArithmeticError("tape hit a non-invertible element")
    return out


def rk4_raw(instrs, pool, scalars, consts, tables, int n_regs, int dim,
            int q, int n_state, y0, double dt, long nsteps):
    """Full RK4 loop; returns (samples, sample derivatives, diverged index)."""
    ia, ib, io, sg = tables
    cdef int ntab = ia.shape[0]
    cdef int[:, ::1] instrs_v = instrs
    cdef int[:, ::1] pool_v = pool
    cdef double[::1] scalars_v = scalars
    cdef double[:, ::1] consts_v = consts
    cdef int[::1] ia_v = ia
    cdef int[::1] ib_v = ib
    cdef int[::1] io_v = io
    cdef double[::1] sg_v = sg

    regs_arr = np.zeros((n_regs, dim))
    cdef double[:, ::1] regs = regs_arr
    traj_arr = np.empty((nsteps + 1, n_state))
    derivs_arr = np.zeros((nsteps + 1, n_state))
    cdef double[:, ::1] traj = traj_arr
    cdef double[:, ::1] derivs = derivs_arr

    y_arr = np.array(y0, dtype=np.float64)
    k1_arr = np.zeros(n_state)
    k2_arr = np.zeros(n_state)
    k3_arr = np.zeros(n_state)
    k4_arr = np.zeros(n_state)
    yt_arr = np.zeros(n_state)
    cdef double[::1] y = y_arr
    cdef double[::1] k1 = k1_arr
    cdef double[::1] k2 = k2_arr
    cdef double[::1] k3 = k3_arr
    cdef double[::1] k4 = k4_arr
    cdef double[::1] yt = yt_arr

    cdef long i, diverged = -1
    cdef int j, status = 0
    cdef bint ok
    with nogil:
        for j in range(n_state):
            traj[0, j] = y[j]
        for i in range(nsteps):
            status = run_tape(regs, instrs_v, pool_v, scalars_v, consts_v,
                              ntab, ia_v, ib_v, io_v, sg_v, dim, q, y, k1)
            if status != 0:
                diverged = i
                break
            for j in range(n_state):
                derivs[i, j] = k1[j]
                yt[j] = y[j] + 0.5 * dt * k1[j]
            status = run_tape(regs, instrs_v, pool_v, scalars_v, consts_v,
                              ntab, ia_v, ib_v, io_v, sg_v, dim, q, yt, k2)
            if status != 0:
                diverged = i
                break
            for j in range(n_state):
                yt[j] = y[j] + 0.5 * dt * k2[j]
            status = run_tape(regs, instrs_v, pool_v, scalars_v, consts_v,
                              ntab, ia_v, ib_v, io_v, sg_v, dim, q, yt, k3)
            if status != 0:
                diverged = i
                break
            for j in range(n_state):
                yt[j] = y[j] + dt * k3[j]
            status = run_tape(regs, instrs_v, pool_v, scalars_v, consts_v,
                              ntab, ia_v, ib_v, io_v, sg_v, dim, q, yt, k4)
            if status != 0:
                diverged = i
                break
            ok = True
            for j in range(n_state):
                y[j] = y[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not isfinite(y[j]):
                    ok = False
            if not ok:
                diverged = i
                break
            for j in range(n_state):
                traj[i + 1, j] = y[j]
        if diverged < 0:
            status = run_tape(regs, instrs_v, pool_v, scalars_v, consts_v,
                              ntab, ia_v, ib_v, io_v, sg_v, dim, q, y, k1)
            if status == 0:
                for j in range(n_state):
                    derivs[nsteps, j] = k1[j]
            else:
                diverged = nsteps - 1
    if diverged >= 0:
        return traj_arr[: diverged + 1], derivs_arr[: diverged + 1], diverged
    return traj_arr, derivs_arr, -1
