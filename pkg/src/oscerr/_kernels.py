"""Numba kernels for the fixed-step integration loops.

The long reference runs (tens of millions of steps) and the stacked
variational integrations are far too slow in interpreted Python, so the inner
loops live here.  Only the power-law oscillator family

    y1' = y2,   y2' = -y3^nu * y1^n,   y3' = 1

is compiled; everything else falls back to the generic Python path in
:mod:`oscerr.rk`.  ``n`` is an integer (sign-safe integer powers), ``nu`` is a
float; the fast variational kernel additionally requires integer ``nu`` so
that all monomial exponents are integers.
"""

from __future__ import annotations

import numpy as np
from numba import njit

RHS_POWER_OSC = 0  # 3-dim autonomous power-law oscillator, params = (n, nu)
RHS_PLANE_OSC = 1  # 2-dim autonomous u'' = -u^n, params = (n,)


@njit(cache=True, inline="always")
def _ipow(x, n):
    r = 1.0
    for _ in range(n):
        r *= x
    return r


@njit(cache=True, inline="always")
def _rhs(rhs_id, params, y, out):
    if rhs_id == RHS_POWER_OSC:
        n = int(params[0])
        nu = params[1]
        out[0] = y[1]
        if nu == 1.0:
            f = y[2]
        elif nu == 0.0:
            f = 1.0
        else:
            f = y[2] ** nu
        out[1] = -f * _ipow(y[0], n)
        out[2] = 1.0
    else:  # RHS_PLANE_OSC
        n = int(params[0])
        out[0] = y[1]
        out[1] = -_ipow(y[0], n)


@njit(cache=True, nogil=True)
def integrate_kernel(rhs_id, params, A, bw, cw, y0, h, n_steps, stride, out):
    """Explicit RK loop; writes a sample every ``stride`` steps.

    Returns the number of samples written after the initial state, or ``-k``
    if a non-finite sample was produced at step ``k``.
    """
    s = bw.shape[0]
    d = y0.shape[0]
    y = y0.copy()
    K = np.empty((s, d))
    u = np.empty(d)
    for q in range(d):
        out[0, q] = y[q]
    m = 0
    for k in range(n_steps):
        for i in range(s):
            for q in range(d):
                acc = 0.0
                for j in range(i):
                    acc += A[i, j] * K[j, q]
                u[q] = y[q] + h * acc
            _rhs(rhs_id, params, u, K[i])
        for q in range(d):
            acc = 0.0
            for i in range(s):
                acc += bw[i] * K[i, q]
            y[q] += h * acc
        if (k + 1) % stride == 0:
            m += 1
            ok = True
            for q in range(d):
                out[m, q] = y[q]
                if not np.isfinite(y[q]):
                    ok = False
            if not ok:
                return -(k + 1)
    return m


@njit(cache=True, nogil=True)
def elint_kernel(
    A,
    bw,
    cw,
    n,
    nu_int,
    y0,
    h,
    n_steps,
    stride,
    coef,
    e1,
    e2,
    e3,
    ptr,
    out_y,
    out_I,
):
    """Integrate the power-law oscillator together with a stack of
    sensitivity integrals I_j' = J(y) I_j + F_j(y), I_j(t0) = 0.

    ``coef/e1/e2/e3`` hold the monomials of the driving fields F_j, three
    components per field, delimited by ``ptr`` (length 3*m+1).  Requires an
    integer time exponent ``nu_int`` so every monomial power is integral.
    Returns the number of samples written, or ``-k`` on divergence at step k.
    """
    m = (ptr.shape[0] - 1) // 3
    # max powers needed by the monomials and the Jacobian
    max1 = n
    max2 = 1
    max3 = nu_int
    for q in range(e1.shape[0]):
        if e1[q] > max1:
            max1 = e1[q]
        if e2[q] > max2:
            max2 = e2[q]
        if e3[q] > max3:
            max3 = e3[q]
    p1 = np.empty(max1 + 1)
    p2 = np.empty(max2 + 1)
    p3 = np.empty(max3 + 1)

    y = y0.copy()
    I = np.zeros((3, m))
    ky = np.empty((4, 3))
    kI = np.empty((4, 3, m))
    uy = np.empty(3)
    uI = np.empty((3, m))
    s = bw.shape[0]
    F = np.empty(3)

    for q in range(3):
        out_y[0, q] = y[q]
    for q in range(3):
        for j in range(m):
            out_I[0, q, j] = 0.0

    wrote = 0
    for k in range(n_steps):
        for i in range(s):
            for q in range(3):
                acc = 0.0
                for jj in range(i):
                    acc += A[i, jj] * ky[jj, q]
                uy[q] = y[q] + h * acc
            for q in range(3):
                for j in range(m):
                    acc = 0.0
                    for jj in range(i):
                        acc += A[i, jj] * kI[jj, q, j]
                    uI[q, j] = I[q, j] + h * acc

            # power tables at the stage state
            p1[0] = 1.0
            for q in range(1, max1 + 1):
                p1[q] = p1[q - 1] * uy[0]
            p2[0] = 1.0
            for q in range(1, max2 + 1):
                p2[q] = p2[q - 1] * uy[1]
            p3[0] = 1.0
            for q in range(1, max3 + 1):
                p3[q] = p3[q - 1] * uy[2]

            ky[i, 0] = uy[1]
            ky[i, 1] = -p3[nu_int] * p1[n]
            ky[i, 2] = 1.0

            j21 = -n * p3[nu_int] * p1[n - 1]
            if nu_int >= 1:
                j23 = -nu_int * p3[nu_int - 1] * p1[n]
            else:
                j23 = 0.0

            for j in range(m):
                for q in range(3):
                    acc = 0.0
                    for r in range(ptr[3 * j + q], ptr[3 * j + q + 1]):
                        acc += coef[r] * p1[e1[r]] * p2[e2[r]] * p3[e3[r]]
                    F[q] = acc
                kI[i, 0, j] = uI[1, j] + F[0]
                kI[i, 1, j] = j21 * uI[0, j] + j23 * uI[2, j] + F[1]
                kI[i, 2, j] = F[2]

        for q in range(3):
            acc = 0.0
            for i in range(s):
                acc += bw[i] * ky[i, q]
            y[q] += h * acc
        for q in range(3):
            for j in range(m):
                acc = 0.0
                for i in range(s):
                    acc += bw[i] * kI[i, q, j]
                I[q, j] += h * acc

        if (k + 1) % stride == 0:
            wrote += 1
            ok = np.isfinite(y[0]) and np.isfinite(y[1])
            for q in range(3):
                out_y[wrote, q] = y[q]
                for j in range(m):
                    out_I[wrote, q, j] = I[q, j]
            if not ok:
                return -(k + 1)
    return wrote
