"""Compiled inner loops: potential evaluation and the Dormand-Prince stepper.

Every function here is plain Python over ``math``/``cmath``/numpy scalars so
that it runs unchanged with or without numba.  Set ``HALFLINE_WEYL_NO_JIT=1``
to force the interpreted path (slow, but handy for debugging and for the
benchmark in ``benchmarks/bench_kernels.py``).
"""

import cmath
import math
import os

import numpy as np

_FLAG = os.environ.get("HALFLINE_WEYL_NO_JIT", "").strip().lower()
USE_JIT = _FLAG not in ("1", "true", "yes", "on")

if USE_JIT:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dependency
        USE_JIT = False

if USE_JIT:
    kernel = njit(cache=True, nogil=True)
else:
    def kernel(fn):
        return fn


# potential families understood by the kernels
FAM_CONSTANT = 0
FAM_MONOMIAL = 1
FAM_POLYNOMIAL = 2
FAM_TABULATED = 3

# integration modes
MODE_SCALAR = 0   # (y, y')
MODE_SYSTEM = 1   # (y, y'/p)

# integrator status codes
OK = 0
STEP_UNDERFLOW = 2
BRANCH_FAILURE = 3
MAX_STEPS = 4
NONFINITE = 5


@kernel
def _tab_value(tx, tq, tdq, x):
    n = tx.shape[0]
    if x <= tx[0]:
        return tq[0]
    if x >= tx[n - 1]:
        return tq[n - 1]
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tx[mid] <= x:
            lo = mid
        else:
            hi = mid
    h = tx[hi] - tx[lo]
    t = (x - tx[lo]) / h
    t2 = t * t
    t3 = t2 * t
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * tq[lo]
            + (t3 - 2.0 * t2 + t) * h * tdq[lo]
            + (-2.0 * t3 + 3.0 * t2) * tq[hi]
            + (t3 - t2) * h * tdq[hi])


@kernel
def q_dq(fam, par, tx, tq, tdq, x):
    """Return (q(x), q'(x)) for the encoded potential."""
    if fam == FAM_CONSTANT:
        return par[0], 0j
    if fam == FAM_MONOMIAL:
        # par = [coef, alpha, theta]
        alpha = par[1].real
        ph = par[0] * cmath.exp(1j * par[2].real)
        if x == 0.0:
            if alpha == 1.0:
                return 0j, ph
            if alpha > 1.0:
                return 0j, 0j
            return 0j, complex(math.inf, 0.0)
        xa = x ** alpha
        return ph * xa, ph * alpha * xa / x
    if fam == FAM_POLYNOMIAL:
        q = 0j
        dq = 0j
        for k in range(par.shape[0] - 1, -1, -1):
            dq = dq * x + q
            q = q * x + par[k]
        return q, dq
    # tabulated: monotone cubic values, central difference of the interpolant
    q = _tab_value(tx, tq, tdq, x)
    d = 1e-6 * max(1.0, abs(x))
    lo = x - d
    hi = x + d
    if lo < tx[0]:
        lo = x
    if hi > tx[tx.shape[0] - 1]:
        hi = x
    if hi == lo:
        return q, 0j
    dq = (_tab_value(tx, tq, tdq, hi) - _tab_value(tx, tq, tdq, lo)) / (hi - lo)
    return q, dq


@kernel
def eval_q_array(fam, par, tx, tq, tdq, xs):
    n = xs.shape[0]
    q = np.empty(n, dtype=np.complex128)
    dq = np.empty(n, dtype=np.complex128)
    for i in range(n):
        a, b = q_dq(fam, par, tx, tq, tdq, xs[i])
        q[i] = a
        dq[i] = b
    return q, dq


@kernel
def _coeffs(mode, fam, par, tx, tq, tdq, lam, x):
    # y' = [[0, a12], [a21, a22]] y ; last value flags a branch failure
    q, dq = q_dq(fam, par, tx, tq, tdq, x)
    z = q - lam
    if mode == MODE_SCALAR:
        return 1.0 + 0j, z, 0j, True
    if z.imag == 0.0 and z.real <= 0.0:
        return 0j, 0j, 0j, False
    p = cmath.sqrt(z)
    return p, p, -dq / (2.0 * z), True


@kernel
def _rhs(mode, fam, par, tx, tq, tdq, lam, x, y, out):
    a12, a21, a22, ok = _coeffs(mode, fam, par, tx, tq, tdq, lam, x)
    for j in range(y.shape[1]):
        y0 = y[0, j]
        y1 = y[1, j]
        out[0, j] = a12 * y1
        out[1, j] = a21 * y0 + a22 * y1
    return ok


@kernel
def _orthonormalize(y, k):
    """Gram-Schmidt on the two columns of y (in place); returns r11, r12, r22.

    k holds A @ y on entry and A @ Q on exit, so FSAL survives the rescale.
    """
    r11 = math.sqrt(abs(y[0, 0]) ** 2 + abs(y[1, 0]) ** 2)
    y[0, 0] /= r11
    y[1, 0] /= r11
    r12 = y[0, 0].conjugate() * y[0, 1] + y[1, 0].conjugate() * y[1, 1]
    y[0, 1] -= r12 * y[0, 0]
    y[1, 1] -= r12 * y[1, 0]
    r22 = math.sqrt(abs(y[0, 1]) ** 2 + abs(y[1, 1]) ** 2)
    y[0, 1] /= r22
    y[1, 1] /= r22
    for i in range(2):
        k[i, 0] /= r11
        k[i, 1] = (k[i, 1] - k[i, 0] * r12) / r22
    return r11 + 0j, r12, r22 + 0j


# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


@kernel
def integrate(mode, fam, par, tx, tq, tdq, lam, x0, x1, y0, r0, tol, qr,
              brk, h_init, max_steps):
    """Adaptive DOPRI5 from x0 to x1 (either direction).

    y0 is a (2, m) block of columns.  When ``qr`` is set (m == 2) the columns
    are re-orthonormalised after every accepted step and the triangular
    factor is accumulated, starting from r0 = (r11, r12, r22); the stored
    samples are the unfactored solution Q @ R and ``dets`` carries
    det(Q) * r11 * r22, which stays accurate when the columns become
    numerically parallel.

    Returns (status, xs, ys, fs, dets, err_acc, y_end, r_end).
    """
    m = y0.shape[1]
    span = x1 - x0
    sgn = 1.0 if span >= 0.0 else -1.0
    total = abs(span)
    hmin = 1e-13 * max(total, 1e-300)

    cap = 256
    xs = np.empty(cap, dtype=np.float64)
    ys = np.empty((cap, 2, m), dtype=np.complex128)
    fs = np.empty((cap, 2, m), dtype=np.complex128)
    dets = np.empty(cap, dtype=np.complex128)

    y = y0.copy()
    r11 = r0[0]
    r12 = r0[1]
    r22 = r0[2]
    k1 = np.empty((2, m), dtype=np.complex128)
    k2 = np.empty((2, m), dtype=np.complex128)
    k3 = np.empty((2, m), dtype=np.complex128)
    k4 = np.empty((2, m), dtype=np.complex128)
    k5 = np.empty((2, m), dtype=np.complex128)
    k6 = np.empty((2, m), dtype=np.complex128)
    k7 = np.empty((2, m), dtype=np.complex128)
    yt = np.empty((2, m), dtype=np.complex128)
    yn = np.empty((2, m), dtype=np.complex128)

    x = x0
    if not _rhs(mode, fam, par, tx, tq, tdq, lam, x, y, k1):
        return BRANCH_FAILURE, xs[:0], ys[:0], fs[:0], dets[:0], 0.0, y, r0

    # record the initial sample
    n = 0
    xs[0] = x
    for i in range(2):
        if qr:
            ys[0, i, 0] = y[i, 0] * r11
            ys[0, i, 1] = y[i, 0] * r12 + y[i, 1] * r22
            fs[0, i, 0] = k1[i, 0] * r11
            fs[0, i, 1] = k1[i, 0] * r12 + k1[i, 1] * r22
        else:
            for j in range(m):
                ys[0, i, j] = y[i, j]
                fs[0, i, j] = k1[i, j]
    if m == 2:
        if qr:
            dets[0] = (y[0, 0] * y[1, 1] - y[0, 1] * y[1, 0]) * r11 * r22
        else:
            dets[0] = y[0, 0] * y[1, 1] - y[0, 1] * y[1, 0]
    else:
        dets[0] = 0j
    n = 1

    if total == 0.0:
        return OK, xs[:1], ys[:1], fs[:1], dets[:1], 0.0, y, r0

    nb = brk.shape[0]
    ib = 0
    while ib < nb and sgn * (brk[ib] - x) <= 0.0:
        ib += 1

    h = h_init
    if h <= 0.0:
        a12, a21, a22, ok = _coeffs(mode, fam, par, tx, tq, tdq, lam, x)
        scale = math.sqrt(abs(a21)) + abs(a22) + 1.0
        h = min(total, 0.05 / scale)
    err_prev = 1e-4
    err_acc = 0.0
    rejected = False
    steps = 0

    while sgn * (x1 - x) > 0.0:
        steps += 1
        if steps > max_steps:
            return (MAX_STEPS, xs[:n], ys[:n], fs[:n], dets[:n], err_acc, y,
                    np.array([r11, r12, r22]))
        last = False
        target = x1
        if ib < nb:
            target = brk[ib]
        h_try = h
        if h >= abs(target - x):
            h = abs(target - x)
            last = True
        if h < hmin and not last:
            return (STEP_UNDERFLOW, xs[:n], ys[:n], fs[:n], dets[:n], err_acc, y,
                    np.array([r11, r12, r22]))
        hs = sgn * h

        ok = True
        for i in range(2):
            for j in range(m):
                yt[i, j] = y[i, j] + hs * A21 * k1[i, j]
        ok = ok and _rhs(mode, fam, par, tx, tq, tdq, lam, x + C2 * hs, yt, k2)
        for i in range(2):
            for j in range(m):
                yt[i, j] = y[i, j] + hs * (A31 * k1[i, j] + A32 * k2[i, j])
        ok = ok and _rhs(mode, fam, par, tx, tq, tdq, lam, x + C3 * hs, yt, k3)
        for i in range(2):
            for j in range(m):
                yt[i, j] = y[i, j] + hs * (A41 * k1[i, j] + A42 * k2[i, j] + A43 * k3[i, j])
        ok = ok and _rhs(mode, fam, par, tx, tq, tdq, lam, x + C4 * hs, yt, k4)
        for i in range(2):
            for j in range(m):
                yt[i, j] = y[i, j] + hs * (A51 * k1[i, j] + A52 * k2[i, j]
                                           + A53 * k3[i, j] + A54 * k4[i, j])
        ok = ok and _rhs(mode, fam, par, tx, tq, tdq, lam, x + C5 * hs, yt, k5)
        for i in range(2):
            for j in range(m):
                yt[i, j] = y[i, j] + hs * (A61 * k1[i, j] + A62 * k2[i, j] + A63 * k3[i, j]
                                           + A64 * k4[i, j] + A65 * k5[i, j])
        ok = ok and _rhs(mode, fam, par, tx, tq, tdq, lam, x + hs, yt, k6)
        for i in range(2):
            for j in range(m):
                yn[i, j] = y[i, j] + hs * (B1 * k1[i, j] + B3 * k3[i, j] + B4 * k4[i, j]
                                           + B5 * k5[i, j] + B6 * k6[i, j])
        xn = x + hs
        if last:
            xn = target
        ok = ok and _rhs(mode, fam, par, tx, tq, tdq, lam, xn, yn, k7)
        if not ok:
            return (BRANCH_FAILURE, xs[:n], ys[:n], fs[:n], dets[:n], err_acc, y,
                    np.array([r11, r12, r22]))

        err = 0.0
        for j in range(m):
            na = math.sqrt(abs(y[0, j]) ** 2 + abs(y[1, j]) ** 2)
            nb_ = math.sqrt(abs(yn[0, j]) ** 2 + abs(yn[1, j]) ** 2)
            sc = tol * max(na, nb_, 1e-300)
            for i in range(2):
                e = hs * (E1 * k1[i, j] + E3 * k3[i, j] + E4 * k4[i, j]
                          + E5 * k5[i, j] + E6 * k6[i, j] + E7 * k7[i, j])
                v = abs(e) / sc
                if v > err:
                    err = v
        if not math.isfinite(err):
            if h <= hmin:
                return (NONFINITE, xs[:n], ys[:n], fs[:n], dets[:n], err_acc, y,
                        np.array([r11, r12, r22]))
            h *= 0.2
            rejected = True
            continue

        if err <= 1.0:
            x = xn
            for i in range(2):
                for j in range(m):
                    y[i, j] = yn[i, j]
                    k1[i, j] = k7[i, j]
            if last and ib < nb and target != x1:
                ib += 1
            err_acc += err * tol
            if qr:
                s11, s12, s22 = _orthonormalize(y, k1)
                r12 = s11 * r12 + s12 * r22
                r11 = s11 * r11
                r22 = s22 * r22
            if n == xs.shape[0]:
                cap2 = 2 * n
                xs2 = np.empty(cap2, dtype=np.float64)
                ys2 = np.empty((cap2, 2, m), dtype=np.complex128)
                fs2 = np.empty((cap2, 2, m), dtype=np.complex128)
                dets2 = np.empty(cap2, dtype=np.complex128)
                xs2[:n] = xs[:n]
                ys2[:n] = ys[:n]
                fs2[:n] = fs[:n]
                dets2[:n] = dets[:n]
                xs = xs2
                ys = ys2
                fs = fs2
                dets = dets2
            xs[n] = x
            for i in range(2):
                if qr:
                    ys[n, i, 0] = y[i, 0] * r11
                    ys[n, i, 1] = y[i, 0] * r12 + y[i, 1] * r22
                    fs[n, i, 0] = k1[i, 0] * r11
                    fs[n, i, 1] = k1[i, 0] * r12 + k1[i, 1] * r22
                else:
                    for j in range(m):
                        ys[n, i, j] = y[i, j]
                        fs[n, i, j] = k1[i, j]
            if m == 2:
                d = y[0, 0] * y[1, 1] - y[0, 1] * y[1, 0]
                if qr:
                    d = d * r11 * r22
                dets[n] = d
            else:
                dets[n] = 0j
            n += 1
            # PI step-size controller
            if err == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * err ** (-0.7 / 5.0) * max(err_prev, 1e-4) ** (0.4 / 5.0)
                fac = min(5.0, max(0.2, fac))
            if rejected:
                fac = min(fac, 1.0)
            h = h * fac
            if last:
                # a step clipped to a breakpoint says little about the scale
                h = max(h, h_try)
            err_prev = err
            rejected = False
        else:
            fac = max(0.2, 0.9 * err ** (-1.0 / 5.0))
            h = h * fac
            rejected = True

    return (OK, xs[:n], ys[:n], fs[:n], dets[:n], err_acc, y,
            np.array([r11, r12, r22]))
