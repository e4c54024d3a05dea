"""Independent references: a truncated-domain finite-difference eigensolver and Airy zeros.

Nothing here touches the integrator or the Weyl machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigs
from scipy.special import gamma

# Ai(0) and -Ai'(0)
AI0 = 0.355028053887817239
AIP0 = 0.258819403792806798
TAIL_DECAY = math.exp(-10.0)


class OracleError(RuntimeError):
    """The truncated problem is not a faithful stand-in (eigenvector tail too large)."""


@dataclass(frozen=True)
class FDProblem:
    """Grid y_0..y_n on [0, L] with U(y) = 0 at 0 and y(L) = 0."""

    L: float
    n: int
    alpha0: complex = 1.0
    alpha1: complex = 0.0

    def __post_init__(self):
        if self.n < 100:
            raise ValueError("FDProblem needs n >= 100")
        if not self.L > 0:
            raise ValueError("FDProblem needs L > 0")
        if abs(self.alpha0) + abs(self.alpha1) == 0:
            raise ValueError("boundary form needs alpha0 or alpha1 nonzero")


class FDEigenvalues(list):
    """Richardson-extrapolated eigenvalues; ``errors`` holds |lam_n - lam_2n| / 3."""

    def __init__(self, values, errors, coarse, fine):
        super().__init__(values)
        self.errors = list(errors)
        self.coarse = list(coarse)
        self.fine = list(fine)


def _matrix(q, prob: FDProblem, n: int):
    h = prob.L / n
    x = np.linspace(0.0, prob.L, n + 1)[1:-1]
    qx = np.asarray(q(x), dtype=complex) * np.ones_like(x)
    main = 2.0 / h ** 2 + qx
    upper = np.full(n - 2, -1.0 / h ** 2, dtype=complex)
    lower = upper.copy()
    a0, a1 = complex(prob.alpha0), complex(prob.alpha1)
    if a1 != 0:
        # one-sided second-order y'(0) = (-3 y0 + 4 y1 - y2) / 2h eliminates y0
        c = a1 / (3.0 * a1 - 2.0 * h * a0)
        main[0] -= 4.0 * c / h ** 2
        upper[0] += c / h ** 2
    A = sp.diags([lower, main, upper], [-1, 0, 1], format="csc")
    return A, x


def _solve(q, prob, n, count):
    A, x = _matrix(q, prob, n)
    k = min(count + 4, A.shape[0] - 2)
    vals, vecs = eigs(A, k=k, sigma=0.0, which="LM")
    order = np.argsort(np.abs(vals))[:count]
    vals, vecs = vals[order], vecs[:, order]
    tail = max(1, int(0.02 * x.size))
    for j in range(vecs.shape[1]):
        v = np.abs(vecs[:, j])
        if v[-tail:].max() > TAIL_DECAY * v.max():
            raise OracleError(
                f"eigenvector {j} has not decayed by e^-10 before L = {prob.L:g}; enlarge L")
    return vals


def fd_eigenvalues(q, problem: FDProblem, count: int) -> FDEigenvalues:
    """The ``count`` eigenvalues of smallest modulus of -y'' + q y on [0, L].

    ``q`` is any vectorised callable (a Potential's ``q`` method works).
    Eigenvalues of the sparse tridiagonal matrix are taken by shift-invert
    about 0 on n and 2n grids; the returned values are (4 lam_2n - lam_n) / 3.
    """
    if count < 1:
        raise ValueError("count must be positive")
    q = getattr(q, "q", q)
    coarse = _solve(q, problem, problem.n, count)
    fine = _solve(q, problem, 2 * problem.n, count)
    # pair each fine value with the nearest coarse one
    used = set()
    vals, errs, cs = [], [], []
    for lf in fine:
        d = np.abs(coarse - lf)
        d[list(used)] = np.inf
        j = int(np.argmin(d))
        used.add(j)
        lc = coarse[j]
        vals.append(complex((4.0 * lf - lc) / 3.0))
        errs.append(float(abs(lc - lf) / 3.0))
        cs.append(complex(lc))
    return FDEigenvalues(vals, errs, cs, [complex(v) for v in fine])


# -- Airy function ----------------------------------------------------------------

def _series(t, order):
    """Maclaurin series of Ai and its first two derivatives (termwise)."""
    t = float(t)
    f = [0.0, 0.0, 0.0]
    g = [0.0, 0.0, 0.0]
    # f = sum t^(3k) 3^k (1/3)_k / (3k)!, g = sum t^(3k+1) 3^k (2/3)_k / (3k+1)!
    cf, cg = 1.0, 1.0  # coefficients of t^(3k), t^(3k+1)
    k = 0
    while True:
        e_f, e_g = 3 * k, 3 * k + 1
        tf = [cf * t ** e_f,
              cf * e_f * t ** (e_f - 1) if e_f >= 1 else 0.0,
              cf * e_f * (e_f - 1) * t ** (e_f - 2) if e_f >= 2 else 0.0]
        tg = [cg * t ** e_g, cg * e_g * t ** (e_g - 1),
              cg * e_g * (e_g - 1) * t ** (e_g - 2) if e_g >= 2 else 0.0]
        for i in range(3):
            f[i] += tf[i]
            g[i] += tg[i]
        mag = max(abs(tf[order]), abs(tg[order]))
        if k > 3 and mag < 1e-18 * max(abs(f[order]), abs(g[order]), 1e-300):
            break
        cf = cf / ((3 * k + 2) * (3 * k + 3))
        cg = cg / ((3 * k + 3) * (3 * k + 4))
        k += 1
        if k > 200:
            break
    return AI0 * f[order] - AIP0 * g[order]


def _u(k):
    return gamma(3 * k + 0.5) / (54.0 ** k * math.factorial(k) * gamma(k + 0.5))


def _v(k):
    return -(6 * k + 1) / (6 * k - 1) * _u(k)


def _asymptotic(t, deriv=False):
    """Large-|t| expansions of Ai (deriv False) or Ai' (deriv True), truncated at the smallest term."""
    c = _v if deriv else _u
    z = abs(t)
    zeta = 2.0 / 3.0 * z ** 1.5
    if t > 0:
        s, prev = 0.0, math.inf
        for k in range(60):
            term = (-1) ** k * c(k) / zeta ** k
            if abs(term) > prev:
                break
            s += term
            prev = abs(term)
        if deriv:
            return -z ** 0.25 * math.exp(-zeta) / (2.0 * math.sqrt(math.pi)) * s
        return math.exp(-zeta) / (2.0 * math.sqrt(math.pi) * z ** 0.25) * s
    p = q = 0.0
    prev = math.inf
    for k in range(60):
        term_p = (-1) ** k * c(2 * k) / zeta ** (2 * k)
        term_q = (-1) ** k * c(2 * k + 1) / zeta ** (2 * k + 1)
        if max(abs(term_p), abs(term_q)) > prev:
            break
        p += term_p
        q += term_q
        prev = max(abs(term_p), abs(term_q))
    ph = zeta - math.pi / 4.0
    if deriv:
        return z ** 0.25 * (math.sin(ph) * p - math.cos(ph) * q) / math.sqrt(math.pi)
    return (math.cos(ph) * p + math.sin(ph) * q) / (math.sqrt(math.pi) * z ** 0.25)


def airy_ai(t: float, order: int = 0) -> float:
    """Ai(t) or its first or second derivative.

    Maclaurin series (differentiated termwise) for |t| <= 6, asymptotic
    expansions beyond; the second derivative there is t Ai(t).
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if abs(t) <= 6.0:
        return _series(t, order)
    if order == 0:
        return _asymptotic(t)
    if order == 2:
        return t * _asymptotic(t)
    return _asymptotic(t, deriv=True)


def airy_zero(n: int) -> float:
    """n-th negative zero a_n of Ai by bisection (n <= 20), accurate to about 1e-12."""
    if not 1 <= n <= 20:
        raise ValueError("airy_zero supports 1 <= n <= 20")
    s = 3.0 * math.pi * (4 * n - 1) / 8.0
    guess = -s ** (2.0 / 3.0) * (1 + 5.0 / 48.0 * s ** -2 - 5.0 / 36.0 * s ** -4)
    lo, hi = guess - 0.25, guess + 0.25
    flo, fhi = airy_ai(lo), airy_ai(hi)
    if flo * fhi > 0:
        raise RuntimeError("Airy zero bracket failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = airy_ai(mid)
        if fm == 0 or hi - lo < 1e-14:
            return mid
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def airy_eigenvalues(count: int) -> list[complex]:
    """Dirichlet eigenvalues |a_n| e^{i pi/3} of -y'' + i x y on the half-line."""
    w = complex(math.cos(math.pi / 3), math.sin(math.pi / 3))
    return [abs(airy_zero(n)) * w for n in range(1, count + 1)]
