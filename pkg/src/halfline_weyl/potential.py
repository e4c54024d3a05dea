"""Complex potentials, the root branch p = sqrt(q - lam), and condition checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _kernels as K

DEFAULT_GRID = 2049


class BranchError(ValueError):
    """q(x) - lam sits on the closed negative real axis, so no root has Re p > 0."""


class ConditionError(ValueError):
    """Condition A fails on a window where an operation requires it."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True, eq=False)
class Potential:
    """A potential q on [0, inf) in one of the supported families.

    Use the classmethod constructors; the private arrays are the encoding
    consumed by the compiled kernels.
    """

    family: str
    params: dict
    x_s: float = 0.0
    _fam: int = field(default=K.FAM_CONSTANT, repr=False)
    _par: np.ndarray = field(default=None, repr=False)
    _tx: np.ndarray = field(default=None, repr=False)
    _tq: np.ndarray = field(default=None, repr=False)
    _tdq: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        dummy_x = np.zeros(2)
        dummy_c = np.zeros(2, dtype=np.complex128)
        for name, default in (("_tx", dummy_x), ("_tq", dummy_c), ("_tdq", dummy_c)):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        if self._par is None:
            object.__setattr__(self, "_par", np.zeros(1, dtype=np.complex128))

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, c: complex) -> "Potential":
        c = complex(c)
        return cls("constant", {"c": c}, 0.0, K.FAM_CONSTANT,
                   np.array([c], dtype=np.complex128))

    @classmethod
    def monomial(cls, alpha: float, theta: float = 0.0, coef: complex = 1.0) -> "Potential":
        """q(x) = coef * x**alpha * exp(i*theta), alpha > 0."""
        if not alpha > 0:
            raise ValueError("monomial exponent must be positive")
        par = np.array([complex(coef), alpha, theta], dtype=np.complex128)
        return cls("monomial-phase", {"alpha": float(alpha), "theta": float(theta),
                                      "coef": complex(coef)},
                   0.0, K.FAM_MONOMIAL, par)

    @classmethod
    def complex_airy(cls) -> "Potential":
        """q(x) = i x."""
        return cls("complex-airy", {}, 0.0, K.FAM_POLYNOMIAL,
                   np.array([0.0, 1j], dtype=np.complex128))

    @classmethod
    def polynomial(cls, coeffs) -> "Potential":
        """q(x) = sum_k coeffs[k] x**k (ascending order, complex allowed)."""
        par = np.asarray(coeffs, dtype=np.complex128).ravel()
        if par.size == 0:
            raise ValueError("polynomial needs at least one coefficient")
        return cls("polynomial", {"coefficients": [complex(c) for c in par]},
                   0.0, K.FAM_POLYNOMIAL, par)

    @classmethod
    def tabulated(cls, x, q, x_s: float = 0.0) -> "Potential":
        """Monotone cubic interpolation of samples; constant beyond the table ends."""
        x = np.asarray(x, dtype=np.float64)
        q = np.asarray(q, dtype=np.complex128)
        if x.ndim != 1 or x.shape != q.shape or x.size < 2:
            raise ValueError("tabulated potential needs matching 1-d arrays of length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("tabulated abscissae must be strictly increasing")
        if not np.all(np.isfinite(q)):
            raise ValueError("tabulated values must be finite")
        slopes = (PchipInterpolator(x, q.real).derivative()(x)
                  + 1j * PchipInterpolator(x, q.imag).derivative()(x))
        return cls("tabulated", {"n": int(x.size)}, float(x_s), K.FAM_TABULATED,
                   np.zeros(1, dtype=np.complex128), x, q,
                   np.ascontiguousarray(slopes, dtype=np.complex128))

    # -- evaluation ---------------------------------------------------------

    @property
    def knots(self) -> np.ndarray:
        """Interior abscissae where the integrator should land exactly."""
        if self._fam == K.FAM_TABULATED:
            return self._tx
        return np.zeros(0)

    def kernel_args(self):
        return self._fam, self._par, self._tx, self._tq, self._tdq

    def _eval(self, x):
        x = np.asarray(x, dtype=np.float64)
        q, dq = K.eval_q_array(*self.kernel_args(), np.ascontiguousarray(x.ravel()))
        return q.reshape(x.shape), dq.reshape(x.shape)

    def q(self, x):
        return self._eval(x)[0][()]

    def dq(self, x):
        return self._eval(x)[1][()]

    def describe(self) -> dict:
        out = {"family": self.family}
        out.update(self.params)
        return out


def _on_cut(z):
    return (z.imag == 0.0) & (z.real <= 0.0)


def eval_p(pot: Potential, lam: complex, x):
    """Principal root of q(x) - lam; raises BranchError on the cut."""
    z = np.asarray(pot.q(x) - complex(lam))
    bad = _on_cut(z)
    if np.any(bad):
        where = np.atleast_1d(np.asarray(x, dtype=float))
        where = where[np.atleast_1d(bad)] if where.size > 1 else where
        raise BranchError(f"q(x) - lambda is a non-positive real at x = {where[0]:g}")
    p = np.sqrt(z.astype(np.complex128))
    return p[()] if p.ndim == 0 else p


def _p_terms(pot, lam, xs):
    """Return (Re p, |p'/p|, on_cut) on a grid without raising."""
    q, dq = pot._eval(xs)
    z = q - complex(lam)
    cut = _on_cut(z)
    p = np.sqrt(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        dlog = 0.5 * np.abs(dq / z)
    dlog = np.where(np.isfinite(dlog), dlog, np.inf)
    return p.real, dlog, cut


def rho(pot: Potential, lam: complex, x):
    """Weight Re p - |p'/p| / 2 with p = sqrt(q - lam)."""
    p = eval_p(pot, lam, x)
    q = np.asarray(pot.q(x) - complex(lam))
    dq = np.asarray(pot.dq(x))
    out = p.real - 0.25 * np.abs(dq / q)
    return out[()] if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ConditionReport:
    holds: bool
    C: float
    margin: float
    first_violation: float | None
    x_lo: float
    x_hi: float
    n_grid: int

    def as_dict(self) -> dict:
        return {"holds": self.holds, "C": self.C, "margin": self.margin,
                "first_violation": self.first_violation,
                "grid": {"x_lo": self.x_lo, "x_hi": self.x_hi, "n_grid": self.n_grid}}


def _report(residual, xs, C, x_lo, x_hi, n_grid):
    residual = np.where(np.isnan(residual), -np.inf, residual)
    margin = float(np.min(residual))
    bad = np.flatnonzero(residual < 0)
    first = float(xs[bad[0]]) if bad.size else None
    return ConditionReport(margin >= 0, float(C), margin, first, float(x_lo),
                           float(x_hi), int(n_grid))


def _grid(x_lo, x_hi, n_grid):
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    if x_hi < x_lo:
        raise ValueError("empty window")
    return np.linspace(float(x_lo), float(x_hi), int(n_grid))


def _rho_residual(pot, lam, xs, C, extra=0.0):
    re_p, dlog, cut = _p_terms(pot, lam, xs)
    res = re_p - (0.5 + extra) * dlog - C
    return np.where(cut, -np.inf, res)


def check_condition_A(pot: Potential, lam: complex, x_lo: float, x_hi: float,
                      C: float, n_grid: int = DEFAULT_GRID) -> ConditionReport:
    """Grid check of Re p >= C + |p'/p|/2 together with q - lam off the cut."""
    if x_lo < pot.x_s:
        raise ValueError("window starts before the smoothness point of the potential")
    xs = _grid(x_lo, x_hi, n_grid)
    return _report(_rho_residual(pot, lam, xs, C), xs, C, x_lo, x_hi, n_grid)


def check_condition_B(pot: Potential, lam: complex, x_lo: float, x_hi: float,
                      C: float, eps: float, n_grid: int = DEFAULT_GRID) -> ConditionReport:
    """Grid check of the stronger Re p >= C + (1/2 + eps)|p'/p|."""
    if x_lo < pot.x_s:
        raise ValueError("window starts before the smoothness point of the potential")
    xs = _grid(x_lo, x_hi, n_grid)
    return _report(_rho_residual(pot, lam, xs, C, extra=eps), xs, C, x_lo, x_hi, n_grid)


def theorem3_bound(kappa: float, delta: float) -> float:
    return 4.0 * delta * math.tan(kappa) ** 1.5 * math.sin(kappa / 2.0) if kappa < math.pi / 2 \
        else math.inf


def check_theorem3(pot: Potential, kappa: float, delta: float, x_lo: float, x_hi: float,
                   n_grid: int = DEFAULT_GRID) -> ConditionReport:
    """Check q in the sector Pi_kappa and |q'/q^(3/2)| below 4 delta tan^(3/2)k sin(k/2).

    The reported C is the bound; the margin is the smaller of the bound slack
    and the angular slack to the sector edge.
    """
    if not 0 < kappa <= math.pi / 2:
        raise ValueError("kappa must lie in (0, pi/2]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    xs = _grid(x_lo, x_hi, n_grid)
    q, dq = pot._eval(xs)
    bound = theorem3_bound(kappa, delta)
    absq = np.abs(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(dq) / absq ** 1.5
    ratio = np.where(absq == 0, np.inf, ratio)
    sector = (math.pi - kappa) - np.abs(np.angle(q))
    sector = np.where(absq == 0, -np.inf, sector)
    slack = bound - ratio if math.isfinite(bound) else np.full_like(ratio, np.inf)
    res = np.minimum(slack, sector)
    return _report(res, xs, bound, x_lo, x_hi, n_grid)


def find_anchor(pot: Potential, lam: complex, C: float, x_max: float,
                n_grid: int = DEFAULT_GRID) -> float | None:
    """Smallest grid point a with condition A holding on [a, x_max], else None."""
    xs = _grid(pot.x_s, x_max, n_grid)
    res = _rho_residual(pot, lam, xs, C)
    bad = np.flatnonzero(~(res >= 0))
    if bad.size == 0:
        return float(xs[0])
    if bad[-1] == xs.size - 1:
        return None
    return float(xs[bad[-1] + 1])


def anchor_cell(pot: Potential, x_max: float, n_grid: int = DEFAULT_GRID) -> float:
    return (x_max - pot.x_s) / (n_grid - 1)


@dataclass(frozen=True)
class RegionSample:
    lam: complex
    member: bool
    anchor: float | None
    margin: float | None


def lambda_grid(re_range, im_range, n_re: int, n_im: int) -> np.ndarray:
    re = np.linspace(re_range[0], re_range[1], n_re)
    im = np.linspace(im_range[0], im_range[1], n_im)
    return (re[None, :] + 1j * im[:, None]).ravel()


def sample_N_region(pot: Potential, lams, C: float, x_max: float,
                    n_grid: int = DEFAULT_GRID) -> list[RegionSample]:
    """Grid approximation of the set of lam for which condition A holds eventually.

    ``lams`` is any iterable of complex numbers (see ``lambda_grid``).  The
    margin is that of condition A on [anchor, x_max] for members.
    """
    out = []
    for lam in np.asarray(list(lams), dtype=np.complex128).ravel():
        a = find_anchor(pot, lam, C, x_max, n_grid)
        if a is None:
            out.append(RegionSample(complex(lam), False, None, None))
            continue
        rep = check_condition_A(pot, lam, a, x_max, C, n_grid)
        out.append(RegionSample(complex(lam), True, a, rep.margin))
    return out


def rho_growth(pot: Potential, lam: complex, x_lo: float, x_hi: float,
               n_windows: int = 6) -> dict:
    """Diagnostic for rho -> +inf: minima of rho over successive doubling windows.

    ``increasing`` is True when each window minimum strictly exceeds the
    previous one, which is the numerical hint that the resolvent is compact.
    """
    if x_lo <= 0:
        x_lo = max(x_hi * 2.0 ** -n_windows, 1e-3)
    edges = np.geomspace(x_lo, x_hi, n_windows + 1)
    mins = []
    for a, b in zip(edges[:-1], edges[1:]):
        xs = np.linspace(a, b, 257)
        re_p, dlog, cut = _p_terms(pot, lam, xs)
        r = np.where(cut, -np.inf, re_p - 0.5 * dlog)
        mins.append(float(np.min(r)))
    increasing = all(b > a for a, b in zip(mins[:-1], mins[1:]))
    return {"edges": edges.tolist(), "window_min_rho": mins, "increasing": increasing}


def decay_point(pot: Potential, lam: complex, x0: float, target: float,
                step: float = 0.01) -> float:
    """Smallest x >= x0 (on a fine grid) with int_{x0}^x Re p dx >= target."""
    if target <= 0:
        return float(x0)
    total = 0.0
    lo = float(x0)
    width = 1.0
    while True:
        xs = np.linspace(lo, lo + width, max(int(width / step), 16) + 1)
        re_p, _, cut = _p_terms(pot, lam, xs)
        if np.any(cut):
            raise BranchError(f"q(x) - lambda crosses the cut near x = {xs[np.argmax(cut)]:g}")
        seg = np.concatenate([[0.0], np.cumsum(0.5 * (re_p[1:] + re_p[:-1]) * np.diff(xs))])
        hit = np.flatnonzero(total + seg >= target)
        if hit.size:
            return float(xs[hit[0]])
        total += seg[-1]
        lo += width
        width = min(2.0 * width, 1e4)
        if lo > 1e9:
            raise ValueError("Re p too small to reach the requested decay")
