"""Integration of -y'' + (q - lam) y = 0 and of the first-order system for (y, y'/p)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .potential import BranchError, Potential, eval_p

MAX_STEPS = 2_000_000


class IntegrationError(RuntimeError):
    """The adaptive integrator could not complete the span."""


class StepSizeUnderflow(IntegrationError):
    """Step size fell below 1e-13 of the span (stiff or singular region)."""


@dataclass(frozen=True)
class ScalarState:
    x: float
    y: complex
    dy: complex


@dataclass(frozen=True)
class SystemState:
    x: float
    y1: complex
    y2: complex


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted steps of one solution, with cubic Hermite dense output.

    ``y`` holds (y, y') for scalar runs and (y1, y2) = (y, y'/p) for system
    runs; ``f`` holds the matching derivatives.  Samples are ordered in the
    integration direction.
    """

    x: np.ndarray
    y: np.ndarray
    f: np.ndarray
    lam: complex
    kind: str
    error_estimate: float
    wronskian: np.ndarray | None = None

    @property
    def direction(self) -> int:
        return 1 if self.x[-1] >= self.x[0] else -1

    @property
    def span(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def __call__(self, xq) -> np.ndarray:
        """Dense output at xq; shape (..., 2)."""
        xq = np.asarray(xq, dtype=float)
        x, y, f = self.x, self.y, self.f
        if self.direction < 0:
            x, y, f = x[::-1], y[::-1], f[::-1]
        flat = xq.ravel()
        lo, hi = x[0], x[-1]
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any(flat < lo - tol) or np.any(flat > hi + tol):
            raise ValueError("dense output requested outside the integrated span")
        if x.size == 1:
            return np.broadcast_to(y[0], flat.shape + (2,)).reshape(xq.shape + (2,))
        i = np.clip(np.searchsorted(x, flat, side="right") - 1, 0, x.size - 2)
        h = x[i + 1] - x[i]
        t = ((flat - x[i]) / h)[:, None]
        t2, t3 = t * t, t * t * t
        out = ((2 * t3 - 3 * t2 + 1) * y[i] + (t3 - 2 * t2 + t) * h[:, None] * f[i]
               + (-2 * t3 + 3 * t2) * y[i + 1] + (t3 - t2) * h[:, None] * f[i + 1])
        return out.reshape(xq.shape + (2,))

    def derivative(self, xq) -> np.ndarray:
        """Derivative of the dense output at xq; shape (..., 2)."""
        xq = np.asarray(xq, dtype=float)
        x, y, f = self.x, self.y, self.f
        if self.direction < 0:
            x, y, f = x[::-1], y[::-1], f[::-1]
        flat = xq.ravel()
        i = np.clip(np.searchsorted(x, flat, side="right") - 1, 0, max(x.size - 2, 0))
        h = x[i + 1] - x[i]
        t = ((flat - x[i]) / h)[:, None]
        t2 = t * t
        out = ((6 * t2 - 6 * t) / h[:, None] * y[i] + (3 * t2 - 4 * t + 1) * f[i]
               + (-6 * t2 + 6 * t) / h[:, None] * y[i + 1] + (3 * t2 - 2 * t) * f[i + 1])
        return out.reshape(xq.shape + (2,))

    def state_at(self, x: float):
        v = self(float(x))
        if self.kind == "scalar":
            return ScalarState(float(x), complex(v[0]), complex(v[1]))
        return SystemState(float(x), complex(v[0]), complex(v[1]))

    @property
    def end(self):
        v = self.y[-1]
        if self.kind == "scalar":
            return ScalarState(float(self.x[-1]), complex(v[0]), complex(v[1]))
        return SystemState(float(self.x[-1]), complex(v[0]), complex(v[1]))


def _raise_status(status, x_last, kind):
    if status == K.STEP_UNDERFLOW:
        raise StepSizeUnderflow(f"step size underflow near x = {x_last:g} ({kind})")
    if status == K.BRANCH_FAILURE:
        raise BranchError(f"p_lambda hits the branch cut near x = {x_last:g}")
    if status == K.MAX_STEPS:
        raise IntegrationError(f"step budget exhausted near x = {x_last:g}")
    if status == K.NONFINITE:
        raise IntegrationError(f"non-finite solution near x = {x_last:g}")


def _breakpoints(pot, x_from, x_to):
    kn = pot.knots
    lo, hi = min(x_from, x_to), max(x_from, x_to)
    kn = kn[(kn > lo) & (kn < hi)]
    if x_to < x_from:
        kn = kn[::-1]
    return np.ascontiguousarray(kn, dtype=np.float64)


def _run(pot, lam, x_from, x_to, y0, tol, mode, qr=False, r0=None, h_init=0.0):
    if not tol > 0:
        raise ValueError("tol must be positive")
    y0 = np.ascontiguousarray(y0, dtype=np.complex128)
    if r0 is None:
        r0 = np.array([1.0, 0.0, 1.0], dtype=np.complex128)
    res = K.integrate(mode, *pot.kernel_args(), complex(lam), float(x_from), float(x_to),
                      y0, np.ascontiguousarray(r0, dtype=np.complex128), float(tol),
                      bool(qr), _breakpoints(pot, x_from, x_to), float(h_init), MAX_STEPS)
    status, xs, ys, fs, dets, err, y_end, r_end = res
    if status != K.OK:
        x_last = xs[-1] if xs.size else x_from
        _raise_status(status, x_last, "scalar" if mode == K.MODE_SCALAR else "system")
    return xs, ys, fs, dets, err, y_end, r_end


def _as_pair(init, kind):
    if isinstance(init, ScalarState):
        return np.array([[init.y], [init.dy]])
    if isinstance(init, SystemState):
        return np.array([[init.y1], [init.y2]])
    a, b = init
    return np.array([[a], [b]], dtype=np.complex128)


def integrate_scalar(pot: Potential, lam: complex, x_from: float, x_to: float,
                     init, tol: float = 1e-10) -> Trajectory:
    """Solve -y'' + (q - lam) y = 0 with (y, y')(x_from) = init."""
    xs, ys, fs, _, err, _, _ = _run(pot, lam, x_from, x_to, _as_pair(init, "scalar"),
                                    tol, K.MODE_SCALAR)
    return Trajectory(xs, ys[:, :, 0], fs[:, :, 0], complex(lam), "scalar", err)


def integrate_system(pot: Potential, lam: complex, x_from: float, x_to: float,
                     init, tol: float = 1e-10) -> Trajectory:
    """Solve y1' = p y2, y2' = p y1 - (p'/p) y2 with (y1, y2)(x_from) = init."""
    xs, ys, fs, _, err, _, _ = _run(pot, lam, x_from, x_to, _as_pair(init, "system"),
                                    tol, K.MODE_SYSTEM)
    return Trajectory(xs, ys[:, :, 0], fs[:, :, 0], complex(lam), "system", err)


class FundamentalRun:
    """Joint integration of U, V (U(anchor) = (0, 1), V(anchor) = (1, 0)).

    The two columns are carried in orthonormalised form, so the pair can be
    extended segment by segment far past the point where U and V become
    numerically parallel while det[U V] stays accurate.
    """

    def __init__(self, pot: Potential, lam: complex, anchor: float, tol: float = 1e-10):
        self.pot = pot
        self.lam = complex(lam)
        self.anchor = float(anchor)
        self.tol = float(tol)
        self._q = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
        self._r = np.array([1.0, 0.0, 1.0], dtype=np.complex128)
        self._h = 0.0
        self.x = self.anchor
        self._chunks = []
        self.error_estimate = 0.0
        xs = np.array([self.anchor])
        ys = self._q[None].copy()
        self._chunks.append((xs, ys, None, np.array([-1.0 + 0j])))

    def advance(self, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Integrate on to b; returns U(b), V(b) as length-2 arrays."""
        if b < self.x:
            raise ValueError("FundamentalRun only moves forward")
        if b > self.x:
            xs, ys, fs, dets, err, q_end, r_end = _run(
                self.pot, self.lam, self.x, b, self._q, self.tol, K.MODE_SYSTEM,
                qr=True, r0=self._r, h_init=self._h)
            if len(xs) > 1:
                self._h = float(xs[-1] - xs[-2])
            self._q, self._r = q_end, r_end
            self.error_estimate += err
            self._chunks.append((xs[1:], ys[1:], fs[1:], dets[1:]))
            if len(self._chunks) == 2:
                # first real chunk supplies the derivative at the anchor
                self._first_f = fs[0]
            self.x = float(b)
        U, V = self.state()
        return U, V

    def state(self):
        ys = self._chunks[-1][1]
        return ys[-1][:, 0].copy(), ys[-1][:, 1].copy()

    @property
    def wronskian_end(self) -> complex:
        return complex(self._chunks[-1][3][-1])

    def trajectories(self) -> tuple[Trajectory, Trajectory]:
        if len(self._chunks) < 2:
            raise ValueError("nothing integrated yet")
        xs = np.concatenate([c[0] for c in self._chunks])
        ys = np.concatenate([c[1] for c in self._chunks])
        fs = np.concatenate([self._first_f[None]] + [c[2] for c in self._chunks[1:]])
        dets = np.concatenate([c[3] for c in self._chunks])
        U = Trajectory(xs, ys[:, :, 0], fs[:, :, 0], self.lam, "system",
                       self.error_estimate, dets)
        V = Trajectory(xs, ys[:, :, 1], fs[:, :, 1], self.lam, "system",
                       self.error_estimate, dets)
        return U, V


def integrate_fundamental(pot: Potential, lam: complex, anchor: float, b: float,
                          tol: float = 1e-10) -> tuple[Trajectory, Trajectory]:
    """U, V on [anchor, b] from a single joint run (see FundamentalRun)."""
    run = FundamentalRun(pot, lam, anchor, tol)
    run.advance(b)
    return run.trajectories()


def wronskian_drift(U: Trajectory, V: Trajectory, pot: Potential, lam: complex,
                    anchor: float, b: float) -> float:
    """Relative deviation of det[U V](b) from -p(anchor)/p(b).

    Pairs produced by one joint run use their factored determinant; otherwise
    the determinant is formed from the dense output, which is only meaningful
    while U and V remain numerically independent.
    """
    expected = -complex(eval_p(pot, lam, anchor)) / complex(eval_p(pot, lam, b))
    if U.wronskian is not None and U.wronskian is V.wronskian:
        k = int(np.argmin(np.abs(U.x - b)))
        if abs(U.x[k] - b) > 1e-12 * max(1.0, abs(b)):
            raise ValueError("b is not a sample point of the joint run")
        det = complex(U.wronskian[k])
    else:
        u = U(b)
        v = V(b)
        det = complex(u[0] * v[1] - v[0] * u[1])
    return abs(det - expected) / abs(expected)


def _nodes(traj: Trajectory, a: float, b: float, sub: int = 8):
    """Simpson nodes/weights on [a, b] refining every accepted step ``sub`` times."""
    lo, hi = min(a, b), max(a, b)
    xs = np.sort(traj.x)
    xs = xs[(xs > lo) & (xs < hi)]
    edges = np.concatenate([[lo], xs, [hi]])
    edges = edges[np.concatenate([[True], np.diff(edges) > 0])]
    if sub % 2:
        sub += 1
    t = np.linspace(0.0, 1.0, sub + 1)
    w_ref = np.ones(sub + 1)
    w_ref[1:-1:2] = 4.0
    w_ref[2:-1:2] = 2.0
    w_ref /= 3.0 * sub
    h = np.diff(edges)
    nodes = edges[:-1, None] + h[:, None] * t[None, :]
    weights = h[:, None] * w_ref[None, :]
    return nodes.ravel(), weights.ravel()


def _system_terms(traj, pot, lam, nodes):
    y = traj(nodes)
    y1, y2 = y[..., 0], y[..., 1]
    p = eval_p(pot, lam, nodes)
    dlog = pot.dq(nodes) / (2.0 * (pot.q(nodes) - lam))
    return y1, y2, p, dlog


def energy_identity_residual(Y: Trajectory, pot: Potential, lam: complex,
                             anchor: float, b: float) -> float:
    """Mismatch of Re y1 conj(y2) |_a^b against the integral of the real-part identity.

    The absolute mismatch is divided by the total mass of the integrand
    (|Re p|(|y1|^2+|y2|^2) + |p'/p||y1 y2|) so that exponentially large
    solutions are judged on the same footing as O(1) ones; a zero
    trajectory returns 0.
    """
    if Y.kind != "system":
        raise ValueError("energy identity needs a system trajectory")
    nodes, w = _nodes(Y, anchor, b)
    y1, y2, p, dlog = _system_terms(Y, pot, lam, nodes)
    e = np.abs(y1) ** 2 + np.abs(y2) ** 2
    integrand = p.real * e - (dlog * y2 * np.conj(y1)).real
    mass = np.abs(p.real) * e + np.abs(dlog) * np.abs(y1) * np.abs(y2)
    ya, yb = Y(anchor), Y(b)
    lhs = (yb[0] * np.conj(yb[1])).real - (ya[0] * np.conj(ya[1])).real
    rhs = float(np.sum(w * integrand))
    scale = float(np.sum(w * mass)) + abs((ya[0] * np.conj(ya[1])).real)
    if scale == 0.0:
        return 0.0
    return abs(lhs - rhs) / scale


def energy_inequality(Y: Trajectory, pot: Potential, lam: complex, anchor: float,
                      b: float, C: float | None = None) -> dict:
    """Discrete form of  Re y1 conj(y2)|_a^b >= int rho (|y1|^2+|y2|^2) >= C int(...).

    Returns the three quantities and the ratios rho-part/boundary and
    C-part/rho-part (each must stay <= 1 up to quadrature slack).
    """
    nodes, w = _nodes(Y, anchor, b)
    y1, y2, p, dlog = _system_terms(Y, pot, lam, nodes)
    e = np.abs(y1) ** 2 + np.abs(y2) ** 2
    weight = p.real - 0.5 * np.abs(dlog)
    rho_part = float(np.sum(w * weight * e))
    boundary = float(((Y(b)[0] * np.conj(Y(b)[1])).real
                      - (Y(anchor)[0] * np.conj(Y(anchor)[1])).real))
    out = {"boundary": boundary, "rho_integral": rho_part,
           "ratio_rho_to_boundary": rho_part / boundary if boundary else 0.0}
    if C is not None:
        c_part = C * float(np.sum(w * e))
        out["C_integral"] = c_part
        out["ratio_C_to_rho"] = c_part / rho_part if rho_part else 0.0
    return out


def quadrature(traj: Trajectory, a: float, b: float, fn) -> complex:
    """Integrate fn(x, state) over [a, b] using the trajectory's Simpson nodes."""
    nodes, w = _nodes(traj, a, b)
    return np.sum(w * fn(nodes, traj(nodes)))
