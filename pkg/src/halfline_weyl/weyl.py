"""Nested Weyl disks, the Weyl function mu(lam) and the L2 solution eta(x, lam)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .potential import (ConditionError, DEFAULT_GRID, Potential, anchor_cell,
                        check_condition_A, decay_point, eval_p, find_anchor)
from .propagate import (FundamentalRun, IntegrationError, Trajectory, _nodes,
                        integrate_scalar, integrate_system)

# C used when only the sign structure of condition A is asserted
ASSERT_C = 1e-12
# decay (in units of int Re p) of the tail shot beyond x_max
TAIL_SHOT = 18.0
# renormalise the backward tail whenever it has grown by about e^RENORM
RENORM = 200.0
# default distance (int Re p) from the anchor to x_max
DEFAULT_DECAY = 25.0


class DiskError(IntegrationError):
    """Re v1 conj(v2) <= 0 at the disk endpoint: condition A fails or the run is wrong."""


class NestingError(IntegrationError):
    """Consecutive Weyl disks are not nested within tolerance."""


@dataclass(frozen=True)
class WeylDisk:
    b: float
    center: complex
    radius: float


@dataclass(frozen=True, eq=False)
class WeylResult:
    lam: complex
    anchor: float
    theta: complex
    mu: complex
    disks: list
    converged: bool
    final_radius: float
    radius_tol: float = 0.0
    nesting_excess: float = 0.0

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "anchor": self.anchor, "theta": self.theta, "mu": self.mu,
                "converged": self.converged, "final_radius": self.final_radius,
                "radius_tol": self.radius_tol, "nesting_excess": self.nesting_excess,
                "n_disks": len(self.disks)}


def _disk_from(U, V, det):
    s = 1.0 / max(abs(V[0]), abs(V[1]))
    u1, u2 = U[0] * s, U[1] * s
    v1, v2 = V[0] * s, V[1] * s
    denom = 2.0 * (v1 * np.conj(v2)).real
    if not denom > 0 or not np.isfinite(denom):
        raise DiskError(f"Re v1 conj(v2) = {denom / 2:g} is not positive")
    center = -(u1 * np.conj(v2) + np.conj(v1) * u2) / denom
    radius = abs(det) * s * s / denom
    if not (np.isfinite(center) and np.isfinite(radius)):
        raise DiskError("disk parameters overflowed")
    return complex(center), float(radius)


def _assert_condition(pot, lam, anchor, b):
    rep = check_condition_A(pot, lam, anchor, b, ASSERT_C,
                            n_grid=max(DEFAULT_GRID, int(8 * (b - anchor)) + 1))
    if not rep.holds:
        raise ConditionError(
            f"condition A fails on [{anchor:g}, {b:g}] at x = {rep.first_violation}", rep)


def disk_at(pot: Potential, lam: complex, anchor: float, b: float, tol: float = 1e-10,
            verify: bool = True) -> WeylDisk:
    """Weyl disk at b for U(anchor) = (0, 1), V(anchor) = (1, 0).

    Center -(u1 conj v2 + conj v1 u2) / (2 Re v1 conj v2); radius
    |det[U V]| / (2 Re v1 conj v2).
    """
    if not b > anchor:
        raise ValueError("b must exceed the anchor")
    if verify:
        _assert_condition(pot, lam, anchor, b)
    run = FundamentalRun(pot, lam, anchor, tol)
    U, V = run.advance(b)
    center, radius = _disk_from(U, V, run.wronskian_end)
    return WeylDisk(float(b), center, radius)


def default_schedule(anchor: float, b_max: float, unit: float = 1.0):
    out = []
    k = 0
    while True:
        b = anchor + unit * 2.0 ** k
        if b >= b_max:
            out.append(float(b_max))
            return out
        out.append(b)
        k += 1


def weyl_theta(pot: Potential, lam: complex, anchor: float, radius_tol: float = 1e-10,
               b_max: float | None = None, b_schedule=None, tol: float = 1e-11,
               verify: bool = True, strict_nesting: bool = True) -> WeylResult:
    """Shrink the disks along the schedule until the radius is below radius_tol.

    theta is the last center and mu = theta / p(anchor).  Nesting is checked
    as |c2 - c1| <= R1 - R2 + 10 * nest_tol with nest_tol = max(tol, 1e-12 |c|).
    """
    lam = complex(lam)
    if not radius_tol > 0:
        raise ValueError("radius_tol must be positive")
    if b_max is None:
        b_max = anchor + 1024.0
    sched = list(b_schedule) if b_schedule is not None else default_schedule(anchor, b_max)
    sched = [b for b in sched if anchor < b <= b_max]
    if not sched:
        raise ValueError("empty b schedule")
    run = FundamentalRun(pot, lam, anchor, tol)
    disks = []
    excess = 0.0
    checked_to = anchor
    for b in sched:
        if verify and b > checked_to:
            _assert_condition(pot, lam, checked_to, b)
            checked_to = b
        U, V = run.advance(b)
        center, radius = _disk_from(U, V, run.wronskian_end)
        disk = WeylDisk(float(b), center, radius)
        if disks:
            prev = disks[-1]
            slack = 10.0 * max(tol, 1e-12 * max(1.0, abs(prev.center)))
            gap = abs(disk.center - prev.center) - (prev.radius - disk.radius)
            excess = max(excess, gap)
            if strict_nesting and gap > slack:
                raise NestingError(
                    f"disk at b={b:g} leaves the disk at b={prev.b:g} by {gap:.3g}")
        disks.append(disk)
        if disk.radius <= radius_tol:
            break
    last = disks[-1]
    theta = last.center
    mu = theta / complex(eval_p(pot, lam, anchor))
    return WeylResult(lam, float(anchor), theta, complex(mu), disks,
                      last.radius <= radius_tol, last.radius, radius_tol, max(excess, 0.0))


@dataclass(frozen=True, eq=False)
class WeylSolution:
    """eta on [0, x_max] normalised by eta(anchor) = mu, eta'(anchor) = 1.

    ``head`` is the backward scalar run anchor -> 0; ``tail`` is a list of
    (system trajectory, factor) pieces covering [anchor, x_max], each piece
    mapping to eta by eta = factor * y1, eta' = factor * p * y2.
    """

    lam: complex
    anchor: float
    x_max: float
    mu: complex
    weyl: WeylResult
    head: Trajectory | None
    tail: list
    continuity_error: float
    x: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)
    deta: np.ndarray = field(repr=False)
    norms: dict = field(default_factory=dict)
    pot: Potential | None = field(default=None, repr=False)

    @property
    def eta0(self) -> complex:
        return complex(self.eta[0])

    @property
    def deta0(self) -> complex:
        return complex(self.deta[0])

    def __call__(self, xq):
        """(eta, eta') at xq in [0, x_max]."""
        xq = np.asarray(xq, dtype=float)
        flat = xq.ravel()
        eta = np.empty(flat.shape, dtype=complex)
        deta = np.empty(flat.shape, dtype=complex)
        done = np.zeros(flat.shape, dtype=bool)
        if self.head is not None:
            m = flat <= self.anchor
            if np.any(m):
                v = self.head(flat[m])
                eta[m], deta[m] = v[:, 0], v[:, 1]
                done |= m
        for traj, fac in self.tail:
            lo, hi = traj.span[1], traj.span[0]
            m = (~done) & (flat >= lo) & (flat <= hi)
            if np.any(m):
                v = traj(flat[m])
                p = eval_p(self.pot, self.lam, flat[m])
                eta[m], deta[m] = fac * v[:, 0], fac * p * v[:, 1]
                done |= m
        if not np.all(done):
            raise ValueError("requested points outside [0, x_max]")
        return eta.reshape(xq.shape), deta.reshape(xq.shape)

    def tail_norms(self, x_hi: float | None = None) -> dict:
        """Quadratures over [anchor, x_hi] of |eta|^2, rho-weighted energy and |eta'|^2/|q - lam|."""
        x_hi = self.x_max if x_hi is None else float(x_hi)
        l2 = en = der = 0.0
        for traj, fac in self.tail:
            hi, lo = traj.span
            lo = max(lo, self.anchor)
            hi = min(hi, x_hi)
            if hi <= lo:
                continue
            nodes, w = _nodes(traj, lo, hi)
            v = traj(nodes) * fac
            q = self.pot.q(nodes) - self.lam
            p = np.sqrt(q)
            dlog = np.abs(self.pot.dq(nodes) / q) * 0.5
            rho = p.real - 0.5 * dlog
            a1 = np.abs(v[:, 0]) ** 2
            a2 = np.abs(v[:, 1]) ** 2
            l2 += float(np.sum(w * a1))
            en += float(np.sum(w * rho * (a1 + a2)))
            der += float(np.sum(w * a2 * np.abs(p) ** 2 / np.abs(q)))
        return {"l2": math.sqrt(l2), "rho_energy": en, "rho_norm": math.sqrt(max(en, 0.0)),
                "derivative_l2_weighted": math.sqrt(der)}


def _tail(pot, lam, anchor, x_max, tol):
    """Backward shot from well beyond x_max; returns pieces ordered from anchor outward."""
    x_far = decay_point(pot, lam, x_max, TAIL_SHOT)
    _assert_condition(pot, lam, anchor, x_far)
    # split [anchor, x_far] so each piece grows by about e^RENORM at most
    edges = [anchor]
    x = anchor
    while True:
        x = decay_point(pot, lam, x, RENORM)
        if x >= x_far:
            break
        edges.append(x)
    edges.append(x_far)
    pieces = []
    state = (1.0 + 0j, -1.0 + 0j)
    log_scale = 0.0
    for hi, lo in zip(edges[::-1][:-1], edges[::-1][1:]):
        traj = integrate_system(pot, lam, hi, lo, state, tol)
        pieces.append((traj, log_scale))
        y1, y2 = traj.y[-1]
        s = max(abs(y1), abs(y2))
        state = (y1 / s, y2 / s)
        log_scale -= math.log(s)
    pieces.reverse()
    return pieces


def weyl_solution(pot: Potential, lam: complex, anchor: float, x_max: float | None = None,
                  tol: float = 1e-11, radius_tol: float = 1e-10, weyl: WeylResult | None = None,
                  require_converged: bool = True) -> WeylSolution:
    """Build eta from the converged disk center.

    The tail on [anchor, x_max] comes from a backward shot started where
    the solution has decayed by e^-18 beyond x_max, scaled so that
    eta'(anchor) = 1; its value at the anchor is compared with mu
    (``continuity_error``, relative to |mu| + 1).  [0, anchor] comes from
    the scalar equation integrated backwards from (mu, 1).
    """
    lam = complex(lam)
    if weyl is None:
        weyl = weyl_theta(pot, lam, anchor, radius_tol=radius_tol, tol=tol)
    if require_converged and not weyl.converged:
        raise IntegrationError(
            f"Weyl disks did not converge (final radius {weyl.final_radius:.3g})")
    mu = weyl.mu
    if x_max is None:
        x_max = max(decay_point(pot, lam, anchor, DEFAULT_DECAY), anchor + 1.0)
    x_max = float(x_max)
    if x_max < anchor:
        raise ValueError("x_max must not be smaller than the anchor")

    head = None
    if anchor > 0:
        head = integrate_scalar(pot, lam, anchor, 0.0, (mu, 1.0 + 0j), tol)

    raw = _tail(pot, lam, anchor, x_max, tol)
    y1a, y2a = raw[0][0].y[-1]
    pa = complex(eval_p(pot, lam, anchor))
    c0 = 1.0 / (pa * y2a)
    tail = []
    for traj, log_s in raw:
        d = raw[0][1] - log_s
        fac = c0 * math.exp(d) if d > -745 else 0.0
        tail.append((traj, complex(fac)))
    cont = abs(c0 * y1a - mu) / (1.0 + abs(mu))

    # samples on [0, x_max]
    xs_parts, eta_parts, deta_parts = [], [], []
    if head is not None:
        hx = head.x[::-1]
        xs_parts.append(hx)
        eta_parts.append(head.y[::-1, 0])
        deta_parts.append(head.y[::-1, 1])
    for traj, fac in tail:
        tx = traj.x[::-1]
        keep = tx <= x_max
        if xs_parts and xs_parts[-1].size:
            keep &= tx > xs_parts[-1][-1]
        tx = tx[keep]
        ty = traj.y[::-1][keep]
        p = eval_p(pot, lam, tx) if tx.size else np.zeros(0, complex)
        xs_parts.append(tx)
        eta_parts.append(fac * ty[:, 0])
        deta_parts.append(fac * p * ty[:, 1])
    x = np.concatenate(xs_parts)
    eta = np.concatenate(eta_parts)
    deta = np.concatenate(deta_parts)

    sol = WeylSolution(lam, float(anchor), x_max, mu, weyl, head, tail, float(cont),
                       x, eta, deta, {}, pot)
    # closing sample at x_max
    if x[-1] < x_max:
        e, d = sol(x_max)
        x = np.append(x, x_max)
        eta = np.append(eta, e)
        deta = np.append(deta, d)
        object.__setattr__(sol, "x", x)
        object.__setattr__(sol, "eta", eta)
        object.__setattr__(sol, "deta", deta)
    object.__setattr__(sol, "norms", sol.tail_norms())
    return sol


def boundary_values(pot: Potential, lam: complex, anchor: float, tol: float = 1e-11,
                    radius_tol: float = 1e-10) -> tuple[complex, complex, WeylResult]:
    """(eta(0), eta'(0)) without building the tail; the cheap path for contour work."""
    res = weyl_theta(pot, lam, anchor, radius_tol=radius_tol, tol=tol)
    if not res.converged:
        raise IntegrationError(
            f"Weyl disks did not converge at lambda={lam} (radius {res.final_radius:.3g})")
    if anchor == 0:
        return res.mu, 1.0 + 0j, res
    tr = integrate_scalar(pot, lam, anchor, 0.0, (res.mu, 1.0 + 0j), tol)
    return complex(tr.y[-1, 0]), complex(tr.y[-1, 1]), res


def boundary_limit_trace(sol: WeylSolution, pot: Potential | None = None,
                         lam: complex | None = None, xs=None) -> tuple[np.ndarray, np.ndarray]:
    """h(x) = Re(conj(eta) eta' / p) on [anchor, x_max] (tail samples unless xs given)."""
    pot = sol.pot if pot is None else pot
    lam = sol.lam if lam is None else complex(lam)
    if xs is None:
        xs = sol.x[sol.x >= sol.anchor]
    xs = np.asarray(xs, dtype=float)
    eta, deta = sol(xs)
    h = (np.conj(eta) * deta / eval_p(pot, lam, xs)).real
    return xs, h


def region_anchor(pot: Potential, lams, C: float = 0.5, x_max: float = 100.0,
                  n_grid: int = DEFAULT_GRID) -> float:
    """One anchor valid for every sampled lam, plus one grid cell of safety.

    No cell is added when condition A holds from x_s for every sample.
    """
    worst = pot.x_s
    violated = False
    for lam in np.asarray(list(lams), dtype=complex).ravel():
        a = find_anchor(pot, lam, C, x_max, n_grid)
        if a is None:
            raise ConditionError(f"condition A never holds below x_max for lambda = {lam}")
        if a > pot.x_s:
            violated = True
        worst = max(worst, a)
    if violated:
        worst += anchor_cell(pot, x_max, n_grid)
    return float(worst)
