"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import bump
from halfline_weyl.oracle import FDProblem, airy_eigenvalues, fd_eigenvalues
from halfline_weyl.potential import Potential, lambda_grid, sample_N_region
from halfline_weyl.propagate import (energy_identity_residual, energy_inequality,
                                     integrate_fundamental, integrate_system, wronskian_drift)
from halfline_weyl.spectrum import (BoundaryForm, Circle, Rectangle, apply_resolvent,
                                    find_eigenvalues, weighted_bound_report, winding_number)
from halfline_weyl.weyl import boundary_limit_trace, weyl_solution, weyl_theta

D, N = BoundaryForm.dirichlet(), BoundaryForm.neumann()


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def test_criterion_1_constant_potential(report, one):
    t0 = time.perf_counter()
    worst = 0.0
    for lam in lambda_grid((-2.0, 0.9), (-0.5, 0.5), 5, 5):
        mu = weyl_theta(one, lam, 0.0, radius_tol=1e-10).mu
        worst = max(worst, abs(mu + 1 / np.sqrt(1 - lam)))
    eigs = find_eigenvalues(one, D, Rectangle(-2.0, 0.5, -0.5, 0.5))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-7 and len(eigs) == 0 and dt < 10
    report(1, ok, f"max |mu + 1/sqrt(1-lam)| = {worst:.2e}, eigenvalues found = {len(eigs)}, "
                  f"{dt:.1f} s")


def test_criterion_2_harmonic(report, harmonic):
    t0 = time.perf_counter()
    worst, worst_oracle = 0.0, 0.0
    ok = True
    for bc, exact, prob in ((D, [3, 7, 11], FDProblem(12.0, 4800)),
                            (N, [1, 5, 9], FDProblem(12.0, 4800, 0.0, 1.0))):
        eigs = find_eigenvalues(harmonic, bc, Rectangle(0.0, 12.0, -1.0, 1.0), tol=1e-9)
        got = sorted((e.lam for e in eigs), key=lambda z: z.real)
        ok &= len(got) == 3
        fd = fd_eigenvalues(harmonic, prob, 3)
        for lam, ref in zip(got, exact):
            worst = max(worst, abs(lam - ref))
            k = int(np.argmin([abs(v - lam) for v in fd]))
            gap = abs(lam - fd[k])
            worst_oracle = max(worst_oracle, gap / fd.errors[k])
    dt = time.perf_counter() - t0
    ok = ok and worst <= 1e-5 and worst_oracle <= 1.0 and dt < 60
    report(2, ok, f"max error {worst:.2e}, max |pipeline - oracle| / richardson error "
                  f"{worst_oracle:.2e}, {dt:.1f} s")


def test_criterion_3_complex_airy(report, airy):
    t0 = time.perf_counter()
    exact = airy_eigenvalues(3)
    eigs = find_eigenvalues(airy, D, Rectangle(0.5, 3.5, 1.0, 5.5), tol=1e-9)
    got = sorted((e.lam for e in eigs), key=abs)
    worst = max(abs(a - b) for a, b in zip(got, exact)) if len(got) == 3 else math.inf
    windings = [winding_number(airy, D, Circle(lam, 0.3), eigs.anchor) for lam in exact]
    dt = time.perf_counter() - t0
    ok = len(got) == 3 and worst <= 1e-5 and windings == [1, 1, 1] and dt < 60
    report(3, ok, f"max |lam - |a_n| e^(i pi/3)| = {worst:.2e}, windings {windings}, {dt:.1f} s")


def test_criterion_4_disk_nesting(report, airy, harmonic):
    tol = 1e-11
    lines, ok = [], True
    for name, pot, lam, a in (("ix", airy, 0.0, 2.6), ("x^2", harmonic, -1.0, 0.0)):
        r = weyl_theta(pot, lam, a, radius_tol=1e-8, tol=tol,
                       b_schedule=[a + 0.25 * k for k in range(1, 400)])
        excess = max((abs(d2.center - d1.center) - (d1.radius - d2.radius)
                      for d1, d2 in zip(r.disks, r.disks[1:])), default=0.0)
        mono = all(d2.radius <= d1.radius for d1, d2 in zip(r.disks, r.disks[1:]))
        ok &= r.converged and r.final_radius <= 1e-8 and excess <= 10 * tol and mono
        lines.append(f"{name}: {len(r.disks)} disks, final radius {r.final_radius:.1e}, "
                     f"nesting excess {max(excess, 0.0):.1e}")
    report(4, ok, "; ".join(lines))


TRAJECTORIES = [
    ("one", 0.0, 0.0, 5.0), ("one", 0.5 + 0.3j, 0.0, 8.0), ("airy", 0.0, 2.6, 12.0),
    ("airy", 2 + 2j, 4.0, 14.0), ("harmonic", -1.0, 0.0, 6.0), ("harmonic", 3 + 0.5j, 3.0, 7.0),
    ("shifted_harmonic", 0.2j, 0.0, 5.0),
]


def test_criterion_5_wronskian(report, request):
    worst = 0.0
    for name, lam, a, b in TRAJECTORIES:
        pot = request.getfixturevalue(name)
        U, V = integrate_fundamental(pot, lam, a, b, 1e-9)
        for x in U.x[:: max(1, U.x.size // 20)].tolist() + [b]:
            worst = max(worst, wronskian_drift(U, V, pot, lam, a, x))
    report(5, worst <= 1e-6, f"max relative Wronskian drift {worst:.2e} over "
                             f"{len(TRAJECTORIES)} runs at tol 1e-9")


def test_criterion_6_energy(report, request):
    worst_res, worst_ratio = 0.0, 0.0
    for name, lam, a, b in TRAJECTORIES:
        pot = request.getfixturevalue(name)
        for init in ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 1j)):
            Y = integrate_system(pot, lam, a, b, init, 1e-10)
            worst_res = max(worst_res, energy_identity_residual(Y, pot, lam, a, b))
            e = energy_inequality(Y, pot, lam, a, b)
            # rho > 0 past the anchor, so the boundary term must be positive
            ratio = e["ratio_rho_to_boundary"] if e["boundary"] > 0 else math.inf
            worst_ratio = max(worst_ratio, ratio)
    ok = worst_res <= 1e-6 and worst_ratio <= 1.01
    report(6, ok, f"max identity residual {worst_res:.2e}, max rho-integral / boundary "
                  f"{worst_ratio:.4f}")


def _random_forcing(rng):
    terms = [(complex(rng.normal(), rng.normal()), int(rng.integers(0, 3)),
              float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.0, 3.0))) for _ in range(3)]

    def f(x):
        return sum(c * x ** m * np.exp(-r * x) * np.cos(w * x) for c, m, r, w in terms)
    return f


def test_criterion_7_weighted_bounds(report, one, shifted_harmonic):
    rng = np.random.default_rng(20240517)
    worst = 0.0
    failures = 0
    for pot in (one, shifted_harmonic):
        for k in range(20):
            bc = D if k % 2 == 0 else N
            rep = weighted_bound_report(pot, bc, _random_forcing(rng))
            worst = max(worst, max(rep["ratios"].values()))
            failures += not rep["holds"]
    out = apply_resolvent(one, D, 0.0, lambda x: np.exp(-x), anchor=0.0)
    y_err = abs(out.norms["y_l2"] - 0.25)
    g_err = abs(out.norms["f_inv_q"] - math.sqrt(0.5))
    ok = worst <= 1.01 and failures == 0 and y_err <= 1e-6 and g_err <= 1e-6
    report(7, ok, f"40 forcings, max ratio {worst:.4f}; closed form ||y|| error {y_err:.1e}, "
                  f"||f||_(1/|q|) error {g_err:.1e}")


def test_criterion_8_resolvent_identity(report, request):
    worst, worst_res = 0.0, 0.0
    for name in ("one", "harmonic", "shifted_harmonic", "airy"):
        pot = request.getfixturevalue(name)
        for k, (c, w) in enumerate(((1.5, 1.0), (2.0, 1.5), (3.0, 0.7), (1.2, 1.1), (4.0, 2.0))):
            g, d2 = bump(c, w, 8 + k % 2)
            bc = D if k % 2 == 0 else N

            def f(x, g=g, d2=d2):
                return -d2(x) + pot.q(x) * g(x)

            out = apply_resolvent(pot, bc, 0.0, f)
            worst = max(worst, float(np.max(np.abs(out.y - g(out.x)))))
            worst_res = max(worst_res, out.ode_residual, out.boundary_residual)
    ok = worst <= 1e-6 and worst_res <= 1e-6
    report(8, ok, f"max |R0(Lg) - g| = {worst:.2e}, max residual {worst_res:.2e}")


def test_criterion_9_region_probes(report, one, airy):
    s = sample_N_region(one, [2.0, 0.5], 0.25, 60.0)
    const_ok = (not s[0].member) and s[1].member
    lams = lambda_grid((-10.0, 10.0), (-10.0, 10.0), 10, 10)
    samples = sample_N_region(airy, lams, 0.25, 400.0)
    members = sum(r.member for r in samples)
    probes_ok, probed = True, 0
    for r in samples + s:
        if r.member and r.margin > 0:
            h = 0.1 * r.margin
            pot = airy if r in samples else one
            near = [r.lam + h, r.lam - h, r.lam + 1j * h, r.lam - 1j * h]
            probes_ok &= all(x.member for x in sample_N_region(pot, near, 0.25, 400.0))
            probed += 1
    ok = const_ok and members == 100 and probes_ok
    report(9, ok, f"q=1 (2 out, 0.5 in): {const_ok}; q=ix members {members}/100; "
                  f"openness probes at {probed} members: {probes_ok}")


def test_criterion_10_boundary_limit(report, request):
    worst = 0.0
    for name, lam, a in (("one", 0.0, 0.0), ("one", 0.5j, 0.0), ("airy", 0.0, 2.6),
                         ("airy", 2 + 1j, 4.0), ("harmonic", -1.0, 0.0),
                         ("harmonic", 3.2 + 0.4j, 4.0), ("shifted_harmonic", 0.3, 0.0)):
        sol = weyl_solution(request.getfixturevalue(name), lam, a)
        _, h = boundary_limit_trace(sol)
        worst = max(worst, abs(h[-1]))
    sol = weyl_solution(Potential.constant(1.0), 0.0, 0.0)
    xs, h = boundary_limit_trace(sol)
    trace = float(np.max(np.abs(h + np.exp(-2 * xs))))
    ok = worst <= 1e-6 and trace <= 1e-8
    report(10, ok, f"max |h(x_max)| = {worst:.1e}, q=1 trace error {trace:.1e}")
