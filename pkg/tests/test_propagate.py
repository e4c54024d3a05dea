import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halfline_weyl.potential import BranchError, Potential, eval_p
from halfline_weyl.propagate import (FundamentalRun, ScalarState, StepSizeUnderflow,
                                     SystemState, Trajectory, energy_identity_residual,
                                     energy_inequality, integrate_fundamental,
                                     integrate_scalar, integrate_system, wronskian_drift)


def test_scalar_closed_form(one):
    tr = integrate_scalar(one, 0, 0, 1, ScalarState(0, 0, 1), 1e-10)
    y, dy = tr.y[-1]
    assert abs(y - math.sinh(1)) < 1e-9 and abs(dy - math.cosh(1)) < 1e-9
    end = tr.state_at(1.0)
    assert abs(end.y - y) < 1e-14


def test_scalar_backward(one):
    tr = integrate_scalar(one, 0, 1, 0, (math.sinh(1), math.cosh(1)), 1e-10)
    assert tr.direction == -1
    assert abs(tr.end.y) < 1e-9 and abs(tr.end.dy - 1) < 1e-9
    assert np.all(np.diff(tr.x) < 0)


def test_scalar_self_convergence(airy):
    tol = 1e-8
    ref = integrate_scalar(airy, 0, 0, 1, (1, 0), tol / 100).y[-1]
    got = integrate_scalar(airy, 0, 0, 1, (1, 0), tol).y[-1]
    assert np.max(np.abs(got - ref)) <= 10 * tol


def test_system_closed_form(one):
    U = integrate_system(one, 0, 0, 1, SystemState(0, 0, 1), 1e-10)
    V = integrate_system(one, 0, 0, 1, SystemState(0, 1, 0), 1e-10)
    assert np.allclose(U.y[-1], [math.sinh(1), math.cosh(1)], atol=1e-9)
    assert np.allclose(V.y[-1], [math.cosh(1), math.sinh(1)], atol=1e-9)


def test_system_vs_scalar(harmonic):
    tol = 1e-10
    sysv = integrate_system(harmonic, 0, 1, 3, (1, 0), tol)
    scal = integrate_scalar(harmonic, 0, 1, 3, (1, 0), tol)
    p3 = eval_p(harmonic, 0, 3.0)
    y1, y2 = sysv.y[-1]
    ys, dys = scal.y[-1]
    scale = max(abs(ys), abs(dys))
    assert abs(y1 - ys) <= 10 * tol * scale
    assert abs(p3 * y2 - dys) <= 10 * tol * scale


def test_system_branch_failure(one):
    with pytest.raises(BranchError):
        integrate_system(one, 2.0, 0, 1, (1, 0), 1e-8)


def test_step_underflow():
    # |q| ~ 1e30 needs steps far below the 1e-13 * span floor
    pot = Potential.constant(1e30)
    with pytest.raises(StepSizeUnderflow):
        integrate_scalar(pot, 0, 0, 1.0, (1, 0), 1e-8)


def test_dense_output(one):
    tr = integrate_scalar(one, 0, 0, 2, (0, 1), 1e-11)
    xs = np.linspace(0, 2, 37)
    v = tr(xs)
    assert np.max(np.abs(v[:, 0] - np.sinh(xs))) < 1e-8
    assert np.max(np.abs(tr.derivative(xs)[:, 0] - np.cosh(xs))) < 1e-6
    with pytest.raises(ValueError):
        tr(2.5)


def test_wronskian_examples(one, airy, harmonic):
    U, V = integrate_fundamental(one, 0, 0, 1, 1e-10)
    assert wronskian_drift(U, V, one, 0, 0, 1) < 1e-10
    U, V = integrate_fundamental(airy, 0, 4, 20, 1e-9)
    assert wronskian_drift(U, V, airy, 0, 4, 20) < 1e-7
    U, V = integrate_fundamental(harmonic, -1, 1, 5, 1e-9)
    assert wronskian_drift(U, V, harmonic, -1, 1, 5) < 1e-7


def test_wronskian_separate_runs(one):
    U = integrate_system(one, 0, 0, 1, (0, 1), 1e-10)
    V = integrate_system(one, 0, 0, 1, (1, 0), 1e-10)
    assert wronskian_drift(U, V, one, 0, 0, 1) < 1e-9


def test_fundamental_run_segments(airy):
    run = FundamentalRun(airy, 0, 4, 1e-9)
    for b in (5, 8, 12, 20):
        run.advance(b)
    U, V = run.trajectories()
    assert np.all(np.diff(U.x) > 0)
    assert wronskian_drift(U, V, airy, 0, 4, 20) < 1e-7
    with pytest.raises(ValueError):
        run.advance(10)


def test_energy_identity_examples(one, airy):
    U, _ = integrate_fundamental(one, 0, 0, 1, 1e-10)
    assert energy_identity_residual(U, one, 0, 0, 1) < 1e-8
    _, V = integrate_fundamental(airy, 0, 4, 10, 1e-10)
    assert energy_identity_residual(V, airy, 0, 4, 10) < 1e-6
    zero = integrate_system(one, 0, 0, 1, (0, 0), 1e-8)
    assert energy_identity_residual(zero, one, 0, 0, 1) == 0.0


def test_energy_identity_closed_form_value(one):
    U, _ = integrate_fundamental(one, 0, 0, 1, 1e-11)
    res = energy_inequality(U, one, 0, 0, 1, C=1.0)
    assert res["boundary"] == pytest.approx(math.sinh(1) * math.cosh(1), rel=1e-9)
    assert res["rho_integral"] == pytest.approx(math.sinh(1) * math.cosh(1), rel=1e-9)


CASES = [("one", 0.0, 0.0, 3.0), ("airy", 0.0, 4.0, 12.0), ("harmonic", -1.0, 1.0, 5.0),
         ("airy", 1 + 1j, 4.0, 10.0)]


@pytest.mark.parametrize("name,lam,a,b", CASES)
def test_tolerance_scaling(request, name, lam, a, b):
    pot = request.getfixturevalue(name)
    ref = integrate_system(pot, lam, a, b, (1, 0), 1e-12).y[-1]
    errs = []
    for tol in (1e-6, 5e-7, 2.5e-7):
        got = integrate_system(pot, lam, a, b, (1, 0), tol).y[-1]
        errs.append(np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
    assert errs[1] <= errs[0] * 1.05 and errs[2] <= errs[1] * 1.05


@pytest.mark.parametrize("name,lam,a,b", CASES)
def test_wronskian_within_100_tol(request, name, lam, a, b):
    pot = request.getfixturevalue(name)
    for tol in (1e-8, 1e-9):
        U, V = integrate_fundamental(pot, lam, a, b, tol)
        assert wronskian_drift(U, V, pot, lam, a, b) <= 100 * tol


@pytest.mark.parametrize("name,lam,a,b", CASES)
def test_monotone_positivity(request, name, lam, a, b):
    pot = request.getfixturevalue(name)
    from halfline_weyl.potential import rho
    C = float(np.min(rho(pot, lam, np.linspace(a, b, 2001))))
    assert C > 0
    U, V = integrate_fundamental(pot, lam, a, b, 1e-10)
    for Y in (U, V):
        res = energy_inequality(Y, pot, lam, a, b, C=C)
        assert res["ratio_C_to_rho"] <= 1.0 + 1e-6
        assert res["ratio_rho_to_boundary"] <= 1.0 + 1e-6


@settings(max_examples=15, deadline=None)
@given(re=st.floats(-3, 3), im=st.floats(-3, 3), y0=st.complex_numbers(max_magnitude=2),
       dy0=st.complex_numbers(max_magnitude=2))
def test_scalar_system_equivalence_property(re, im, y0, dy0):
    pot = Potential.polynomial([4.0, 0.0, 1.0])
    lam = complex(re, im)
    tol = 1e-10
    p0 = eval_p(pot, lam, 0.5)
    a = integrate_scalar(pot, lam, 0.5, 2.5, (y0, dy0), tol).y[-1]
    b = integrate_system(pot, lam, 0.5, 2.5, (y0, dy0 / p0), tol).y[-1]
    scale = max(1.0, np.max(np.abs(a)))
    assert abs(a[0] - b[0]) <= 10 * tol * scale * 10
    assert abs(a[1] - eval_p(pot, lam, 2.5) * b[1]) <= 10 * tol * scale * 10


def test_trajectory_is_monotone_and_error_nonnegative(airy):
    tr = integrate_scalar(airy, 1j, 3, 0.2, (1, 1), 1e-9)
    assert np.all(np.diff(tr.x) < 0)
    assert tr.error_estimate >= 0
    assert isinstance(tr, Trajectory)


def test_fallback_matches_jit():
    code = ("from halfline_weyl.potential import Potential;"
            "from halfline_weyl.propagate import integrate_fundamental;"
            "from halfline_weyl import _kernels;"
            "U,V=integrate_fundamental(Potential.complex_airy(),0.5j,3,9,1e-9);"
            "print(_kernels.USE_JIT, repr(complex(U.y[-1,0])), repr(complex(V.y[-1,1])))")
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, HALFLINE_WEYL_NO_JIT=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        jit, u, v = res.stdout.split()
        out[flag] = (jit, complex(u), complex(v))
    assert out["0"][0] == "True" and out["1"][0] == "False"
    for k in (1, 2):
        assert abs(out["0"][k] - out["1"][k]) <= 1e-10 * abs(out["0"][k])
