import numpy as np
import pytest

from halfline_weyl.potential import Potential
from halfline_weyl.propagate import integrate_fundamental


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile (or load cached) kernels once so timed tests measure the numerics
    for pot in (Potential.constant(1.0), Potential.monomial(2.0), Potential.complex_airy()):
        integrate_fundamental(pot, -1.0, 1.0, 1.5, 1e-8)
    Potential.tabulated(np.linspace(0, 1, 5), np.ones(5)).q(0.5)


@pytest.fixture(scope="session")
def one():
    return Potential.constant(1.0)


@pytest.fixture(scope="session")
def harmonic():
    return Potential.monomial(2.0)


@pytest.fixture(scope="session")
def airy():
    return Potential.complex_airy()


@pytest.fixture(scope="session")
def shifted_harmonic():
    return Potential.polynomial([1.0, 0.0, 1.0])


def bump(center, width, power=8):
    """g = (1 - s^2)^power on |s| < 1, s = (x - center) / width, with g and g''."""
    def g(x):
        s = (np.asarray(x, dtype=float) - center) / width
        u = np.where(np.abs(s) < 1, 1 - s * s, 0.0)
        return u ** power

    def d2(x):
        s = (np.asarray(x, dtype=float) - center) / width
        u = np.where(np.abs(s) < 1, 1 - s * s, 0.0)
        n = power
        return (4 * n * (n - 1) * s * s * u ** (n - 2) - 2 * n * u ** (n - 1)) / width ** 2
    return g, d2
