"""Shared fixtures and independent oracles for the test suite.

Oracles here are deliberately written against the defining formulas (direct
sums, raw quadrature, finite differences), not against the package's own
evaluation paths, so that agreement is evidence rather than tautology.
"""

import cmath

import mpmath
import numpy as np
import pytest


def oracle_bessel_j(nu, z, dps=None):
    """Direct-sum Bessel J oracle in adaptive high precision.

    Sums the ascending series in its factorial form.  Working precision is
    sized to the worst-case cancellation of the sum, which is of order
    exp(|z| - |Im z|).
    """
    zc = complex(z)
    if zc == 0:
        return complex(1.0 if nu == 0 else 0.0)
    if dps is None:
        dps = 35 + int(0.45 * max(0.0, abs(zc) - abs(zc.imag)))
    with mpmath.workdps(dps):
        zm = mpmath.mpc(zc)
        nu_m = mpmath.mpf(nu)
        total = mpmath.mpf(0)
        floor = mpmath.mpf(10) ** (-60)
        for k in range(0, 2000):
            term = (
                (-1) ** k
                * mpmath.power(zm / 2, nu_m + 2 * k)
                / (mpmath.factorial(k) * mpmath.gamma(nu_m + k + 1))
            )
            total += term
            if k > abs(zc) / 2 + 10 and abs(term) < mpmath.mpf(10) ** (-dps + 5) * max(
                abs(total), floor
            ):
                break
        else:
            raise RuntimeError("bessel oracle did not converge")
        return complex(total)


def oracle_phi_series(m, E, x, dps=40):
    """Regular-solution oracle for the linear coefficient f(x) = x/m.

    Direct high-precision sum of the entire series
    sum_k (-1)^k [Gamma(m+1) / (k! Gamma(m+k+1))] (lam/2)^{2k} x^k
    with lam^2 = -4 m E; valid for every complex E and real x >= 0.
    """
    with mpmath.workdps(dps):
        Em = mpmath.mpc(E)
        lam2 = -4 * m * Em  # only lam^2 enters: the series is even in lam
        w = lam2 * x / 4
        total = mpmath.mpf(0)
        term = mpmath.mpf(1)
        for k in range(0, 2000):
            if k > 0:
                term = term * (-w) / (k * (m + k))
            total += term
            if k > 2 * abs(w) ** 0.5 + 10 and abs(term) < mpmath.mpf(10) ** (-dps + 5) * abs(
                total
            ):
                break
        else:
            raise RuntimeError("phi series oracle did not converge")
        return complex(total)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260822)
