"""Regular-at-the-origin solutions of (f u')' + u' = E u on [-1, 1].

For the linear coefficient f(x) = 2 eps x the normalized regular solution is
available in closed form through the Bessel function of order m = 1/(2 eps):

    Phi(x; E) = Gamma(m+1) (w/2)^{-m} J_m(w),      w = sqrt(-4 m E x),

an entire function of both E and x (only w^2 enters).  For general odd r the
solution is produced by the normal-form route: a Frobenius seed of

    Z'' = (q(t) + ell(ell+1)/t^2 - lam^2) Z,       lam^2 = -4 m E,

near t = 0, continued across (0, b2] after the exponential rescaling
Z = exp(mu t) V with mu = sqrt(4 m E) (principal, Re mu >= 0), which keeps
the integrated quantity bounded however large the spectral parameter gets.
Values on x < 0 come from the reflection Phi(x; E) = Phi(-x; -E), so each
solution object carries the half-line data for both E and -E.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .coefficients import (
    TransformedProblem,
    eval_g,
    eval_q,
    eval_rho_pair,
    eval_tau,
)
from .special_functions import DEFAULT_BESSEL_CONFIG, BesselEvalConfig, bessel_j, gamma

__all__ = [
    "SpectralPoint",
    "SolverConfig",
    "spectral_point",
    "phi_linear",
    "phi_linear_prime",
    "z_linear",
    "RegularSolution",
    "build_regular_solution",
    "compute_wq",
]


@dataclass(frozen=True)
class SpectralPoint:
    """Spectral parameter E together with the Bessel-side quantities.

    lam = i sqrt(4 m E) (principal root), so lam^2 = -4 m E and lam sits in
    the second quadrant when E sits in the first.  theta = arg(lam) - pi/2
    is the tilt used in all growth estimates; it equals arg(E)/2 for
    first-quadrant E.
    """

    E: complex
    lam: complex
    lambda_mag: float
    theta: float
    alpha: float


def spectral_point(m: float, E) -> SpectralPoint:
    E = complex(E)
    lam = 1j * np.sqrt(complex(4.0 * m * E))
    if E == 0:
        return SpectralPoint(E=E, lam=0j, lambda_mag=0.0, theta=0.0, alpha=0.0)
    return SpectralPoint(
        E=E,
        lam=complex(lam),
        lambda_mag=abs(lam),
        theta=cmath.phase(lam) - 0.5 * math.pi,
        alpha=cmath.phase(E),
    )


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the normal-form integration."""

    t_seed: float = 1e-3
    seed_terms: int = 8
    rtol: float = 1e-10
    atol: float = 1e-16
    bessel: BesselEvalConfig = DEFAULT_BESSEL_CONFIG


DEFAULT_SOLVER_CONFIG = SolverConfig()


# ---------------------------------------------------------------------------
# closed forms for the linear coefficient


def _w_argument(m: float, E: complex, x):
    return np.sqrt(np.asarray(-4.0 * m * complex(E), dtype=complex) * x)


def phi_linear(m: float, E, x, config: BesselEvalConfig = DEFAULT_BESSEL_CONFIG):
    """Closed-form regular solution for f(x) = 2 eps x, any real x in [-1, 1]."""
    E = complex(E)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty(x.shape, dtype=complex)
    w = _w_argument(m, E, x)
    small = np.abs(w) < 1e-8
    if np.any(small):
        # two-term series; the dropped k=2 term is O(|w|^4) ~ 1e-32
        mEx = m * E * x[small]
        out[small] = 1.0 + mEx / (m + 1.0)
    big = ~small
    gm = gamma(m + 1.0)
    for i in np.nonzero(big)[0]:
        wi = complex(w[i])
        out[i] = gm * (wi / 2.0) ** (-m) * bessel_j(m, wi, config)
    return out[0] if scalar else out


def phi_linear_prime(m: float, E, x, config: BesselEvalConfig = DEFAULT_BESSEL_CONFIG):
    """x-derivative of the closed-form solution; entire like the solution."""
    E = complex(E)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty(x.shape, dtype=complex)
    w = _w_argument(m, E, x)
    c1 = m * E / (m + 1.0)
    small = np.abs(w) < 1e-8
    if np.any(small):
        out[small] = c1 * (1.0 + m * E * x[small] / (m + 2.0))
    gm = gamma(m + 1.0)
    lam2 = -4.0 * m * E
    for i in np.nonzero(~small)[0]:
        wi = complex(w[i])
        out[i] = -(lam2 / 4.0) * gm * (wi / 2.0) ** (-(m + 1.0)) * bessel_j(m + 1.0, wi, config)
    return out[0] if scalar else out


def z_linear(m: float, E, t, config: BesselEvalConfig = DEFAULT_BESSEL_CONFIG):
    """Unperturbed normal-form solution Gamma(m+1)(lam/2)^{-m} sqrt(t) J_m(lam t).

    Normalized like the Frobenius seed: z ~ t^{m + 1/2} as t -> 0.
    """
    E = complex(E)
    sp = spectral_point(m, E)
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.empty(t.shape, dtype=complex)
    w = sp.lam * t
    small = np.abs(w) < 1e-8
    if np.any(small):
        ts = t[small]
        out[small] = ts ** (m + 0.5) * (1.0 - (w[small] ** 2) / (4.0 * (m + 1.0)))
    gm = gamma(m + 1.0)
    pref = gm * (sp.lam / 2.0) ** (-m)
    for i in np.nonzero(~small)[0]:
        out[i] = pref * math.sqrt(t[i]) * bessel_j(m, complex(w[i]), config)
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# normal-form integration for general coefficients


class FrobeniusSeed:
    """Truncated expansion Z = sum_k c_k t^{ell+1+2k} near t = 0.

    Recurrence: 2 (k+1) (2k + 2 ell + 3) c_{k+1} =
    (q0 + 4 m E) c_k + q2 c_{k-1} + q4 c_{k-2}, with c_0 = 1.
    """

    def __init__(self, tp: TransformedProblem, E: complex, n_terms: int):
        ell = tp.field.ell
        kappa = 4.0 * tp.field.m * complex(E)
        q0, q2, q4 = (float(v) for v in tp.q_t_coeffs)
        c = np.zeros(n_terms, dtype=complex)
        c[0] = 1.0
        for k in range(n_terms - 1):
            num = (q0 + kappa) * c[k]
            if k >= 1:
                num += q2 * c[k - 1]
            if k >= 2:
                num += q4 * c[k - 2]
            c[k + 1] = num / (2.0 * (k + 1) * (2.0 * k + 2.0 * ell + 3.0))
        self.coeffs = c
        self.ell = ell

    def z(self, t):
        t = np.asarray(t, dtype=float)
        acc = np.zeros(t.shape, dtype=complex)
        t2 = t * t
        for ck in self.coeffs[::-1]:
            acc = acc * t2 + ck
        return acc * t ** (self.ell + 1.0)

    def z_prime(self, t):
        t = np.asarray(t, dtype=float)
        acc = np.zeros(t.shape, dtype=complex)
        t2 = t * t
        for k in range(len(self.coeffs) - 1, -1, -1):
            acc = acc * t2 + self.coeffs[k] * (self.ell + 1.0 + 2.0 * k)
        return acc * t**self.ell


class _HalfLineSolution:
    """Z(t; E) on (0, b2] for one spectral parameter: seed plus integration."""

    def __init__(self, tp: TransformedProblem, E: complex, config: SolverConfig):
        self.tp = tp
        self.E = complex(E)
        self.config = config
        self.seed = FrobeniusSeed(tp, E, config.seed_terms)
        self.mu = complex(np.sqrt(complex(4.0 * tp.field.m * E)))
        t0 = config.t_seed
        self.t0 = t0
        b2 = tp.b2_table
        z0 = complex(self.seed.z(t0))
        zp0 = complex(self.seed.z_prime(t0))
        damp = cmath.exp(-self.mu * t0)
        v0 = np.array([z0 * damp, (zp0 - self.mu * z0) * damp], dtype=complex)
        ell = tp.field.ell
        mu = self.mu

        # scalar fast path around eval_q: the stepper calls this thousands
        # of times, so skip the array wrapping on each evaluation
        q_series, q_spline = tp._q_series, tp._q_spline
        t_small, b2_cap = tp.t_small, tp.b2_table

        def rhs(t, v):
            if t < t_small:
                qv = float(q_series(t))
            else:
                qv = float(q_spline(t if t <= b2_cap else b2_cap))
            coeff = qv + ell * (ell + 1.0) / (t * t)
            return np.array([v[1], coeff * v[0] - 2.0 * mu * v[1]], dtype=complex)

        sol = solve_ivp(
            rhs,
            (t0, b2),
            v0,
            method="DOP853",
            rtol=config.rtol,
            atol=config.atol,
            dense_output=True,
        )
        if not sol.success:
            raise RuntimeError(f"normal-form integration failed at E={E!r}: {sol.message}")
        self._sol = sol.sol

    def z_and_prime(self, t):
        """Z and Z' at points of (0, b2], choosing seed or integration."""
        t = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t)
        z = np.empty(flat.shape, dtype=complex)
        zp = np.empty(flat.shape, dtype=complex)
        small = flat < self.t0
        if np.any(small):
            z[small] = self.seed.z(flat[small])
            zp[small] = self.seed.z_prime(flat[small])
        if np.any(~small):
            v = self._sol(flat[~small])
            grow = np.exp(self.mu * flat[~small])
            z[~small] = grow * v[0]
            zp[~small] = grow * (v[1] + self.mu * v[0])
        if t.ndim == 0:
            return z[0], zp[0]
        return z, zp


class RegularSolution:
    """The normalized regular solution Phi(x; E) with Phi(0) = 1."""

    def __init__(self, tp: TransformedProblem, E: complex, method_tag: str,
                 config: SolverConfig):
        self.tp = tp
        self.E = complex(E)
        self.spectral = spectral_point(tp.field.m, E)
        self.method_tag = method_tag
        self.config = config
        # half-line solutions are built on first use so that callers who
        # only touch one sign of x pay for a single integration
        self._plus_half: _HalfLineSolution | None = None
        self._minus_half: _HalfLineSolution | None = None

    @property
    def _plus(self) -> "_HalfLineSolution":
        if self._plus_half is None:
            self._plus_half = _HalfLineSolution(self.tp, self.E, self.config)
        return self._plus_half

    @property
    def _minus(self) -> "_HalfLineSolution":
        if self._minus_half is None:
            self._minus_half = _HalfLineSolution(self.tp, -self.E, self.config)
        return self._minus_half

    # -- closed-form side --------------------------------------------------

    def _eval_closed(self, x):
        return phi_linear(self.tp.field.m, self.E, x, self.config.bessel)

    def _eval_closed_prime(self, x):
        return phi_linear_prime(self.tp.field.m, self.E, x, self.config.bessel)

    # -- integrated side ---------------------------------------------------

    def _half_phi(self, half: _HalfLineSolution, x, with_prime: bool):
        """Phi and optionally Phi' on x > 0 from one half-line solution."""
        tp = self.tp
        x = np.asarray(x, dtype=float)
        y = eval_g(tp, x)
        t = eval_tau(tp, x)
        z, zp = half.z_and_prime(t)
        rho, rho1 = eval_rho_pair(tp, y)
        one_p = 1.0 + rho
        ell = tp.field.ell
        ypow = y ** (ell + 1.0)
        phi = one_p ** (-0.25) * z / ypow
        if not with_prime:
            return phi, None
        # g' = g (1 + x r(x)) / (2x)
        gp = y * tp.chain.P(x) / (2.0 * x)
        term_a = -(rho1 * gp / 4.0) * one_p ** (-1.25) * z / ypow
        term_b = -(ell + 1.0) * (gp / y) * one_p ** (-0.25) * z / ypow
        term_d = (gp / y) * one_p**0.25 * zp / y**ell
        return phi, term_a + term_b + term_d

    def _eval_integrated(self, x, with_prime: bool):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x)
        phi = np.empty(flat.shape, dtype=complex)
        dphi = np.empty(flat.shape, dtype=complex) if with_prime else None
        m = self.tp.field.m
        pos = flat > 0
        neg = flat < 0
        zero = ~pos & ~neg
        if np.any(pos):
            p, dp = self._half_phi(self._plus, flat[pos], with_prime)
            phi[pos] = p
            if with_prime:
                dphi[pos] = dp
        if np.any(neg):
            p, dp = self._half_phi(self._minus, -flat[neg], with_prime)
            phi[neg] = p
            if with_prime:
                dphi[neg] = -dp
        if np.any(zero):
            phi[zero] = 1.0
            if with_prime:
                dphi[zero] = m * self.E / (m + 1.0)
        if x.ndim == 0:
            return phi[0], (dphi[0] if with_prime else None)
        return phi, dphi

    # -- public API --------------------------------------------------------

    def eval(self, x):
        if self.method_tag == "closed-form":
            return self._eval_closed(x)
        return self._eval_integrated(x, with_prime=False)[0]

    def eval_prime(self, x):
        if self.method_tag == "closed-form":
            return self._eval_closed_prime(x)
        return self._eval_integrated(x, with_prime=True)[1]

    def z(self, t):
        """Normal-form solution Z(t; E) on (0, b2] (positive half-line)."""
        if self.method_tag == "closed-form":
            return z_linear(self.tp.field.m, self.E, t, self.config.bessel)
        return self._plus.z_and_prime(t)[0]


def build_regular_solution(
    tp: TransformedProblem,
    E,
    method: str = "auto",
    config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> RegularSolution:
    """Construct Phi(.; E) for the field behind tp.

    method="auto" picks the closed form when the field is linear and the
    normal-form integration otherwise; "integrated" forces the general
    route (useful for cross-validation); "closed-form" demands linearity.
    """
    if method == "auto":
        method = "closed-form" if tp.field.is_linear else "integrated"
    if method == "closed-form" and not tp.field.is_linear:
        raise ValueError("closed form requires the linear coefficient")
    if method not in ("closed-form", "integrated"):
        raise ValueError(f"unknown method {method!r}")
    return RegularSolution(tp, complex(E), method, config)


def endpoint_value(
    tp: TransformedProblem,
    E,
    config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> complex:
    """Phi(1; E) from the right half-line alone (one integration)."""
    sol = build_regular_solution(tp, E, config=config)
    return complex(sol.eval(1.0))


def compute_wq(solution: RegularSolution, t):
    """Relative deviation W(t) = Z(t)/Z_linear(t) - 1 of the normal form.

    Measures how much the bounded potential distorts the solution; decays
    like 1/|lam| at fixed t as the spectral parameter grows.
    """
    if solution.E == 0:
        raise ValueError("deviation ratio undefined at E = 0")
    t = np.asarray(t, dtype=float)
    z = solution.z(t)
    z0 = z_linear(solution.tp.field.m, solution.E, t, solution.config.bessel)
    return z / z0 - 1.0
