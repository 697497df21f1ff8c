"""Diffusion coefficient and the change of variables to normal form.

The operator's diffusion coefficient is f(x) = 2 eps x / (1 + x r(x)) with r
an odd polynomial, so f vanishes linearly at the interior point x = 0.  On
(0, 1] the substitution y = g(x), where f g' = eps g and g(x) = sqrt(x)
exp(int_0^x r / 2), straightens the coefficient; a second Liouville step
t = int_0^y sqrt(1 + rho(s)) ds, Z = (1 + rho)^{1/4} G brings the spectral
equation to the normal form

    -Z'' + q(t) Z + ell(ell+1) Z / t^2 = -4 m E Z,   ell = m - 1/2,

with a bounded potential q.  Everything in the chain except the constants m,
ell is independent of eps, since g'/g = (1 + x r(x)) / (2x) does not see it.

Numerical layout:
* g, its inverse, and rho with two derivatives are evaluated by exact
  composition of rational/polynomial pieces (no divided differences);
* near the origin they switch to truncated even power series derived once per
  field with sympy, because the exact compositions turn 0/0 there;
* tau and q are tabulated on a graded mesh and interpolated with cubic
  splines; the cancellation-prone group (m^2 - 1/4)(1/(y^2(1+rho)) - 1/t^2)
  inside q is rebuilt from the identity t - y sigma(y) = -int_0^y s rho' /
  (2 sigma) ds, which keeps it smooth and fully accurate down to the seam
  with the series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import sympy as sp
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline

__all__ = [
    "CoefficientField",
    "TransformedProblem",
    "build_field",
    "build_transformed_problem",
    "eval_g",
    "eval_g_inverse",
    "eval_h",
    "eval_rho",
    "eval_rho_pair",
    "eval_tau",
    "eval_q",
    "eval_rho4",
]

DEFAULT_Y_SMALL = 1e-3
DEFAULT_T_SMALL = 1e-3

# 7-point Gauss-Legendre rule on [-1, 1], used for the cumulative tables.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(7)


@dataclass(frozen=True)
class CoefficientField:
    """Validated coefficient data and the derived spectral constants.

    r_coeffs are the coefficients (c1, c3, ...) of the odd polynomial
    r(x) = c1 x + c3 x^3 + ..., so an empty tuple is the linear coefficient
    f(x) = 2 eps x.  b1 = g(1) and b2 = tau(1) are the half-line lengths of
    the two transformed variables.
    """

    epsilon: float
    r_coeffs: tuple[float, ...]
    m: float
    ell: float
    beta: float
    b1: float
    b2: float
    is_linear: bool


class _FieldChain:
    """Exact-composition evaluators shared by the field and problem builders.

    Everything here depends only on r(x); see the module docstring.
    """

    def __init__(self, r_coeffs):
        coeffs = np.zeros(2 * len(r_coeffs) + 2)
        for k, c in enumerate(r_coeffs):
            coeffs[2 * k + 1] = c
        self.r = Polynomial(coeffs)
        self.r1 = self.r.deriv()
        self.r2d = self.r1.deriv()
        self.Rx = self.r.integ()  # int_0^x r, vanishing constant term
        self.P = Polynomial([1.0]) + Polynomial([0.0, 1.0]) * self.r  # 1 + x r(x)
        # F1(x) = f'(x)/eps - 2 = -2x (2r + x r' + x r^2) / P^2, exact and
        # cancellation-free for small x.
        x = Polynomial([0.0, 1.0])
        self.F1_num = -2.0 * x * (2.0 * self.r + x * self.r1 + x * self.r**2)
        # f''(x)/eps = 2 [(-2x r' - x^2 r'') P - 2 (1 - x^2 r') P'] / P^3
        self.F2_num = 2.0 * (
            (-2.0 * x * self.r1 - x**2 * self.r2d) * self.P
            - 2.0 * (Polynomial([1.0]) - x**2 * self.r1) * self.P.deriv()
        )
        self.b1 = float(np.exp(0.5 * self.Rx(1.0)))

    def g(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(x) * np.exp(0.5 * self.Rx(x))

    def g_inverse(self, y):
        """Invert g on [0, 1], solving in z = sqrt(x) where the problem is
        uniformly well conditioned: G(z) = z exp(Rx(z^2)/2) has G'(0) = 1."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0) or np.any(y > self.b1 * (1 + 1e-12)):
            raise ValueError("g inverse queried outside [0, g(1)]")
        lo = np.zeros_like(y)
        hi = np.ones_like(y)
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            below = mid * np.exp(0.5 * self.Rx(mid * mid)) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        z = 0.5 * (lo + hi)
        # G'(z) = exp(Rx/2) (1 + z^2 r(z^2)) = exp(Rx/2) P(z^2)
        for _ in range(3):
            x = z * z
            e = np.exp(0.5 * self.Rx(x))
            z = np.clip(z - (z * e - y) / (e * self.P(x)), 0.0, 1.0)
        return z * z

    def rho_chain(self, y):
        """(rho, rho', rho'') by exact composition; valid away from y = 0.

        1 + rho = h(y)/(2y) = exp(-Rx(x)) / (1 + x r(x)) at x = g^{-1}(y),
        which stays positive for every admissible field, and the derivatives
        follow from dx/dy = f(x)/(eps y) = 2 y (1 + rho) without any finite
        differencing.
        """
        y = np.asarray(y, dtype=float)
        x = self.g_inverse(y)
        rho_p1 = np.exp(-self.Rx(x)) / self.P(x)
        rho = rho_p1 - 1.0
        F1 = self.F1_num(x) / self.P(x) ** 2
        F2 = self.F2_num(x) / self.P(x) ** 3
        with np.errstate(divide="ignore", invalid="ignore"):
            rho1 = rho_p1 * F1 / y
            rho2 = rho_p1 * (F1**2 - F1) / y**2 + 2.0 * rho_p1**2 * F2
        return rho, rho1, rho2

    def correction_integrand(self, s):
        """s rho'(s) / (2 sigma(s)), the smooth deficit density of t - y sigma."""
        rho, rho1, _ = self.rho_chain(s)
        return s * rho1 / (2.0 * np.sqrt(1.0 + rho))


def _derive_origin_series(r_coeffs, m, order=6):
    """One-time sympy derivation of the even origin expansions.

    Returns rho(y) = sum_k rho_w[k] y^{2k}, t(y) = y (1 + sum_k u[k] y^{2k}),
    and q(t) = q0 + q2 t^2 + q4 t^4, as float coefficient lists.  The chain:
    w = y^2 = x exp(Rx(x)) is reverted for x(w), then
    rho = exp(-Rx)/(1 + x r) - 1 is composed, integrated for t(y), reverted
    for y(t), and assembled into q.
    """
    x, w, t = sp.symbols("x w t_var")
    r_poly = sp.sympify(sum(sp.Float(c) * x ** (2 * k + 1) for k, c in enumerate(r_coeffs)))
    Rx = sp.integrate(r_poly, (x, 0, x)) if r_coeffs else sp.Integer(0)
    n_w = order + 1

    def trunc_w(expr):
        return sp.expand(expr + sp.O(w**n_w)).removeO()

    # Revert w = x exp(Rx(x)) by fixed-point iteration x <- w exp(-Rx(x)).
    x_of_w = w
    for _ in range(n_w):
        x_of_w = trunc_w(sp.series(w * sp.exp(-Rx.subs(x, x_of_w)), w, 0, n_w).removeO())

    rho_w_expr = trunc_w(
        sp.series(sp.exp(-Rx.subs(x, x_of_w)) / (1 + x_of_w * r_poly.subs(x, x_of_w)) - 1,
                  w, 0, n_w).removeO()
    )
    rho_w = [float(rho_w_expr.coeff(w, k)) for k in range(1, n_w)]

    # sigma = sqrt(1 + rho) as a series in w, integrated in y for t(y).
    sigma_w = trunc_w(sp.series(sp.sqrt(1 + rho_w_expr), w, 0, n_w).removeO())
    u = [float(sigma_w.coeff(w, k)) / (2 * k + 1) for k in range(1, n_w)]

    y_sym = sp.symbols("y_sym")
    t_of_y = y_sym * (1 + sum(sp.Float(uk) * y_sym ** (2 * k) for k, uk in enumerate(u, start=1)))

    # Revert t(y) for y(t), again by fixed-point iteration.
    def trunc_t(expr, n):
        return sp.expand(expr + sp.O(t**n)).removeO()

    n_t = 2 * order + 2
    y_of_t = t
    for _ in range(order + 1):
        corr = t_of_y.subs(y_sym, y_of_t) - y_of_t
        y_of_t = trunc_t(sp.series(t - corr, t, 0, n_t).removeO(), n_t)

    rho_y = rho_w_expr.subs(w, y_sym**2)
    rho1_y = sp.diff(rho_y, y_sym)
    rho2_y = sp.diff(rho_y, y_sym, 2)
    one_p = 1 + rho_y
    # Bracket piece of q, already smooth in y.
    brak = rho2_y / (4 * one_p**2) - 5 * rho1_y**2 / (16 * one_p**3)
    # Cancellation-prone group rewritten with the bracketed O(y^2) difference
    # ((1+rho)^{-1} - (y/t)^2 (y/t ... )) pulled out explicitly.
    ratio = t_of_y / y_sym  # 1 + O(y^2)
    grp = (1 / one_p - 1 / ratio**2) / y_sym**2
    q_y = (m * m - sp.Rational(1, 4)) * grp + brak
    q_series_y = sp.series(sp.expand(q_y), y_sym, 0, 2 * order).removeO()
    q_t_expr = trunc_t(sp.series(q_series_y.subs(y_sym, y_of_t), t, 0, 6).removeO(), 6)
    q_t = [float(q_t_expr.coeff(t, k)) for k in (0, 2, 4)]
    odd = [float(q_t_expr.coeff(t, k)) for k in (1, 3)]
    if any(abs(c) > 1e-9 for c in odd):
        raise RuntimeError(f"q(t) series acquired odd terms {odd}; derivation bug")
    return {"rho_w": rho_w, "u": u, "q_t": q_t}


class TransformedProblem:
    """Field data plus cached tables for tau(x), q(t) and the origin series."""

    def __init__(self, field: CoefficientField, chain: _FieldChain, series: dict,
                 y_small: float, t_small: float, n_table: int):
        self.field = field
        self.chain = chain
        self.y_small = float(y_small)
        self.t_small = float(t_small)
        self.rho_w = np.asarray(series["rho_w"])
        self.u_coeffs = np.asarray(series["u"])
        self.q_t_coeffs = np.asarray(series["q_t"])
        self.a2 = -0.5 * float(chain.Rx(1.0))
        self.q0 = float(self.q_t_coeffs[0])
        self._build_tables(n_table)

    def _build_tables(self, n_table: int):
        b1 = self.field.b1
        knots = np.unique(np.concatenate([
            [0.0],
            np.geomspace(2e-4 * b1, 0.05 * b1, 80),
            np.linspace(0.05 * b1, b1, n_table),
        ]))
        # Panelwise 7-point Gauss between consecutive knots, accumulated.
        mid = 0.5 * (knots[1:] + knots[:-1])
        half = 0.5 * (knots[1:] - knots[:-1])
        pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        flat = pts.ravel()

        corr_vals = self.chain.correction_integrand(flat).reshape(pts.shape)
        corr_panels = (corr_vals * _GL_WEIGHTS[None, :]).sum(axis=1) * half
        C = np.concatenate([[0.0], np.cumsum(corr_panels)])

        rho_k, _, _ = self.chain.rho_chain(knots[1:])
        sigma_k = np.concatenate([[1.0], np.sqrt(1.0 + rho_k)])
        T = knots * sigma_k - C
        self._tau_spline = CubicSpline(knots, T)
        self._y_of_t_spline = CubicSpline(T, knots)
        self.b2_table = float(T[-1])

        # q on the same knots (consistent (t, q) pairs), series below the seam.
        mask = knots >= 0.4 * self.y_small
        yq = knots[mask]
        tq = T[mask]
        Cq = C[mask]
        rho, rho1, rho2 = self.chain.rho_chain(yq)
        sigma = np.sqrt(1.0 + rho)
        m = self.field.m
        # N = t^2 - y^2 (1+rho) = (t - y sigma)(t + y sigma) with t - y sigma = -C.
        N = -Cq * (tq + yq * sigma)
        grp = N / (yq**2 * (1.0 + rho) * tq**2)
        brak = rho2 / (4.0 * (1.0 + rho) ** 2) - 5.0 * rho1**2 / (16.0 * (1.0 + rho) ** 3)
        qvals = (m * m - 0.25) * grp + brak
        self._q_spline = CubicSpline(tq, qvals)
        self._q_t_min = float(tq[0])

    # -- series-side evaluators ------------------------------------------------

    def _rho_series(self, y):
        y = np.asarray(y, dtype=float)
        w = y * y
        acc = np.zeros_like(y)
        for k in range(len(self.rho_w) - 1, -1, -1):
            acc = acc * w + self.rho_w[k]
        return acc * w

    def _q_series(self, t):
        t = np.asarray(t, dtype=float)
        w = t * t
        q0, q2, q4 = self.q_t_coeffs
        return q0 + w * (q2 + w * q4)


def build_field(epsilon: float, r_coeffs=()) -> CoefficientField:
    """Validate (epsilon, r) and derive the spectral constants.

    Raises ValueError when epsilon is outside (0, 1) or when 1 + x r(x)
    changes sign on [0, 1], which would make the diffusion coefficient blow
    up or change sign inside the half-interval.
    """
    epsilon = float(epsilon)
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    r_coeffs = tuple(float(c) for c in r_coeffs)
    if any(not math.isfinite(c) for c in r_coeffs):
        raise ValueError("r coefficients must be finite")
    chain = _FieldChain(r_coeffs)
    probe = np.linspace(0.0, 1.0, 2001)
    if np.min(chain.P(probe)) <= 0.0:
        raise ValueError("1 + x r(x) must stay positive on [0, 1]")

    m = 0.5 / epsilon
    ell = m - 0.5
    is_linear = all(c == 0.0 for c in r_coeffs)
    if is_linear:
        b2 = chain.b1
    else:
        # b2 = tau(1) = b1 sigma(b1) - int_0^{b1} s rho' / (2 sigma), with the
        # correction integral done by composite Gauss panels.
        edges = np.linspace(0.0, chain.b1, 121)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        pts = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        vals = chain.correction_integrand(pts).reshape(-1, 7)
        C_total = float(((vals * _GL_WEIGHTS[None, :]).sum(axis=1) * half).sum())
        rho_b1 = float(chain.rho_chain(np.array([chain.b1]))[0][0])
        b2 = chain.b1 * math.sqrt(1.0 + rho_b1) - C_total
    return CoefficientField(
        epsilon=epsilon,
        r_coeffs=r_coeffs,
        m=m,
        ell=ell,
        beta=ell + 1.0,
        b1=chain.b1,
        b2=b2,
        is_linear=is_linear,
    )


def build_transformed_problem(
    field: CoefficientField,
    *,
    n_table: int = 900,
    y_small: float = DEFAULT_Y_SMALL,
    t_small: float = DEFAULT_T_SMALL,
) -> TransformedProblem:
    chain = _FieldChain(field.r_coeffs)
    series = _derive_origin_series(field.r_coeffs, field.m)
    tp = TransformedProblem(field, chain, series, y_small, t_small, n_table)
    if abs(tp.b2_table - field.b2) > 1e-9 * max(1.0, abs(field.b2)):
        raise RuntimeError(
            f"tau(1) table value {tp.b2_table!r} drifted from field b2 {field.b2!r}"
        )
    return tp


def eval_g(tp: TransformedProblem, x):
    """g(x) = sqrt(x) exp(int_0^x r / 2) on [0, 1], vectorized."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1.0 + 1e-12):
        raise ValueError("g is defined on [0, 1]")
    return tp.chain.g(x)


def eval_g_inverse(tp: TransformedProblem, y):
    return tp.chain.g_inverse(y)


def eval_rho_pair(tp: TransformedProblem, y):
    """(rho(y), rho'(y)) with the same series/chain dispatch as eval_rho."""
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    rho = np.empty_like(y)
    rho1 = np.empty_like(y)
    small = y < tp.y_small
    if np.any(small):
        ys = y[small]
        w = ys * ys
        acc = np.zeros_like(ys)
        acc1 = np.zeros_like(ys)
        for k in range(len(tp.rho_w), 0, -1):
            c = tp.rho_w[k - 1]
            acc = acc * w + c
            acc1 = acc1 * w + 2 * k * c
        rho[small] = acc * w
        rho1[small] = acc1 * ys
    if np.any(~small):
        big_rho, big_rho1, _ = tp.chain.rho_chain(y[~small])
        rho[~small] = big_rho
        rho1[~small] = big_rho1
    if scalar:
        return rho[0], rho1[0]
    return rho, rho1


def eval_rho(tp: TransformedProblem, y):
    """rho(y) = h(y)/(2y) - 1, with the origin series below y_small."""
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    out = np.empty_like(y)
    small = y < tp.y_small
    if np.any(small):
        out[small] = tp._rho_series(y[small])
    if np.any(~small):
        out[~small] = tp.chain.rho_chain(y[~small])[0]
    return out[0] if scalar else out


def eval_h(tp: TransformedProblem, y):
    """h(y) = f(g^{-1}(y)) / (eps y) = 2 y (1 + rho(y))."""
    y = np.asarray(y, dtype=float)
    return 2.0 * y * (1.0 + eval_rho(tp, y))


def eval_tau(tp: TransformedProblem, x):
    """tau(x) = int_0^{g(x)} sqrt(1 + rho), via the cached table."""
    y = eval_g(tp, x)
    return tp._tau_spline(y)


def eval_q(tp: TransformedProblem, t):
    """Normal-form potential q(t) on [0, b2]; even series below t_small."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t < 0) or np.any(t > tp.b2_table * (1 + 1e-9)):
        raise ValueError("q is tabulated on [0, tau(1)]")
    out = np.empty_like(t)
    small = t < tp.t_small
    if np.any(small):
        out[small] = tp._q_series(t[small])
    if np.any(~small):
        out[~small] = tp._q_spline(np.minimum(t[~small], tp.b2_table))
    return out[0] if scalar else out


def eval_rho4(tp: TransformedProblem, y):
    """Normalizer (1 + rho(y))^{-1/4} y^{-(ell+1)} of the regular solution."""
    y = np.asarray(y, dtype=float)
    return (1.0 + eval_rho(tp, y)) ** (-0.25) * y ** (-(tp.field.ell + 1.0))
