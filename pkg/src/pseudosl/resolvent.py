"""Inverse-operator machinery: Green kernels, resolvent solves, norms.

Three layers live here.  The zero-energy inverse has an explicit kernel
in terms of the even weight w = g^(1/eps), and is realized both as an
exact cumulative integral (apply_S) and as a dense Nystrom matrix whose
singular values probe the compactness class of the inverse.  For general
E the solve uses variation of parameters in the self-adjoint form
(w f u')' = w (E u + v): w is an integrating factor because w'/w = 1/f,
and it makes the Wronskian-type weight an exact constant, so the only
numerical content is one extra homogeneous solution per half-interval
and cumulative quadrature.  On top of that sit the norm estimator
(largest singular value of the weighted solution matrix) and pseudo-
spectrum grids with eigenvalue masking.
"""

from __future__ import annotations

import cmath
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp
from scipy.linalg import svdvals

from .coefficients import TransformedProblem, eval_g
from .grids import GridFunction, composite_gauss, graded_edges
from .solutions import (
    DEFAULT_SOLVER_CONFIG,
    SolverConfig,
    build_regular_solution,
)
from .spectrum import EigenvalueRecord, boundary_mismatch

__all__ = [
    "NystromOperator",
    "ResolventEstimate",
    "SingularValueSummary",
    "green_weight",
    "green_kernel_H",
    "resolvent_grid_nodes",
    "apply_S",
    "check_orthogonality",
    "build_nystrom_operator",
    "singular_value_decay",
    "sv_decay_summary",
    "GreenSolver",
    "solve_resolvent",
    "resolvent_norm",
    "pseudospectrum_grid",
    "fit_level_line",
]

POINTS_PER_PANEL = 12
_REF_NODES, _REF_WEIGHTS = leggauss(POINTS_PER_PANEL)

# integration accuracy for pseudospectrum sweeps (norms are only certified
# to the 2% doubling tolerance, so 1e-10 stepping is wasted there)
_GRID_SWEEP_CONFIG = replace(DEFAULT_SOLVER_CONFIG, rtol=1e-7, atol=1e-11)

# barycentric weights for the reference Gauss nodes
_BARY = np.array(
    [
        1.0 / np.prod([_REF_NODES[j] - _REF_NODES[k]
                       for k in range(POINTS_PER_PANEL) if k != j])
        for j in range(POINTS_PER_PANEL)
    ]
)

#: relative size of |Phi(1;E) - Phi(-1;E)| below which a solve is refused
POLE_GUARD = 1e-8

#: relative change in the norm estimate under refinement that still counts
#: as converged
CONVERGENCE_RTOL = 0.02


def green_weight(tp: TransformedProblem, x):
    """Even weight w(x) = g(|x|)^(1/eps) = |x|^m e^(m R(|x|)).

    This is simultaneously the integrating factor turning the operator
    into self-adjoint form and the density in the zero-energy kernel.
    """
    x = np.asarray(x, dtype=float)
    m = tp.field.m
    return eval_g(tp, np.abs(x)) ** (2.0 * m)


def green_kernel_H(tp: TransformedProblem, x: float, z: float) -> float:
    """Zero-energy kernel sgn(x) (1 - w(z)/w(x)) on 0 < sgn(x) z <= |x|.

    Bounded by 1 in modulus because w is strictly increasing on [0, 1];
    extended by 0 at x = 0 and outside the indicator window.
    """
    if x == 0.0:
        return 0.0
    s = math.copysign(1.0, x)
    if not (0.0 < s * z <= abs(x)):
        return 0.0
    wz = float(green_weight(tp, z))
    wx = float(green_weight(tp, x))
    return s * (1.0 - wz / wx)


def _half_panel_count(n_nodes: int) -> int:
    return max(4, round(n_nodes / (2 * POINTS_PER_PANEL)))


def _half_mesh(n_half_panels: int):
    """Panels of (0, 1] clustered toward both the origin and 1."""
    edges = graded_edges(0.0, 1.0, n_half_panels, power=2.0, toward="both")
    nodes, weights = composite_gauss(edges, POINTS_PER_PANEL)
    return edges, nodes, weights


def resolvent_grid_nodes(n_nodes: int):
    """Symmetric quadrature grid on [-1, 1] avoiding x = 0.

    Returns (nodes, weights); the node count is rounded to full panels.
    Input data for solve_resolvent must be sampled on this grid.
    """
    _, z, w = _half_mesh(_half_panel_count(n_nodes))
    nodes = np.concatenate([-z[::-1], z])
    weights = np.concatenate([w[::-1], w])
    return nodes, weights


def _lagrange_at(ref_x: np.ndarray) -> np.ndarray:
    """Cardinal polynomials of the reference Gauss nodes at ref_x.

    Returns a matrix of shape (len(ref_x), POINTS_PER_PANEL).
    """
    diff = ref_x[:, None] - _REF_NODES[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14)
    diff = np.where(exact, 1.0, diff)
    terms = _BARY[None, :] / diff
    out = terms / np.sum(terms, axis=1, keepdims=True)
    hit = exact.any(axis=1)
    out[hit] = exact[hit].astype(float)
    return out


def _partial_block(e0: float, e1: float, targets: np.ndarray, f_func):
    """Matrix B with (B v)_i = integral from e0 to targets[i] of F * interp(v).

    v lives on the panel's own Gauss nodes; F is an arbitrary vectorized
    function evaluated exactly at the auxiliary quadrature points.
    """
    n_t = len(targets)
    half = 0.5 * (targets - e0)
    zeta = e0 + half[:, None] * (_REF_NODES[None, :] + 1.0)
    mu = half[:, None] * _REF_WEIGHTS[None, :]
    f_vals = f_func(zeta.ravel()).reshape(n_t, POINTS_PER_PANEL)
    ref = (2.0 * zeta - e0 - e1) / (e1 - e0)
    lag = _lagrange_at(ref.ravel()).reshape(n_t, POINTS_PER_PANEL, POINTS_PER_PANEL)
    return np.einsum("ig,ig,igj->ij", mu, f_vals, lag)


def _cumulative_matrix(edges, nodes, weights, f_vals, f_func):
    """Dense map v |-> (integral from 0 to node_i of F * v) on one half-mesh."""
    n = len(nodes)
    panel_idx = np.arange(n) // POINTS_PER_PANEL
    full = np.where(
        panel_idx[:, None] > panel_idx[None, :],
        (weights * f_vals)[None, :],
        0.0,
    ).astype(complex)
    for k in range(len(edges) - 1):
        sl = slice(k * POINTS_PER_PANEL, (k + 1) * POINTS_PER_PANEL)
        full[sl, sl] += _partial_block(edges[k], edges[k + 1], nodes[sl], f_func)
    return full


def apply_S(
    tp: TransformedProblem, v: GridFunction, config: SolverConfig = DEFAULT_SOLVER_CONFIG
) -> GridFunction:
    """Zero-energy solve u(x) = int_0^x (1 - w(z)/w(x)) v(z) dz.

    The additive constant is fixed to 0 (u(0) = 0); the result solves
    (f u' + u)' = v whenever v is orthogonal to the defect direction.
    """
    solver = GreenSolver(tp, 0.0, len(v.nodes), config=config, _zero_mode=True)
    return solver.solve(v)


def check_orthogonality(tp: TransformedProblem, v: GridFunction):
    """Integral of (w(1) - w(z)) v(z) over [-1, 1].

    Vanishing of this functional characterizes the solvability of the
    zero-energy problem; the direction w(1) - w(z) spans the defect.
    """
    w1 = float(green_weight(tp, 1.0))
    wz = green_weight(tp, v.nodes)
    val = np.sum(v.weights * (w1 - wz) * v.values)
    return complex(val)


@dataclass(frozen=True)
class NystromOperator:
    """Quadrature discretization of the zero-energy solution operator."""

    nodes: np.ndarray
    weights: np.ndarray
    kernel_matrix: np.ndarray

    def operator_norm(self) -> float:
        return float(svdvals(np.real(self.kernel_matrix))[0])


def build_nystrom_operator(tp: TransformedProblem, n_nodes: int) -> NystromOperator:
    """Weight-symmetrized kernel matrix of the zero-energy inverse.

    Entries sqrt(om_i) H(x_i, x_j) sqrt(om_j): the 2-norm of this matrix
    approximates the operator norm on the weighted grid space.
    """
    if n_nodes < 128:
        raise ValueError("Nystrom discretization needs at least 128 nodes")
    nodes, weights = resolvent_grid_nodes(n_nodes)
    w_vals = green_weight(tp, nodes)
    sgn = np.sign(nodes)
    ratio = w_vals[None, :] / w_vals[:, None]
    window = (sgn[None, :] * sgn[:, None] > 0) & (
        np.abs(nodes)[None, :] <= np.abs(nodes)[:, None]
    )
    kernel = np.where(window, sgn[:, None] * (1.0 - ratio), 0.0)
    root = np.sqrt(weights)
    matrix = root[:, None] * kernel * root[None, :]
    return NystromOperator(
        nodes=nodes, weights=weights, kernel_matrix=matrix.astype(complex)
    )


@dataclass(frozen=True)
class SingularValueSummary:
    """Singular values of the discretized inverse with a decay fit."""

    sigmas: np.ndarray
    sigmas_refined: np.ndarray
    n_converged: int
    slope: float
    slope_stderr: float
    fit_start: int


def sv_decay_summary(tp: TransformedProblem, n_nodes: int) -> SingularValueSummary:
    """Singular values at n_nodes plus a log-log decay fit.

    Convergence of each sigma_n is judged against a doubled grid (2%
    relative); the slope is fitted over the converged range, skipping a
    short initial transient.
    """
    coarse = build_nystrom_operator(tp, n_nodes)
    fine = build_nystrom_operator(tp, 2 * n_nodes)
    s_c = svdvals(np.real(coarse.kernel_matrix))
    s_f = svdvals(np.real(fine.kernel_matrix))
    n_cmp = len(s_c)
    rel = np.abs(s_c - s_f[:n_cmp]) / s_f[:n_cmp]
    bad = np.nonzero(rel > CONVERGENCE_RTOL)[0]
    n_conv = int(bad[0]) if len(bad) else n_cmp

    start = min(3, max(0, n_conv - 4))
    ns = np.arange(start + 1, n_conv + 1, dtype=float)
    ys = np.log(s_c[start:n_conv])
    xs = np.log(ns)
    if len(xs) >= 4:
        A = np.vstack([xs, np.ones_like(xs)]).T
        coef, residues, *_ = np.linalg.lstsq(A, ys, rcond=None)
        slope = float(coef[0])
        dof = len(xs) - 2
        if dof > 0 and len(residues):
            s2 = float(residues[0]) / dof
            sxx = float(np.sum((xs - xs.mean()) ** 2))
            stderr = math.sqrt(s2 / sxx)
        else:
            stderr = math.nan
    else:
        slope, stderr = math.nan, math.nan
    return SingularValueSummary(
        sigmas=s_c,
        sigmas_refined=s_f,
        n_converged=n_conv,
        slope=slope,
        slope_stderr=stderr,
        fit_start=start,
    )


def singular_value_decay(tp: TransformedProblem, n_nodes: int) -> np.ndarray:
    """Descending singular values of the zero-energy inverse discretization.

    Emits a warning when fewer than 30 of them are stable under node
    doubling (the decay fit would then be unreliable).
    """
    summary = sv_decay_summary(tp, n_nodes)
    if summary.n_converged < 30:
        warnings.warn(
            f"only {summary.n_converged} singular values are grid-converged",
            stacklevel=2,
        )
    return summary.sigmas


@dataclass(frozen=True)
class ResolventEstimate:
    """Norm estimate of the inverse at one spectral parameter."""

    E: complex
    norm_estimate: float
    lower_bound_from_pseudomode: float
    grid_level: int
    converged: bool
    masked: bool = False


class _HalfLineGreen:
    """Variation-of-parameters data on (0, 1] for one spectral parameter.

    Solves with the regular solution Phi and a second homogeneous
    solution psi anchored at the right endpoint (psi(1) = 0, psi'(1) = 1).
    In self-adjoint form the Wronskian-type weight W = w f (Phi psi' -
    psi Phi') is an exact constant, evaluated at x = 1.
    """

    def __init__(self, tp, E, edges, nodes, weights, config,
                 *, solution=None, psi_dense=None):
        self.tp = tp
        self.E = complex(E)
        self.edges = edges
        self.nodes = nodes
        self.weights = weights
        if self.E == 0:
            # the regular solution degenerates to the constant 1
            self.sol = None
            self.phi_vals = np.ones(len(nodes), dtype=complex)
        elif solution is not None:
            self.sol = solution
            self.phi_vals = self.sol.eval(nodes)
        else:
            # the integrated route evaluates from dense ODE output, far
            # cheaper per point than the high-precision closed form
            self.sol = build_regular_solution(
                tp, self.E, method="integrated", config=config
            )
            self.phi_vals = self.sol.eval(nodes)
        self.w_vals = green_weight(tp, nodes)

        # The second solution itself grows like x^(-m) toward the origin,
        # so integrate the bounded pair (q, s) instead: q = psi * w is the
        # exact integrand of the cumulative integrals and stays regular
        # through 0, while s = x^(m-1) * (f psi' + psi) stays of order 1.
        eps = tp.field.epsilon
        m = tp.field.m
        P = tp.chain.P
        Rx = tp.chain.Rx
        E_loc = self.E

        def rhs(x, y):
            q, s = y
            a = math.exp(m * Rx(x)) * P(x) / (2.0 * eps)
            return [a * s, (m - 1.0) * s / x + E_loc * math.exp(-m * Rx(x)) * q / x]

        floor = 1e-3 * float(nodes[0])
        if psi_dense is not None and psi_dense.t_min <= floor:
            self._q_dense = psi_dense
        else:
            ivp = solve_ivp(
                rhs,
                (1.0, floor),
                [0.0 + 0.0j, 2.0 * eps / P(1.0) + 0.0j],
                method="DOP853",
                rtol=config.rtol,
                atol=max(config.atol, 1e-14),
                dense_output=True,
            )
            if not ivp.success:
                raise RuntimeError(
                    f"second-solution integration failed: {ivp.message}"
                )
            self._q_dense = ivp.sol
        self.psi_vals = self._q_dense(nodes)[0] / self.w_vals

        f1 = 2.0 * eps / P(1.0)
        w1 = float(green_weight(tp, 1.0))
        phi1 = 1.0 + 0.0j if self.sol is None else complex(self.sol.eval(1.0))
        self.f1w1 = f1 * w1
        self.phi_at_1 = phi1
        self.wronskian = self.f1w1 * phi1

        self._mat_cache = None

    def _eval_phi(self, x):
        if self.sol is None:
            return np.ones(np.shape(x), dtype=complex)
        return self.sol.eval(x)

    def _phi_w(self, x):
        return self._eval_phi(x) * green_weight(self.tp, x)

    def _psi_w(self, x):
        return self._q_dense(x)[0]

    def matrices(self):
        """Cumulative maps A(v)_i = int_0^{x_i} Phi w v, B likewise with psi."""
        if self._mat_cache is None:
            A = _cumulative_matrix(
                self.edges, self.nodes, self.weights,
                self.phi_vals * self.w_vals, self._phi_w,
            )
            B = _cumulative_matrix(
                self.edges, self.nodes, self.weights,
                self.psi_vals * self.w_vals, self._psi_w,
            )
            self._mat_cache = (A, B)
        return self._mat_cache

    def particular_matrix(self):
        """Dense map v |-> u_p at the nodes (no periodicity constant)."""
        A, B = self.matrices()
        return (self.psi_vals[:, None] * A - self.phi_vals[:, None] * B) / self.wronskian

    def endpoint_weights(self):
        """Row vector I with I . v = int_0^1 psi w v (exact Gauss sum)."""
        return self.weights * self.psi_vals * self.w_vals

    def particular_at(self, xs, v_vals):
        """u_p at arbitrary points of (0, 1]."""
        xs = np.asarray(xs, dtype=float)
        A = self._cumulative_at(xs, v_vals, self._phi_w, self.phi_vals * self.w_vals)
        B = self._cumulative_at(xs, v_vals, self._psi_w, self.psi_vals * self.w_vals)
        psi_x = self._q_dense(xs)[0] / green_weight(self.tp, xs)
        phi_x = self._eval_phi(xs)
        return (psi_x * A - phi_x * B) / self.wronskian

    def _cumulative_at(self, xs, v_vals, f_func, f_nodes):
        prods = self.weights * f_nodes * v_vals
        panel_sums = prods.reshape(-1, POINTS_PER_PANEL).sum(axis=1)
        cum = np.concatenate([[0.0], np.cumsum(panel_sums)])
        out = np.empty(len(xs), dtype=complex)
        ks = np.clip(
            np.searchsorted(self.edges, xs, side="right") - 1,
            0,
            len(self.edges) - 2,
        )
        for i, (x, k) in enumerate(zip(xs, ks)):
            e0, e1 = self.edges[k], self.edges[k + 1]
            sl = slice(k * POINTS_PER_PANEL, (k + 1) * POINTS_PER_PANEL)
            block = _partial_block(e0, e1, np.array([x]), f_func)
            out[i] = cum[k] + (block @ v_vals[sl])[0]
        return out


class GreenSolver:
    """Resolvent solver (L - E)^{-1} on the standard symmetric grid.

    The left half-interval maps to the right one by parity: u(-z) solves
    the half-line problem with spectral parameter -E and data -v(-z), and
    the regular solutions of the two problems agree through the same
    reflection.  One periodicity constant ties the halves together; its
    denominator is the endpoint mismatch, which vanishes exactly at
    eigenvalues, so near-eigenvalue solves are refused.
    """

    def __init__(
        self,
        tp: TransformedProblem,
        E: complex,
        n_nodes: int,
        config: SolverConfig = DEFAULT_SOLVER_CONFIG,
        _zero_mode: bool = False,
        reuse: "GreenSolver | None" = None,
    ):
        self.tp = tp
        self.E = complex(E)
        self.config = config
        self.zero_mode = _zero_mode and self.E == 0
        n_half = _half_panel_count(n_nodes)
        self.edges, self.z_nodes, self.z_weights = _half_mesh(n_half)
        self.nodes = np.concatenate([-self.z_nodes[::-1], self.z_nodes])
        self.weights = np.concatenate([self.z_weights[::-1], self.z_weights])

        # homogeneous-solution data from a finer solver at the same E can
        # be shared: the ODE solutions do not depend on the mesh
        re_right = re_left = None
        if reuse is not None and reuse.E == self.E:
            re_right, re_left = reuse.right, reuse.left
        self.right = _HalfLineGreen(
            tp, self.E, self.edges, self.z_nodes, self.z_weights, config,
            solution=None if re_right is None else re_right.sol,
            psi_dense=None if re_right is None else re_right._q_dense,
        )
        self.left = _HalfLineGreen(
            tp, -self.E, self.edges, self.z_nodes, self.z_weights, config,
            solution=None if re_left is None else re_left.sol,
            psi_dense=None if re_left is None else re_left._q_dense,
        )
        # denominator of the periodicity constant; Phi(-1;E) = Phi(1;-E)
        mismatch = self.right.phi_at_1 - self.left.phi_at_1
        if not self.zero_mode:
            scale = max(abs(self.right.phi_at_1), abs(self.left.phi_at_1), 1e-300)
            if abs(mismatch) <= POLE_GUARD * scale:
                eig = self._nearest_eigenvalue()
                raise ValueError(
                    f"spectral parameter {self.E} lies within conditioning "
                    f"tolerance of the eigenvalue {eig}; the solve is "
                    "ill-posed there"
                )
        self.denominator = self.right.f1w1 * mismatch
        self.phi_global = np.concatenate(
            [self.left.phi_vals[::-1], self.right.phi_vals]
        )

    def _nearest_eigenvalue(self) -> complex:
        E0, E1 = self.E, self.E * (1 + 1e-6) + 1e-6j
        f0 = boundary_mismatch(self.tp, E0, config=self.config)
        f1 = boundary_mismatch(self.tp, E1, config=self.config)
        for _ in range(40):
            if f1 == f0:
                break
            step = f1 * (E1 - E0) / (f1 - f0)
            E0, f0 = E1, f1
            E1 = E1 - step
            f1 = boundary_mismatch(self.tp, E1, config=self.config)
            if abs(step) <= 1e-12 * max(abs(E1), 1.0):
                break
        return E1

    def _check_grid(self, v: GridFunction):
        if len(v.nodes) != len(self.nodes) or not np.allclose(
            v.nodes, self.nodes, rtol=1e-12, atol=1e-12
        ):
            raise ValueError(
                "data must be sampled on resolvent_grid_nodes "
                f"({len(self.nodes)} nodes); got an incompatible grid"
            )

    def _split(self, v: GridFunction):
        n_half = len(self.z_nodes)
        v_left = v.values[:n_half]
        v_right = v.values[n_half:]
        v_mapped = -v_left[::-1]
        return v_right, v_mapped

    def _constant(self, v_right, v_mapped) -> complex:
        if self.zero_mode:
            return 0.0
        i_plus = np.sum(self.right.endpoint_weights() * v_right)
        i_tilde = np.sum(self.left.endpoint_weights() * v_mapped)
        return (i_plus - i_tilde) / self.denominator

    def solve(self, v: GridFunction) -> GridFunction:
        self._check_grid(v)
        v_right, v_mapped = self._split(v)
        c = self._constant(v_right, v_mapped)
        u_right = c * self.right.phi_vals + self.right.particular_matrix() @ v_right
        u_tilde = c * self.left.phi_vals + self.left.particular_matrix() @ v_mapped
        values = np.concatenate([u_tilde[::-1], u_right])
        return GridFunction(nodes=self.nodes, weights=self.weights, values=values)

    def eval(self, v: GridFunction, xs) -> np.ndarray:
        """Solution values at arbitrary points (finite-difference probes)."""
        self._check_grid(v)
        xs = np.asarray(xs, dtype=float)
        v_right, v_mapped = self._split(v)
        c = self._constant(v_right, v_mapped)
        out = np.empty(xs.shape, dtype=complex)
        pos = xs > 0
        if np.any(pos):
            out[pos] = c * self.right._eval_phi(xs[pos]) + self.right.particular_at(
                xs[pos], v_right
            )
        if np.any(~pos):
            z = -xs[~pos]
            out[~pos] = c * self.left._eval_phi(z) + self.left.particular_at(
                z, v_mapped
            )
        return out

    def matrix(self) -> np.ndarray:
        """Dense map from data values to solution values on the full grid."""
        n_half = len(self.z_nodes)
        n = 2 * n_half
        G = np.zeros((n, n), dtype=complex)
        rev = slice(None, None, -1)

        Gp = self.right.particular_matrix()
        Gm = self.left.particular_matrix()
        G[n_half:, n_half:] = Gp
        # u(-z) = (Gm vtilde)(z) with vtilde = -reversed(v_left)
        G[:n_half, :n_half] = -Gm[rev, rev]

        if not self.zero_mode:
            c_row = np.zeros(n, dtype=complex)
            c_row[n_half:] = self.right.endpoint_weights()
            c_row[:n_half] = self.left.endpoint_weights()[rev]
            c_row /= self.denominator
            G += self.phi_global[:, None] * c_row[None, :]
        return G


def solve_resolvent(
    tp: TransformedProblem,
    E: complex,
    v: GridFunction,
    config: SolverConfig = DEFAULT_SOLVER_CONFIG,
) -> GridFunction:
    """Solve (f u' + u)' - E u = v with u(-1) = u(1) and u in the domain.

    E = 0 sits in the spectrum, but data orthogonal to the range defect
    direction still has a periodic solution: the zero-energy inverse
    (additive constant fixed to u(0) = 0).  Data outside the range at
    E = 0 raises the conditioning error like any other eigenvalue hit.
    """
    if complex(E) == 0:
        defect = abs(check_orthogonality(tp, v))
        scale = float(np.sum(np.abs(v.weights * v.values))) + 1e-300
        if defect > 1e-8 * scale:
            raise ValueError(
                "spectral parameter 0j is the eigenvalue at the bottom of "
                "the spectrum and the data has a component outside the "
                "operator range; no periodic solution exists"
            )
        return apply_S(tp, v, config=config)
    return GreenSolver(tp, E, len(v.nodes), config=config).solve(v)


def resolvent_norm(
    tp: TransformedProblem,
    E: complex,
    n_basis: int,
    config: SolverConfig = DEFAULT_SOLVER_CONFIG,
    *,
    attach_lower: bool = True,
) -> ResolventEstimate:
    """Largest singular value of the weighted solution operator matrix.

    Computed at the requested resolution and at double resolution; the
    doubled value is reported, with a convergence flag from the change.
    The pseudo-mode lower bound is attached when constructible; grid
    sweeps pass ``attach_lower=False`` to skip that construction.
    """
    fine = GreenSolver(tp, E, 2 * n_basis, config=config)
    sigmas = []
    for solver in (GreenSolver(tp, E, n_basis, config=config, reuse=fine), fine):
        G = solver.matrix()
        # G maps data values to solution values with the quadrature already
        # applied, so the weighted-space norm needs D^{1/2} G D^{-1/2}.
        root = np.sqrt(solver.weights)
        sigmas.append(float(svdvals(root[:, None] * G / root[None, :])[0]))
    converged = abs(sigmas[0] - sigmas[1]) <= CONVERGENCE_RTOL * sigmas[1]

    lower = math.nan
    if attach_lower:
        from .pseudomodes import build_pseudomode

        try:
            pm = build_pseudomode(tp, E, config=config)
            lower = pm.resolvent_lower
        except (ValueError, ZeroDivisionError):
            lower = math.nan
    return ResolventEstimate(
        E=complex(E),
        norm_estimate=sigmas[1],
        lower_bound_from_pseudomode=lower,
        grid_level=n_basis,
        converged=converged,
    )


def _masked_estimate(E: complex, n_basis: int) -> ResolventEstimate:
    return ResolventEstimate(
        E=complex(E),
        norm_estimate=math.nan,
        lower_bound_from_pseudomode=math.nan,
        grid_level=n_basis,
        converged=False,
        masked=True,
    )


def _local_spacing(s_values: np.ndarray, s: float) -> float:
    if len(s_values) < 2:
        return max(abs(s), 1.0)
    idx = int(np.argmin(np.abs(s_values - s)))
    gaps = np.diff(s_values)
    lo = max(0, idx - 1)
    return float(np.min(gaps[lo : idx + 1])) if len(gaps) else max(abs(s), 1.0)


def _grid_point_estimate(args):
    tp, E, n_basis, config = args
    try:
        return resolvent_norm(tp, E, n_basis, config=config, attach_lower=False)
    except ValueError:
        return _masked_estimate(E, n_basis)


def pseudospectrum_grid(
    tp: TransformedProblem,
    re_range,
    im_range,
    n_re: int,
    n_im: int,
    *,
    n_basis: int = 64,
    eigenvalues: list[EigenvalueRecord] | None = None,
    config: SolverConfig = DEFAULT_SOLVER_CONFIG,
    jobs: int = 1,
) -> list[ResolventEstimate]:
    """Norm estimates over a rectangular grid, re-major ordering.

    Points within 1e-2 of the local eigenvalue spacing of a computed
    eigenvalue (0 included) are masked rather than solved: the simple-
    pole blowup there would dominate any level-line fit.
    """
    res = np.linspace(re_range[0], re_range[1], n_re)
    ims = np.linspace(im_range[0], im_range[1], n_im)

    # sweeps only need norms to the 2% convergence tolerance, so the
    # default integration accuracy is relaxed; an explicit config is
    # honored untouched
    if config is DEFAULT_SOLVER_CONFIG:
        config = _GRID_SWEEP_CONFIG

    if eigenvalues is None:
        from .spectrum import find_eigenvalues

        s_max = float(np.max(np.abs(ims))) * 1.1 + 5.0
        eigenvalues = find_eigenvalues(tp, s_max, 10**6, config=config)
    eig_points = np.array(
        [rec.E for rec in eigenvalues]
        + [-rec.E for rec in eigenvalues if rec.E != 0]
    )
    # +E and -E share a modulus; deduplicate so the local spacing is the
    # actual gap between consecutive eigenvalue magnitudes, not zero
    s_values = np.unique(np.abs(eig_points))

    tasks, layout = [], []
    for re_v in res:
        for im_v in ims:
            E = complex(re_v, im_v)
            spacing = _local_spacing(s_values, abs(E))
            if np.min(np.abs(eig_points - E)) <= 1e-2 * spacing:
                layout.append(_masked_estimate(E, n_basis))
            else:
                layout.append(None)
                tasks.append((tp, E, n_basis, config))

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_grid_point_estimate, tasks, chunksize=8))
    else:
        results = [_grid_point_estimate(t) for t in tasks]

    it = iter(results)
    return [entry if entry is not None else next(it) for entry in layout]


@dataclass(frozen=True)
class LevelLineFit:
    """Power-law fit |Im E| ~ C |Re E|^exponent along one norm level."""

    level_log10: float
    exponent: float
    r_squared: float
    points: np.ndarray = field(repr=False)


def fit_level_line(
    estimates: list[ResolventEstimate],
    n_re: int,
    n_im: int,
    level_log10: float,
) -> LevelLineFit:
    """Trace one level of log10 norm through the grid and fit its shape.

    For each grid column (fixed Re E) the crossing of the level along
    increasing Im E is located by linear interpolation; columns without
    a bracketed crossing are skipped.  Needs at least 5 crossings.
    """
    pts = []
    for i in range(n_re):
        col = estimates[i * n_im : (i + 1) * n_im]
        re_v = col[0].E.real
        if re_v == 0:
            continue
        ims = np.array([c.E.imag for c in col])
        logs = np.array(
            [
                math.log10(c.norm_estimate)
                if (not c.masked) and np.isfinite(c.norm_estimate)
                else math.nan
                for c in col
            ]
        )
        for j in range(len(col) - 1):
            a, b = logs[j], logs[j + 1]
            if math.isnan(a) or math.isnan(b):
                continue
            if (a - level_log10) * (b - level_log10) <= 0 and a != b:
                t = (level_log10 - a) / (b - a)
                pts.append((abs(re_v), ims[j] + t * (ims[j + 1] - ims[j])))
                break
    pts = np.array(pts)
    if len(pts) < 5:
        raise ValueError(
            f"level {level_log10} crosses only {len(pts)} grid columns; "
            "choose a level inside the computed range"
        )
    xs = np.log(pts[:, 0])
    ys = np.log(np.abs(pts[:, 1]))
    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    return LevelLineFit(
        level_log10=level_log10,
        exponent=float(coef[0]),
        r_squared=r2,
        points=pts,
    )
