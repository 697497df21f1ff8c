"""Checks for the two-regime Bessel evaluator and the Gamma wrapper.

Reference values are frozen from an independent high-precision direct-sum
oracle (factorial form, adaptive precision sized to the worst-case
cancellation of the sum); the oracle itself lives in ``conftest.py`` so other
modules can reuse it.
"""

import cmath
import math

import numpy as np
import pytest

from pseudosl.special_functions import (
    BesselEvalConfig,
    NonConvergedError,
    bessel_identity_report,
    bessel_j,
    bessel_j_ratio_asymptotic,
    gamma,
    growth_bound,
)

from conftest import oracle_bessel_j

# Frozen oracle values (direct high-precision sum, see conftest.oracle_bessel_j).
FROZEN_BESSEL = [
    (2.0, 1.5 + 0.5j, 0.23015373693050234 + 0.12964645503533637j),
    (2.0, 25j, -5321931396.0760145 + 0j),
    (2.0, 36.0 + 0j, 0.10099350336388535 + 0j),  # heavy cancellation on the real axis
    (2.0, -35.35533905932737 + 35.35533905932738j, 112897374700923.3 + 52052603206179.35j),
    (2.0, -45.92201188381077 + 110.86554390135441j, 8.971829408086728e45 - 4.970050392993984e46j),
    (2.5, -9.238795325112868 - 3.826834323650899j, 4.986078176629786 - 1.5340958054530243j),
    (3.0, 184.77590650225736 + 76.53668647301795j, -4.425705162185552e31 + 1.9973300630201552e31j),
]


class TestGamma:
    def test_matches_reference_to_1e12(self):
        import mpmath

        for x in [0.5, 1.0, 1.5, 2.5, 3.0, 7.25, 20.0, 101.5]:
            ref = float(mpmath.gamma(x))
            assert abs(gamma(x) - ref) <= 1e-12 * abs(ref)

    def test_domain_error(self):
        for bad in [0.0, -1.0, -0.5]:
            with pytest.raises(ValueError):
                gamma(bad)


class TestBesselJ:
    @pytest.mark.parametrize("nu,z,expected", FROZEN_BESSEL)
    def test_frozen_oracle_values(self, nu, z, expected):
        val = bessel_j(nu, z)
        assert abs(val - expected) <= 1e-10 * abs(expected)

    def test_against_live_oracle_scatter(self):
        rng = np.random.default_rng(1234)
        for _ in range(40):
            r = 10.0 ** rng.uniform(-1, 2.25)  # 0.1 .. ~178
            phi = rng.uniform(-math.pi, math.pi)
            z = r * cmath.exp(1j * phi)
            nu = rng.choice([0.0, 1.5, 2.0, 3.0, 4.5])
            ref = oracle_bessel_j(nu, z)
            assert abs(bessel_j(nu, z) - ref) <= 2e-10 * abs(ref), (nu, z)

    def test_zero_argument(self):
        assert bessel_j(0.0, 0.0) == 1.0
        assert bessel_j(2.0, 0.0) == 0.0

    def test_order_domain(self):
        with pytest.raises(ValueError):
            bessel_j(-1.0, 1.0 + 0j)

    def test_series_nonconvergence_raises(self):
        cfg = BesselEvalConfig(series_max_terms=5)
        with pytest.raises(NonConvergedError):
            bessel_j(2.0, 20.0 + 0j, cfg)

    def test_conjugation_symmetry(self):
        rng = np.random.default_rng(77)
        worst = 0.0
        for _ in range(100):
            r = 200.0 * math.sqrt(rng.uniform(0, 1))
            if r < 1e-3:
                continue
            phi = rng.uniform(-math.pi, math.pi)
            z = r * cmath.exp(1j * phi)
            lhs = bessel_j(2.0, z.conjugate())
            rhs = bessel_j(2.0, z).conjugate()
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
        assert worst <= 1e-12

    def test_rotation_identity(self):
        rng = np.random.default_rng(78)
        factor = cmath.exp(1j * math.pi * 2.0)
        worst = 0.0
        for _ in range(100):
            r = rng.uniform(0.5, 60.0)
            phi = rng.uniform(0.25 * math.pi + 0.02, 0.75 * math.pi - 0.02)
            z = r * cmath.exp(1j * phi)
            lhs = bessel_j(2.0, z * cmath.exp(1j * math.pi))
            rhs = factor * bessel_j(2.0, z)
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
        assert worst <= 1e-10

    def test_growth_bound_pointwise(self):
        rng = np.random.default_rng(79)
        for _ in range(100):
            r = 200.0 * math.sqrt(rng.uniform(0, 1))
            if r < 1e-3:
                continue
            phi = rng.uniform(-math.pi, math.pi)
            z = r * cmath.exp(1j * phi)
            assert abs(bessel_j(2.0, z)) <= growth_bound(2.0, z) * (1 + 1e-12)

    def test_regime_overlap_annulus(self):
        """Series and asymptotic evaluations agree on the switch annulus."""
        series_cfg = BesselEvalConfig(switch_radius=40.0)
        asym_cfg = BesselEvalConfig(switch_radius=20.0)
        rng = np.random.default_rng(80)
        worst = 0.0
        for _ in range(60):
            r = rng.uniform(24.0, 36.0)
            phi = rng.uniform(-0.75 * math.pi, 0.75 * math.pi)
            z = r * cmath.exp(1j * phi)
            a = bessel_j(2.0, z, series_cfg)
            b = bessel_j(2.0, z, asym_cfg)
            worst = max(worst, abs(a - b) / abs(a))
        assert worst <= 1e-8

    def test_identity_report_passes(self):
        report = bessel_identity_report(seed=0, n_samples=60)
        assert report["conjugation_pass"]
        assert report["rotation_pass"]
        assert report["growth_bound_pass"]
        assert report["overlap_pass"]


class TestRatioAsymptotic:
    def test_agreement_with_direct_quotient(self):
        nu, lam, theta, s, t = 2.0, 50.0, math.pi / 8, 0.3, 0.6
        zs = 1j * lam * s * cmath.exp(1j * theta)
        zt = 1j * lam * t * cmath.exp(1j * theta)
        direct = bessel_j(nu, zs) / bessel_j(nu, zt)
        est = bessel_j_ratio_asymptotic(nu, lam, theta, s, t)
        rel = abs(est - direct) / abs(direct)
        # Leading-order estimate, error O(1/lam): 0.0675 from the frozen oracle run.
        assert rel <= 0.12

    def test_error_halves_when_lambda_doubles(self):
        nu, theta, s, t = 2.0, math.pi / 8, 0.3, 0.6

        def err(lam):
            zs = 1j * lam * s * cmath.exp(1j * theta)
            zt = 1j * lam * t * cmath.exp(1j * theta)
            direct = bessel_j(nu, zs) / bessel_j(nu, zt)
            est = bessel_j_ratio_asymptotic(nu, lam, theta, s, t)
            return abs(est - direct) / abs(direct)

        halving = err(50.0) / err(100.0)
        assert 1.7 <= halving <= 2.3

    def test_preconditions(self):
        with pytest.raises(ValueError):
            bessel_j_ratio_asymptotic(2.0, 50.0, math.pi / 8, 0.6, 0.3)
        with pytest.raises(ValueError):
            bessel_j_ratio_asymptotic(2.0, 50.0, 0.5 * math.pi, 0.3, 0.6)
        with pytest.raises(NonConvergedError):
            bessel_j_ratio_asymptotic(2.0, 5.0, math.pi / 8, 0.3, 0.6)

    def test_equal_points_give_unity(self):
        assert bessel_j_ratio_asymptotic(2.0, 60.0, math.pi / 8, 0.4, 0.4) == pytest.approx(1.0)
