"""Potential family values, closed-form derivatives and the axiom checker."""

import math

import numpy as np
import pytest

from ringfleet.geometry import RingConfig
from ringfleet.potentials import (
    AxiomReport,
    PotentialConfig,
    PotentialFamily,
    boundary_potential,
    check_axioms,
    gain_shaping,
    linear_shaping,
    standard_family,
    validate_potential_config,
    vehicle_potential,
    viscosity_kernel,
)

L, CUTOFF, Q1, Q2 = 6.0, 20.0, 3e-3, 0.1
R_IN, R_OUT, HALF_WIDTH = 20.0, 60.0, 10.0


def std_ring(n=2):
    return RingConfig.uniform(
        r_in=R_IN, r_out=R_OUT, v_max=10.0, omega_star=0.15, theta_max=0.17, n=n,
        min_gap=L, radial_weight=5.11, interaction_radius=CUTOFF, vehicle_length=5.0,
    )


class TestVehiclePotential:
    def test_zero_with_zero_derivatives_at_the_cutoff(self):
        assert vehicle_potential(CUTOFF, L, CUTOFF, Q1) == (0.0, 0.0, 0.0)
        assert vehicle_potential(25.0, L, CUTOFF, Q1) == (0.0, 0.0, 0.0)

    def test_hand_value_inside_the_support(self):
        # q1 * (20 - 13)^3 / (13 - 6) = 3e-3 * 343 / 7
        value, _, _ = vehicle_potential(13.0, L, CUTOFF, Q1)
        assert value == pytest.approx(0.147, rel=1e-12)

    def test_blow_up_scale_near_the_minimum_gap(self):
        value, _, _ = vehicle_potential(L + 1e-6, L, CUTOFF, Q1)
        assert value == pytest.approx(3e-3 * (CUTOFF - L - 1e-6) ** 3 / 1e-6, rel=1e-9)
        assert value > 8e6

    def test_distances_at_or_below_the_gap_are_rejected(self):
        with pytest.raises(ValueError):
            vehicle_potential(L, L, CUTOFF, Q1)
        with pytest.raises(ValueError):
            vehicle_potential(5.0, L, CUTOFF, Q1)

    def test_monotone_growth_towards_the_gap(self):
        offsets = 10.0 ** -np.arange(1, 9)
        values = vehicle_potential(L + offsets, L, CUTOFF, Q1)[0]
        assert np.all(np.diff(values) > 0)

    def test_exact_zero_of_all_outputs_beyond_the_cutoff(self):
        grid = np.linspace(CUTOFF, 3 * CUTOFF, 101)
        v, v1, v2 = vehicle_potential(grid, L, CUTOFF, Q1)
        assert np.all(v == 0) and np.all(v1 == 0) and np.all(v2 == 0)


class TestBoundaryPotential:
    def test_zero_on_the_free_annulus(self):
        for r in (40.0, 45.0, 30.0, 50.0):
            assert boundary_potential(r, R_IN, R_OUT, HALF_WIDTH) == (0.0, 0.0)

    def test_hand_value_outside_the_free_annulus(self):
        # (55-40-10)^3 (55-40+10)^3 / ((55-20)(60-55)) = 5^3 * 25^3 / 175
        value, _ = boundary_potential(55.0, R_IN, R_OUT, HALF_WIDTH)
        assert value == pytest.approx(1953125.0 / 175.0, rel=1e-12)

    def test_rejects_radii_outside_the_annulus(self):
        for r in (R_IN, R_OUT, 10.0, 70.0):
            with pytest.raises(ValueError):
                boundary_potential(r, R_IN, R_OUT, HALF_WIDTH)

    def test_monotone_growth_towards_both_walls(self):
        offsets = 10.0 ** -np.arange(1, 9)
        inner = boundary_potential(R_IN + offsets, R_IN, R_OUT, HALF_WIDTH)[0]
        outer = boundary_potential(R_OUT - offsets, R_IN, R_OUT, HALF_WIDTH)[0]
        assert np.all(np.diff(inner) > 0) and np.all(np.diff(outer) > 0)


class TestViscosityKernel:
    def test_zero_beyond_the_cutoff(self):
        grid = np.linspace(CUTOFF, 2 * CUTOFF, 33)
        k, k1 = viscosity_kernel(grid, L, CUTOFF, Q2)
        assert np.all(k == 0) and np.all(k1 == 0)

    def test_hand_value(self):
        assert viscosity_kernel(10.0, L, CUTOFF, Q2)[0] == pytest.approx(10.0, rel=1e-12)

    def test_zero_scale_gives_the_inviscid_kernel(self):
        grid = np.linspace(L + 0.1, 2 * CUTOFF, 65)
        k, k1 = viscosity_kernel(grid, L, CUTOFF, 0.0)
        assert np.all(k == 0) and np.all(k1 == 0)


class TestGainShaping:
    @pytest.mark.parametrize(
        "x,expected",
        [(-0.3, 0.0), (0.0, 0.1), (1.0, 1.1), (-0.2, 0.0), (-0.1, 0.025)],
    )
    def test_hand_values(self, x, expected):
        assert gain_shaping(x, 0.2) == pytest.approx(expected, abs=1e-15)

    def test_majorizes_the_positive_part(self):
        x = np.linspace(-3, 3, 1001)
        f = gain_shaping(x, 0.2)
        assert np.all(f >= np.maximum(0, x))
        assert np.all(f >= 0)


class TestShapingDefaults:
    def test_error_shapers_vanish_at_zero_and_are_linear(self):
        cfg, pot = std_ring(), PotentialConfig(mu1=0.3, mu2=100.0)
        fam = standard_family(cfg, pot)
        assert fam.f1.fn(0.0) == 0.0
        assert fam.f2.fn(0.5) == pytest.approx(50.0)
        assert fam.g1.fn(-3.0) == -3.0

    def test_viscous_flag_zeroes_the_kernel(self):
        cfg, pot = std_ring(), PotentialConfig(q2=0.1)
        fam = standard_family(cfg, pot, viscous=False)
        assert fam.viscosity(10.0, 6.0)[0] == 0.0
        fam_v = standard_family(cfg, pot, viscous=True)
        assert fam_v.viscosity(10.0, 6.0)[0] == pytest.approx(10.0)


class TestDerivativeOracles:
    """Closed-form slopes against central differences at random points."""

    H = 1e-6

    def central(self, fn, x):
        return (fn(x + self.H) - fn(x - self.H)) / (2 * self.H)

    def test_pair_potential_first_and_second_derivatives(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            d = rng.uniform(L + 0.3, CUTOFF - 1e-3)
            v1 = vehicle_potential(d, L, CUTOFF, Q1)[1]
            v2 = vehicle_potential(d, L, CUTOFF, Q1)[2]
            fd1 = self.central(lambda x: vehicle_potential(x, L, CUTOFF, Q1)[0], d)
            fd2 = self.central(lambda x: vehicle_potential(x, L, CUTOFF, Q1)[1], d)
            assert v1 == pytest.approx(fd1, rel=1e-5)
            assert v2 == pytest.approx(fd2, rel=1e-5)

    def test_boundary_potential_derivative(self):
        rng = np.random.default_rng(321)
        for _ in range(100):
            r = rng.uniform(R_IN + 0.5, R_OUT - 0.5)
            slope = boundary_potential(r, R_IN, R_OUT, HALF_WIDTH)[1]
            fd = self.central(lambda x: boundary_potential(x, R_IN, R_OUT, HALF_WIDTH)[0], r)
            assert slope == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_viscosity_derivative(self):
        rng = np.random.default_rng(213)
        for _ in range(100):
            d = rng.uniform(L + 0.3, CUTOFF - 1e-3)
            slope = viscosity_kernel(d, L, CUTOFF, Q2)[1]
            fd = self.central(lambda x: viscosity_kernel(x, L, CUTOFF, Q2)[0], d)
            assert slope == pytest.approx(fd, rel=1e-5)


class TestAxiomChecker:
    def test_standard_family_passes(self):
        cfg = std_ring()
        report = check_axioms(standard_family(cfg, PotentialConfig()), cfg)
        assert report.passed, str(report)

    def test_sign_flipped_pair_potential_fails(self):
        cfg = std_ring()
        fam = standard_family(cfg, PotentialConfig())
        flipped = PotentialFamily(
            pair=lambda d, gap: tuple(-x for x in fam.pair(d, gap)),
            boundary=fam.boundary,
            viscosity=fam.viscosity,
            g1=fam.g1, g2=fam.g2, f1=fam.f1, f2=fam.f2,
            gain_shaping=fam.gain_shaping,
        )
        report = check_axioms(flipped, cfg)
        assert not report.passed
        names = {c.name for c in report.failures}
        assert names & {"pair_blowup_at_min_gap", "pair_nonnegative"}

    def test_kernel_with_support_beyond_the_cutoff_fails(self):
        cfg = std_ring()
        fam = standard_family(cfg, PotentialConfig())
        constant_kernel = lambda d, gap: (
            np.full_like(np.asarray(d, dtype=float), 0.1),
            np.zeros_like(np.asarray(d, dtype=float)),
        )
        leaking = PotentialFamily(
            pair=fam.pair,
            boundary=fam.boundary,
            viscosity=constant_kernel,
            g1=fam.g1, g2=fam.g2, f1=fam.f1, f2=fam.f2,
            gain_shaping=fam.gain_shaping,
        )
        report = check_axioms(leaking, cfg)
        assert not report.passed
        assert any(c.name == "viscosity_zero_beyond_cutoff" for c in report.failures)

    def test_report_renders_one_line_per_check(self):
        cfg = std_ring()
        report = check_axioms(standard_family(cfg, PotentialConfig()), cfg)
        assert isinstance(report, AxiomReport)
        lines = str(report).splitlines()
        assert len(lines) == len(report.checks)
        assert all(line.startswith("[PASS]") for line in lines)


class TestPotentialConfigValidation:
    def test_reference_values_validate(self):
        assert validate_potential_config(PotentialConfig(), std_ring()) == []

    def test_lateral_weight_floor(self):
        issues = validate_potential_config(PotentialConfig(lateral_weight=1e-4), std_ring())
        assert any("1/r_in^2" in msg for msg in issues)

    def test_free_annulus_width_cap(self):
        issues = validate_potential_config(PotentialConfig(c=25.0), std_ring())
        assert any("half-width" in msg for msg in issues)
