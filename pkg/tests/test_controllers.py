"""Feedback-law values, invariants, locality and the information audit."""

import math

import numpy as np
import pytest

from ringfleet.controllers import (
    ControlInput,
    NewtonianController,
    PseudoRelativisticController,
    make_controller,
    permitted_information_audit,
)
from ringfleet.geometry import ConfigError, FleetState, RingConfig, StateSpaceError, VehicleState
from ringfleet.lyapunov import pair_forces
from ringfleet.potentials import PotentialConfig
from ringfleet.simulation import InitSampler, sample_initial_fleet

OMEGA = 0.15
THETA = 0.17
SIGMA = 5.0


def std_ring(n=1):
    return RingConfig.uniform(
        r_in=20.0, r_out=60.0, v_max=10.0, omega_star=OMEGA, theta_max=THETA, n=n,
        min_gap=6.0, radial_weight=5.11, interaction_radius=20.0, vehicle_length=SIGMA,
    )


NCC_POT = PotentialConfig(q1=3e-3)
PRCC_POT = PotentialConfig(q1=3e-5)


def isolated(r=40.0, s=0.0, v=6.0):
    return FleetState.from_vehicles([VehicleState(r=r, phi=0.0, s=s, v=v)])


def sample(cfg, seed):
    return sample_initial_fleet(
        InitSampler(seed=seed, r_margin=8.0, s_margin=0.05, v_margin=2.0, gap_margin=2.0), cfg
    )


def equilibrium_fleet(cfg, radii, phis):
    return FleetState.from_vehicles(
        VehicleState(r=r, phi=p, s=0.0, v=cfg.omega_star * r) for r, p in zip(radii, phis)
    )


class TestNccTerms:
    def test_isolated_vehicle_on_target_motion(self):
        cfg = std_ring()
        ctrl = NewtonianController(cfg, NCC_POT, viscous=False)
        t = ctrl.terms(0, isolated(r=40.0, s=0.0, v=6.0))
        assert t.tangential_coupling == 0.0
        assert t.speed_viscosity == 0.0
        assert t.orientation_viscosity == 0.0
        assert t.radial_gradient == pytest.approx(0.0, abs=1e-18)
        # hand value of the steering denominator at s = 0
        expected_a = (1.0 - 1.0 / 1600.0) * 36.0 + OMEGA * 6.0 / 40.0 + 0.5 / (
            1.0 - math.cos(THETA)
        ) ** 2
        assert t.orientation_stiffness == pytest.approx(expected_a, rel=1e-12)
        # gain floor mu1 plus the shaping value at zero coupling (= epsilon/2)
        assert t.speed_gain == pytest.approx(0.4, rel=1e-12)

    def test_inviscid_configuration_kills_both_viscous_terms(self):
        cfg = std_ring(n=3)
        ctrl = NewtonianController(cfg, PotentialConfig(q1=3e-3, q2=0.1), viscous=False)
        for seed in range(5):
            terms = ctrl.fleet_terms(sample(cfg, seed))
            assert np.all(terms["speed_viscosity"] == 0.0)
            assert np.all(terms["orientation_viscosity"] == 0.0)

    def test_pairs_beyond_the_interaction_radius_are_invisible(self):
        cfg = std_ring(n=2)
        ctrl = NewtonianController(cfg, NCC_POT, viscous=True)
        # radial separation 25/sqrt(p) gives weighted distance 25 > 20
        dr = 25.0 / math.sqrt(5.11)
        fleet = FleetState(r=[35.0, 35.0 + dr], phi=[0.0, 0.0], s=[0.0, 0.01], v=[5.0, 6.0])
        lone = FleetState(r=[35.0], phi=[0.0], s=[0.0], v=[5.0])
        cfg1 = std_ring(n=1)
        ctrl1 = NewtonianController(cfg1, NCC_POT, viscous=True)
        paired = ctrl.control(0, fleet)
        alone = ctrl1.control(0, lone)
        assert paired.F == alone.F
        assert paired.delta == alone.delta

    def test_gain_never_drops_below_its_floor(self):
        cfg = std_ring(n=5)
        ctrl = NewtonianController(cfg, NCC_POT, viscous=False)
        for seed in range(50):
            gain = ctrl.fleet_terms(sample(cfg, seed))["speed_gain"]
            assert np.all(gain >= NCC_POT.mu1 - 1e-12)


class TestNccControl:
    def test_equilibrium_gives_zero_accel_and_circle_steering(self):
        cfg = std_ring()
        ctrl = NewtonianController(cfg, NCC_POT, viscous=False)
        u = ctrl.control(0, isolated(r=40.0, s=0.0, v=6.0))
        assert u.F == 0.0
        assert u.delta == pytest.approx(math.atan(SIGMA / 40.0), abs=1e-15)
        assert u.delta == pytest.approx(0.12435, abs=5e-6)

    def test_overspeed_is_damped_with_the_shaped_gain(self):
        # isolated, v = 7 against target omega* r = 6: F = -k (v - 6) with k = 0.4
        cfg = std_ring()
        ctrl = NewtonianController(cfg, NCC_POT, viscous=False)
        u = ctrl.control(0, isolated(r=40.0, s=0.0, v=7.0))
        assert u.F == pytest.approx(-0.4, rel=1e-12)

    def test_speed_bracketing_on_random_states(self):
        """-k v < F < k (v_max - v): the state-dependent gain keeps the speed
        strictly inside (0, v_max) in continuous time."""
        cfg = std_ring(n=3)
        for viscous, pot in ((False, NCC_POT), (True, PotentialConfig(q1=3e-3, q2=0.1))):
            ctrl = NewtonianController(cfg, pot, viscous=viscous)
            count = 0
            for seed in range(334):
                fleet = sample(cfg, seed)
                terms = ctrl.fleet_terms(fleet)
                F, _ = ctrl.fleet_controls(fleet)
                gain = terms["speed_gain"]
                assert np.all(F > -gain * fleet.v)
                assert np.all(F < gain * (cfg.v_max - fleet.v))
                count += fleet.n
            assert count >= 1000

    def test_rotational_equivariance(self):
        cfg = std_ring(n=4)
        ctrl = NewtonianController(cfg, NCC_POT, viscous=False)
        fleet = sample(cfg, 17)
        shifted = FleetState(r=fleet.r, phi=fleet.phi + 0.987, s=fleet.s, v=fleet.v)
        F0, d0 = ctrl.fleet_controls(fleet)
        F1, d1 = ctrl.fleet_controls(shifted)
        assert np.allclose(F1, F0, rtol=1e-9, atol=1e-12)
        assert np.allclose(d1, d0, rtol=1e-9, atol=1e-12)

    def test_scalar_and_vector_paths_agree(self):
        cfg = std_ring(n=4)
        for viscous in (False, True):
            ctrl = NewtonianController(cfg, PotentialConfig(q1=3e-3, q2=0.1), viscous=viscous)
            fleet = sample(cfg, 23)
            F, delta = ctrl.fleet_controls(fleet)
            for i in range(fleet.n):
                u = ctrl.control(i, fleet)
                assert u.F == pytest.approx(float(F[i]), rel=1e-12, abs=1e-12)
                assert u.delta == pytest.approx(float(delta[i]), rel=1e-12, abs=1e-12)

    def test_rejects_states_outside_the_domain(self):
        cfg = std_ring()
        ctrl = NewtonianController(cfg, NCC_POT)
        bad = FleetState.from_vehicles([VehicleState(r=40.0, phi=0.0, s=0.2, v=5.0)])
        with pytest.raises(StateSpaceError):
            ctrl.fleet_controls(bad)


class TestPrccTerms:
    def test_speed_error_scale_hand_value(self):
        # (v_max v - 2 r v w + r w v_max) / (2 r (v_max - v)^2 v^2) at r=40, v=6
        cfg = std_ring()
        ctrl = PseudoRelativisticController(cfg, PRCC_POT, viscous=False)
        t = ctrl.terms(0, isolated(r=40.0, s=0.0, v=6.0))
        assert t.speed_error_scale == pytest.approx(48.0 / 46080.0, rel=1e-12)
        assert t.radial_gradient == pytest.approx(0.0, abs=1e-18)

    def test_orientation_stiffness_dominates_its_penalty_floor(self):
        cfg = std_ring(n=3)
        ctrl = PseudoRelativisticController(cfg, PRCC_POT, viscous=False)
        floor = PRCC_POT.orientation_weight / (1.0 - math.cos(THETA)) ** 2
        for seed in range(30):
            t = ctrl.fleet_terms(sample(cfg, seed))
            assert np.all(t["orientation_stiffness"] > floor)
            assert np.all(t["speed_error_scale"] > 0.0)

    def test_steering_coupling_vanishes_at_zero_orientation(self):
        cfg = std_ring()
        ctrl = PseudoRelativisticController(cfg, PRCC_POT, viscous=False)
        t = ctrl.terms(0, isolated(r=40.0, s=0.0, v=6.0))
        assert t.accel_steer_coupling == 0.0


class TestPrccControl:
    def test_equilibrium_gives_zero_accel_and_circle_steering(self):
        cfg = std_ring()
        ctrl = PseudoRelativisticController(cfg, PRCC_POT, viscous=False)
        u = ctrl.control(0, isolated(r=40.0, s=0.0, v=6.0))
        assert u.F == pytest.approx(0.0, abs=1e-12)
        assert u.delta == pytest.approx(math.atan(SIGMA / 40.0), abs=1e-12)

    def test_overspeed_hand_value(self):
        # q(40, 0, 7) = 46/35280; F = -mu1 * (7/40 - 0.15) / q
        cfg = std_ring()
        ctrl = PseudoRelativisticController(cfg, PRCC_POT, viscous=False)
        u = ctrl.control(0, isolated(r=40.0, s=0.0, v=7.0))
        expected = -0.3 * 0.025 * 35280.0 / 46.0
        assert u.F == pytest.approx(expected, rel=1e-12)
        assert u.F == pytest.approx(-5.752, abs=5e-4)

    def test_viscous_terms_cancel_for_matched_neighbours(self):
        # equal angular speed and equal orientation: the coupling differences
        # vanish even though the kernel itself is positive
        cfg = std_ring(n=2)
        fleet = FleetState(r=[40.0, 40.0], phi=[0.0, 0.25], s=[0.02, 0.02], v=[6.0, 6.0])
        viscous = PseudoRelativisticController(
            cfg, PotentialConfig(q1=3e-5, q2=0.1), viscous=True
        )
        inviscid = PseudoRelativisticController(
            cfg, PotentialConfig(q1=3e-5, q2=0.1), viscous=False
        )
        Fv, dv = viscous.fleet_controls(fleet)
        Fi, di = inviscid.fleet_controls(fleet)
        assert np.allclose(Fv, Fi, rtol=1e-12)
        assert np.allclose(dv, di, rtol=1e-12)
        # the kernel really is active at this spacing
        terms = viscous.fleet_terms(fleet)
        assert np.any(terms["kappa"] > 0)

    def test_scalar_and_vector_paths_agree(self):
        cfg = std_ring(n=4)
        for viscous in (False, True):
            ctrl = PseudoRelativisticController(
                cfg, PotentialConfig(q1=3e-5, q2=0.1), viscous=viscous
            )
            fleet = sample(cfg, 29)
            F, delta = ctrl.fleet_controls(fleet)
            for i in range(fleet.n):
                u = ctrl.control(i, fleet)
                assert u.F == pytest.approx(float(F[i]), rel=1e-12, abs=1e-12)
                assert u.delta == pytest.approx(float(delta[i]), rel=1e-12, abs=1e-12)

    def test_rotational_equivariance(self):
        cfg = std_ring(n=4)
        ctrl = PseudoRelativisticController(cfg, PRCC_POT, viscous=False)
        fleet = sample(cfg, 31)
        shifted = FleetState(r=fleet.r, phi=fleet.phi - 7.0, s=fleet.s, v=fleet.v)
        F0, d0 = ctrl.fleet_controls(fleet)
        F1, d1 = ctrl.fleet_controls(shifted)
        assert np.allclose(F1, F0, rtol=1e-9, atol=1e-12)
        assert np.allclose(d1, d0, rtol=1e-9, atol=1e-12)


class TestEquilibriumFixedPoint:
    def test_all_controllers_hold_the_equilibrium_set(self):
        cfg = std_ring(n=3)
        fleet = equilibrium_fleet(cfg, [34.0, 41.0, 47.5], [0.0, 2.1, 4.2])
        for family, pot in (("ncc", NCC_POT), ("prcc", PRCC_POT)):
            for viscous in (False, True):
                ctrl = make_controller(cfg, pot, family=family, viscous=viscous)
                F, delta = ctrl.fleet_controls(fleet)
                for i in range(3):
                    assert abs(F[i]) < 1e-12
                    assert abs(delta[i] - math.atan(SIGMA / fleet.r[i])) < 1e-12


class TestActionReaction:
    def test_pair_forces_cancel_in_the_ring_direction(self):
        """The tangential pair forces are equal and opposite, so their
        r_i-weighted sum telescopes to zero; this is the cancellation that
        makes the energy rate independent of the pair geometry."""
        cfg = std_ring(n=5)
        fam_ctrl = NewtonianController(cfg, NCC_POT, viscous=False)
        for seed in range(20):
            fleet = sample(cfg, seed)
            forces = pair_forces(fleet, cfg, fam_ctrl.family)
            total = float(np.sum(fleet.r * forces.tangential))
            assert abs(total) < 1e-10


class TestInformationAudit:
    def test_inviscid_controller_reads_only_neighbour_positions(self):
        cfg = std_ring(n=2)
        fleet = FleetState(r=[40.0, 40.0], phi=[0.0, 0.25], s=[0.0, 0.03], v=[5.0, 6.0])
        ctrl = NewtonianController(cfg, NCC_POT, viscous=False)
        audit = permitted_information_audit(ctrl, 0, fleet)
        assert audit.own_fields == {"r", "phi", "s", "v"}
        assert audit.neighbor_fields == {1: frozenset({"r", "phi"})}
        assert audit.violations == ()

    def test_viscous_controller_also_reads_neighbour_motion(self):
        cfg = std_ring(n=2)
        fleet = FleetState(r=[40.0, 40.0], phi=[0.0, 0.25], s=[0.0, 0.03], v=[5.0, 6.0])
        ctrl = NewtonianController(cfg, PotentialConfig(q1=3e-3, q2=0.1), viscous=True)
        audit = permitted_information_audit(ctrl, 0, fleet)
        assert audit.neighbor_fields == {1: frozenset({"r", "phi", "s", "v"})}
        assert audit.violations == ()

    def test_far_vehicles_are_never_touched(self):
        cfg = std_ring(n=2)
        dr = 25.0 / math.sqrt(5.11)  # weighted distance 25 > interaction radius
        fleet = FleetState(r=[33.0, 33.0 + dr], phi=[0.0, 0.0], s=[0.0, 0.0], v=[5.0, 6.0])
        for family, pot in (("ncc", NCC_POT), ("prcc", PRCC_POT)):
            ctrl = make_controller(cfg, pot, family=family, viscous=True)
            audit = permitted_information_audit(ctrl, 0, fleet)
            assert audit.neighbor_fields == {}
            assert audit.violations == ()

    def test_prcc_audit_matches_ncc_scope(self):
        cfg = std_ring(n=3)
        fleet = FleetState(
            r=[40.0, 40.0, 42.0], phi=[0.0, 0.25, 0.5], s=[0.0, 0.02, -0.01], v=[5.0, 6.0, 5.5]
        )
        ctrl = PseudoRelativisticController(cfg, PRCC_POT, viscous=False)
        audit = permitted_information_audit(ctrl, 1, fleet)
        assert audit.violations == ()
        assert all(fields == frozenset({"r", "phi"}) for fields in audit.neighbor_fields.values())


class TestDissipationCertificate:
    """Random-state audit of all four variants; pins every sign convention."""

    def test_thousand_state_certificate(self):
        from ringfleet.simulation import MonitorConfig, _spot_check_dissipation

        mon = MonitorConfig()
        per_variant = 0
        for family, pot_base in (("ncc", 3e-3), ("prcc", 3e-5)):
            for viscous in (False, True):
                pot = PotentialConfig(q1=pot_base, q2=0.1 if viscous else 0.0)
                per_variant = 0
                for n in (2, 3, 5):
                    cfg = std_ring(n=n)
                    ctrl = make_controller(cfg, pot, family=family, viscous=viscous)
                    for seed in range(28):
                        fleet = sample_initial_fleet(
                            InitSampler(
                                seed=9000 + 100 * n + seed,
                                r_margin=8.0, s_margin=0.05, v_margin=2.0, gap_margin=2.0,
                            ),
                            cfg,
                        )
                        check, problem = _spot_check_dissipation(fleet, ctrl, cfg, mon)
                        assert problem is None, f"{family} viscous={viscous}: {problem}"
                        assert check.margin >= -1e-6 * max(1.0, abs(check.bound))
                        per_variant += fleet.n
                assert per_variant >= 250

    def test_sign_flipped_radial_gradient_fails_the_certificate(self):
        """Negative control: corrupting the radial gradient's sign must break
        the finite-difference identity."""

        class FlippedNcc(NewtonianController):
            def _radial_gradient(self, err, cos_s, fleet, boundary_slope, radial_pair):
                return -super()._radial_gradient(err, cos_s, fleet, boundary_slope, radial_pair)

        from ringfleet.lyapunov import dissipation_residual

        cfg = std_ring(n=3)
        ctrl = FlippedNcc(cfg, NCC_POT, viscous=False)
        failures = 0
        for seed in range(10):
            fleet = sample(cfg, seed)
            check = dissipation_residual(fleet, ctrl, cfg)
            if not (check.matches_exact(1e-6) and check.within_bound(1e-6)):
                failures += 1
        assert failures > 0


class TestMakeController:
    def test_unknown_family_is_a_config_error(self):
        with pytest.raises(ConfigError):
            make_controller(std_ring(), NCC_POT, family="pid")

    def test_bad_potential_config_is_rejected_on_construction(self):
        with pytest.raises(ConfigError):
            NewtonianController(std_ring(), PotentialConfig(lateral_weight=1e-4))
