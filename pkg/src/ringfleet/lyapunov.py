"""Fleet energy functions and the numerical dissipation certificate.

Two control Lyapunov functions are evaluated here.  Both share the wall
and pair potential energy and an orientation penalty that blows up as any
|s_i| approaches the orientation bound; they differ in the kinetic term:

* Newtonian:        0.5 * sum (v cos s / r - omega*)^2 + 0.5 * b * sum v^2 sin^2 s
* pseudo-relativistic: the same two quadratics divided by (v_max - v) * v,
  which additionally blows up at v = 0 and v = v_max.

The dissipation certificate differentiates the energy numerically along
the closed-loop flow (two short Runge-Kutta flights of +/-h plus
Richardson extrapolation) and compares against the controller's analytic
dissipation rate and bound.  The finite-difference path deliberately
shares no code with the controller's gradient terms, so a transcription
error in either one breaks the match.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import polar_rhs_arrays, rk4_step
from .geometry import FleetState, PairGeometry, RingConfig, pair_geometry, require_member
from .potentials import PotentialConfig, PotentialFamily, standard_family

__all__ = [
    "ClfValue",
    "PairForces",
    "pair_forces",
    "newtonian_energy",
    "relativistic_energy",
    "viscous_dissipation",
    "DissipationCheck",
    "StepSizeError",
    "dissipation_residual",
]


class StepSizeError(RuntimeError):
    """The two finite-difference step sizes disagree; h cannot resolve dH/dt."""


@dataclass(frozen=True)
class ClfValue:
    """Energy value with its non-negative component breakdown."""

    kinetic_rotational: float
    potential_boundary: float
    potential_pairwise: float
    orientation_penalty: float
    total: float

    @classmethod
    def from_components(cls, kinetic, boundary, pairwise, penalty) -> "ClfValue":
        return cls(
            kinetic_rotational=float(kinetic),
            potential_boundary=float(boundary),
            potential_pairwise=float(pairwise),
            orientation_penalty=float(penalty),
            total=float(kinetic + boundary + pairwise + penalty),
        )


@dataclass(frozen=True)
class PairForces:
    """Potential-field evaluation shared by one step's energy and controls.

    ``tangential[i] = sum_j V'(d_ij) * r_j * sin(phi_i - phi_j) / d_ij``
    ``radial[i]     = sum_j (p_ij*(r_i - r_j) + r_j*(1 - cos(phi_i - phi_j))) * V'(d_ij) / d_ij``

    ``kappa`` is the full viscosity matrix (zero off support);
    ``boundary_value``/``boundary_slope`` are U(r_i) and U'(r_i).
    """

    v_value: np.ndarray
    v_prime: np.ndarray
    kappa: np.ndarray
    boundary_value: np.ndarray
    boundary_slope: np.ndarray
    tangential: np.ndarray
    radial: np.ndarray


def pair_forces(
    fleet: FleetState, cfg: RingConfig, family: PotentialFamily, pairs: PairGeometry | None = None
) -> PairForces:
    if pairs is None:
        pairs = pair_geometry(fleet, cfg)
    v_value, v_prime, _ = family.pair(pairs.d, cfg.min_gap)
    kappa = family.viscosity(pairs.d, cfg.min_gap)[0]
    boundary_value, boundary_slope = family.boundary(fleet.r)
    inv_d = 1.0 / pairs.d
    rj = fleet.r[None, :]
    tangential = np.sum(v_prime * rj * pairs.sin_dphi * inv_d, axis=1)
    radial = np.sum(
        (cfg.radial_weight * pairs.dr + rj * pairs.one_minus_cos) * v_prime * inv_d, axis=1
    )
    return PairForces(
        v_value=np.asarray(v_value),
        v_prime=np.asarray(v_prime),
        kappa=np.asarray(kappa),
        boundary_value=np.asarray(boundary_value),
        boundary_slope=np.asarray(boundary_slope),
        tangential=tangential,
        radial=radial,
    )


def _shared_potentials(fleet, cfg, family, pairs, forces=None):
    if forces is None:
        forces = pair_forces(fleet, cfg, family, pairs)
    return float(np.sum(forces.boundary_value)), 0.5 * float(np.sum(forces.v_value))


def _orientation_penalty(fleet, cfg, pot):
    cos_cap = np.cos(cfg.theta_max)
    terms = 1.0 / (np.cos(fleet.s) - cos_cap) - 1.0 / (1.0 - cos_cap)
    return pot.orientation_weight * float(np.sum(terms))


def newtonian_energy(
    fleet: FleetState,
    cfg: RingConfig,
    pot: PotentialConfig,
    family: PotentialFamily | None = None,
    pairs: PairGeometry | None = None,
    check: bool = True,
    forces: PairForces | None = None,
) -> ClfValue:
    """Energy with the Newtonian rotational kinetic term; zero exactly on
    the target motion (every vehicle at v = omega* r, s = 0, interactions
    and wall terms off)."""
    if family is None:
        family = standard_family(cfg, pot)
    if pairs is None:
        pairs = pair_geometry(fleet, cfg)
    if check:
        require_member(fleet, cfg, pairs)
    err = fleet.v * np.cos(fleet.s) / fleet.r - cfg.omega_star
    sin_s = np.sin(fleet.s)
    kinetic = 0.5 * float(np.sum(err * err)) + 0.5 * pot.lateral_weight * float(
        np.sum(fleet.v**2 * sin_s**2)
    )
    boundary, pairwise = _shared_potentials(fleet, cfg, family, pairs, forces)
    penalty = _orientation_penalty(fleet, cfg, pot)
    return ClfValue.from_components(kinetic, boundary, pairwise, penalty)


def relativistic_energy(
    fleet: FleetState,
    cfg: RingConfig,
    pot: PotentialConfig,
    family: PotentialFamily | None = None,
    pairs: PairGeometry | None = None,
    check: bool = True,
    forces: PairForces | None = None,
) -> ClfValue:
    """Energy whose kinetic term diverges at v = 0 and v = v_max, confining
    the speed without any state-dependent gain."""
    if family is None:
        family = standard_family(cfg, pot)
    if pairs is None:
        pairs = pair_geometry(fleet, cfg)
    if check:
        require_member(fleet, cfg, pairs)
    err = fleet.v * np.cos(fleet.s) / fleet.r - cfg.omega_star
    sin_s = np.sin(fleet.s)
    numer = err * err + pot.lateral_weight * fleet.v**2 * sin_s**2
    kinetic = 0.5 * float(np.sum(numer / ((cfg.v_max - fleet.v) * fleet.v)))
    boundary, pairwise = _shared_potentials(fleet, cfg, family, pairs, forces)
    penalty = _orientation_penalty(fleet, cfg, pot)
    return ClfValue.from_components(kinetic, boundary, pairwise, penalty)


def viscous_dissipation(fleet: FleetState, kappa: np.ndarray, family: PotentialFamily) -> float:
    """The symmetric neighbour-coupling part of dE/dt (non-positive).

    -0.5 * sum_ij kappa_ij * (omega_j - omega_i) * (g1(omega_j) - g1(omega_i))
    -0.5 * sum_ij kappa_ij * (sin s_j - sin s_i) * (g2(sin s_j) - g2(sin s_i))
    """
    omega = fleet.v * np.cos(fleet.s) / fleet.r
    sin_s = np.sin(fleet.s)
    d_omega = omega[None, :] - omega[:, None]
    d_sin = sin_s[None, :] - sin_s[:, None]
    g1 = np.asarray(family.g1.fn(omega))
    g2 = np.asarray(family.g2.fn(sin_s))
    term_speed = float(np.sum(kappa * d_omega * (g1[None, :] - g1[:, None])))
    term_orient = float(np.sum(kappa * d_sin * (g2[None, :] - g2[:, None])))
    return -0.5 * (term_speed + term_orient)


@dataclass(frozen=True)
class DissipationCheck:
    """Result of one finite-difference dissipation audit at a single state."""

    dE_dt_fd: float
    exact: float
    bound: float
    margin: float
    fd_consistency: float
    h: float

    def matches_exact(self, rtol: float = 1e-6) -> bool:
        return abs(self.dE_dt_fd - self.exact) <= rtol * max(1.0, abs(self.exact))

    def within_bound(self, rtol: float = 1e-6) -> bool:
        return self.margin >= -rtol * max(1.0, abs(self.bound))


def dissipation_residual(
    fleet: FleetState,
    controller,
    cfg: RingConfig,
    h: float = 1e-4,
    consistency_rtol: float = 1e-3,
) -> DissipationCheck:
    """Differentiate the controller's energy along its own closed loop.

    Central differences over two Runge-Kutta micro-flights of +/-h and
    +/-h/2 are Richardson-combined; if the two step sizes disagree beyond
    ``consistency_rtol`` the step cannot resolve the derivative and a
    :class:`StepSizeError` is raised.  The returned margin is
    ``bound - dE_dt_fd`` and must not be meaningfully negative.
    """
    require_member(fleet, cfg)
    state0 = fleet.as_array()

    def rhs(state, _):
        w = FleetState.from_array(state)
        F, delta = controller.fleet_controls(w, check=False)
        return polar_rhs_arrays(w, F, delta, cfg.lengths)

    def energy_at(state):
        return controller.energy(FleetState.from_array(state), check=False).total

    def central(step):
        fwd = energy_at(rk4_step(rhs, state0, None, step))
        bwd = energy_at(rk4_step(rhs, state0, None, -step))
        return (fwd - bwd) / (2.0 * step)

    d_full = central(h)
    d_half = central(0.5 * h)
    fd = (4.0 * d_half - d_full) / 3.0
    consistency = abs(d_full - d_half)
    if consistency > consistency_rtol * max(1.0, abs(fd)):
        raise StepSizeError(
            f"finite-difference estimates disagree: D(h) = {d_full}, D(h/2) = {d_half} "
            f"with h = {h}; reduce h or move away from a kernel join"
        )
    exact = controller.dissipation_exact(fleet)
    bound = controller.dissipation_bound(fleet)
    return DissipationCheck(
        dE_dt_fd=float(fd),
        exact=float(exact),
        bound=float(bound),
        margin=float(bound - fd),
        fd_consistency=float(consistency),
        h=float(h),
    )
