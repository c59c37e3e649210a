"""Decentralized cruise controllers for lane-free ring traffic.

Two feedback families map a fleet state to per-vehicle acceleration ``F``
and steering angle ``delta``:

* ``ncc``  - Newtonian: a state-dependent speed gain brackets the
  acceleration so the speed can never leave (0, v_max);
* ``prcc`` - pseudo-relativistic: the speed is confined by the energy
  itself (its kinetic term diverges at both speed limits), so no gain
  scheduling is needed.

Each is *inviscid* (reads only its own state plus relative positions of
vehicles within the interaction radius) or *viscous* (additionally reads
neighbour orientation and speed through the coupling kernel).

Sign conventions in the steering laws are pinned by the dissipation
identity: differentiating the controller's energy along the closed loop
must reproduce the analytic dissipation rate exactly.  The identity is
enforced numerically by :func:`ringfleet.lyapunov.dissipation_residual`
and the test suite; any sign flip in the gradient terms breaks it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lyapunov
from .geometry import (
    ConfigError,
    FleetState,
    PairGeometry,
    RingConfig,
    StateSpaceError,
    pair_geometry,
    require_member,
    validate_ring_config,
)
from .potentials import (
    PotentialConfig,
    PotentialFamily,
    standard_family,
    validate_potential_config,
)

__all__ = [
    "ControlInput",
    "NccTerms",
    "PrccTerms",
    "NewtonianController",
    "PseudoRelativisticController",
    "make_controller",
    "InformationAudit",
    "permitted_information_audit",
]

_GAIN_FLOOR_SLACK = 1e-9


@dataclass(frozen=True)
class ControlInput:
    """Acceleration and steering command for one vehicle."""

    F: float
    delta: float


@dataclass(frozen=True)
class NccTerms:
    """Intermediate quantities of the Newtonian law for one vehicle."""

    orientation_stiffness: float  # denominator of the steering correction
    radial_gradient: float  # energy gradient in r, sign-flipped
    tangential_coupling: float  # pair forces along the ring
    speed_viscosity: float  # neighbour angular-speed coupling
    orientation_viscosity: float  # neighbour orientation coupling
    speed_gain: float  # state-dependent acceleration gain


@dataclass(frozen=True)
class PrccTerms:
    """Intermediate quantities of the pseudo-relativistic law."""

    speed_error_scale: float  # weight of the angular-speed error in dE/dv
    orientation_stiffness: float
    accel_steer_coupling: float  # how acceleration enters the steering law
    radial_gradient: float
    tangential_coupling: float
    speed_viscosity: float
    orientation_viscosity: float


class _FleetAccess:
    """Per-vehicle view of the fleet used by the scalar control path.

    ``neighbors`` models a range sensor: it reports the indices and
    distances of vehicles inside the interaction radius without counting
    as a state read.  Individual field reads go through ``position`` /
    ``motion`` so they can be recorded by the auditing subclass.
    """

    def __init__(self, fleet: FleetState, cfg: RingConfig):
        self._fleet = fleet
        self._cfg = cfg

    def own(self, i):
        f = self._fleet
        return float(f.r[i]), float(f.phi[i]), float(f.s[i]), float(f.v[i])

    def neighbors(self, i):
        f, cfg = self._fleet, self._cfg
        out = []
        for j in range(f.n):
            if j == i:
                continue
            half = math.sin(0.5 * (f.phi[i] - f.phi[j]))
            d = math.sqrt(
                cfg.radial_weight[i, j] * (f.r[i] - f.r[j]) ** 2
                + 4.0 * f.r[i] * f.r[j] * half * half
            )
            if d < cfg.interaction_radius:
                out.append((j, d))
        return out

    def position(self, j):
        return float(self._fleet.r[j]), float(self._fleet.phi[j])

    def motion(self, j):
        return float(self._fleet.s[j]), float(self._fleet.v[j])


class _AuditingAccess(_FleetAccess):
    def __init__(self, fleet, cfg):
        super().__init__(fleet, cfg)
        self.reads: set[tuple[int, str]] = set()

    def own(self, i):
        self.reads.update((i, name) for name in ("r", "phi", "s", "v"))
        return super().own(i)

    def position(self, j):
        self.reads.update(((j, "r"), (j, "phi")))
        return super().position(j)

    def motion(self, j):
        self.reads.update(((j, "s"), (j, "v")))
        return super().motion(j)


class _ControllerBase:
    family_name = ""

    def __init__(
        self,
        cfg: RingConfig,
        pot: PotentialConfig,
        viscous: bool = False,
        family: PotentialFamily | None = None,
    ):
        issues = validate_ring_config(cfg) + validate_potential_config(pot, cfg)
        if issues:
            raise ConfigError(issues)
        self.cfg = cfg
        self.pot = pot
        self.viscous = bool(viscous)
        self.family = family if family is not None else standard_family(cfg, pot, viscous=viscous)

    # -- shared pair machinery -------------------------------------------------

    def _couplings(self, fleet, pairs, forces=None):
        """Pair forces plus the viscous couplings G (angular speed) and M
        (orientation); both vanish identically for inviscid configurations."""
        if forces is None:
            forces = lyapunov.pair_forces(fleet, self.cfg, self.family, pairs)
        cos_s = np.cos(fleet.s)
        sin_s = np.sin(fleet.s)
        omega = fleet.v * cos_s / fleet.r
        if self.viscous:
            g1 = np.asarray(self.family.g1.fn(omega))
            g2 = np.asarray(self.family.g2.fn(sin_s))
            speed_visc = (
                np.sum(forces.kappa * (g1[None, :] - g1[:, None]), axis=1) / self.cfg.omega_star
            )
            orient_visc = np.sum(forces.kappa * (g2[None, :] - g2[:, None]), axis=1)
        else:
            speed_visc = np.zeros(fleet.n)
            orient_visc = np.zeros(fleet.n)
        return forces, omega, cos_s, sin_s, speed_visc, orient_visc

    def fleet_controls(self, fleet: FleetState, pairs: PairGeometry | None = None, check: bool = True):
        raise NotImplementedError

    def control(self, i: int, fleet: FleetState, check: bool = True) -> ControlInput:
        if check:
            require_member(fleet, self.cfg)
        return self._control_scalar(i, _FleetAccess(fleet, self.cfg))

    def max_actuation(self, F, delta) -> float:
        return float(np.max(np.abs(F) + np.abs(delta)))


class NewtonianController(_ControllerBase):
    family_name = "ncc"

    def energy(self, fleet, pairs=None, check=True, forces=None):
        return lyapunov.newtonian_energy(
            fleet, self.cfg, self.pot, family=self.family, pairs=pairs, check=check, forces=forces
        )

    def _radial_gradient(self, err, cos_s, fleet, boundary_slope, radial_pair):
        # minus d(energy)/dr for one vehicle, all pair terms folded in
        return err * fleet.v * cos_s / fleet.r**2 - boundary_slope - radial_pair

    def fleet_terms(self, fleet, pairs=None, check=True, forces=None):
        cfg, pot = self.cfg, self.pot
        if pairs is None:
            pairs = pair_geometry(fleet, cfg)
        if check:
            require_member(fleet, cfg, pairs)
        forces, omega, cos_s, sin_s, speed_visc, orient_visc = self._couplings(fleet, pairs, forces)
        err = omega - cfg.omega_star
        b = pot.lateral_weight
        boundary_slope = forces.boundary_slope
        stiffness = (
            (b - 1.0 / fleet.r**2) * fleet.v**2 * cos_s
            + cfg.omega_star * fleet.v / fleet.r
            + pot.orientation_weight / (cos_s - math.cos(cfg.theta_max)) ** 2
        )
        if not np.all(stiffness > 0):
            raise StateSpaceError("steering denominator lost positivity; state left the domain")
        tangential = fleet.r / cfg.omega_star * forces.tangential
        radial_grad = self._radial_gradient(err, cos_s, fleet, boundary_slope, forces.radial)
        coupling = tangential - speed_visc
        scale = cfg.v_max * cos_s / (cfg.v_max * cos_s - fleet.r * cfg.omega_star)
        gain = pot.mu1 + coupling + np.asarray(self.family.gain_shaping(-scale * coupling))
        if not np.all(gain >= pot.mu1 - _GAIN_FLOOR_SLACK):
            raise RuntimeError("speed gain fell below its floor; gain shaping is inconsistent")
        return {
            "orientation_stiffness": stiffness,
            "radial_gradient": radial_grad,
            "tangential_coupling": tangential,
            "speed_viscosity": speed_visc,
            "orientation_viscosity": orient_visc,
            "speed_gain": gain,
            "err": err,
            "cos_s": cos_s,
            "sin_s": sin_s,
            "kappa": forces.kappa,
        }

    def fleet_controls(self, fleet, pairs=None, check=True, forces=None):
        cfg, pot = self.cfg, self.pot
        t = self.fleet_terms(fleet, pairs, check, forces)
        coupling = t["tangential_coupling"] - t["speed_viscosity"]
        target = fleet.r * cfg.omega_star / t["cos_s"]
        F = -t["speed_gain"] * (fleet.v - target) - target * coupling
        tan_delta = cfg.lengths * t["cos_s"] / fleet.r - cfg.lengths / (
            fleet.v * t["orientation_stiffness"]
        ) * (
            pot.mu2 * t["sin_s"]
            + (pot.lateral_weight * F * t["sin_s"] + t["radial_gradient"]) * fleet.v
            - t["orientation_viscosity"]
        )
        return F, np.arctan(tan_delta)

    def terms(self, i, fleet, check=True) -> NccTerms:
        t = self.fleet_terms(fleet, check=check)
        return NccTerms(
            orientation_stiffness=float(t["orientation_stiffness"][i]),
            radial_gradient=float(t["radial_gradient"][i]),
            tangential_coupling=float(t["tangential_coupling"][i]),
            speed_viscosity=float(t["speed_viscosity"][i]),
            orientation_viscosity=float(t["orientation_viscosity"][i]),
            speed_gain=float(t["speed_gain"][i]),
        )

    def dissipation_exact(self, fleet, pairs=None) -> float:
        """Closed-form dE/dt along the closed loop (equality, not a bound)."""
        t = self.fleet_terms(fleet, pairs, check=False)
        core = -self.pot.mu2 * float(np.sum(t["sin_s"] ** 2)) - float(
            np.sum(t["speed_gain"] * t["err"] ** 2)
        )
        return core + lyapunov.viscous_dissipation(fleet, t["kappa"], self.family)

    def dissipation_bound(self, fleet, pairs=None) -> float:
        """Relaxed upper bound on dE/dt: gain floored at mu1, viscosity dropped."""
        cos_s = np.cos(fleet.s)
        err = fleet.v * cos_s / fleet.r - self.cfg.omega_star
        return -self.pot.mu2 * float(np.sum(np.sin(fleet.s) ** 2)) - self.pot.mu1 * float(
            np.sum(err**2)
        )

    def _control_scalar(self, i, access: _FleetAccess) -> ControlInput:
        cfg, pot, fam = self.cfg, self.pot, self.family
        r, phi, s, v = access.own(i)
        tangential_raw = radial_pair = speed_visc = orient_visc = 0.0
        cos_s, sin_s = math.cos(s), math.sin(s)
        omega_own = v * cos_s / r
        for j, d in access.neighbors(i):
            rj, phij = access.position(j)
            slope = fam.pair(d, cfg.min_gap[i, j])[1]
            half = math.sin(0.5 * (phi - phij))
            tangential_raw += slope * rj * math.sin(phi - phij) / d
            radial_pair += (
                (cfg.radial_weight[i, j] * (r - rj) + rj * 2.0 * half * half) * slope / d
            )
            if self.viscous:
                kap = fam.viscosity(d, cfg.min_gap[i, j])[0]
                sj, vj = access.motion(j)
                speed_visc += kap * (fam.g1.fn(vj * math.cos(sj) / rj) - fam.g1.fn(omega_own))
                orient_visc += kap * (fam.g2.fn(math.sin(sj)) - fam.g2.fn(sin_s))
        speed_visc /= cfg.omega_star
        err = omega_own - cfg.omega_star
        boundary_slope = fam.boundary(r)[1]
        b = pot.lateral_weight
        stiffness = (
            (b - 1.0 / r**2) * v**2 * cos_s
            + cfg.omega_star * v / r
            + pot.orientation_weight / (cos_s - math.cos(cfg.theta_max)) ** 2
        )
        radial_grad = err * v * cos_s / r**2 - boundary_slope - radial_pair
        coupling = r / cfg.omega_star * tangential_raw - speed_visc
        scale = cfg.v_max * cos_s / (cfg.v_max * cos_s - r * cfg.omega_star)
        gain = pot.mu1 + coupling + float(fam.gain_shaping(-scale * coupling))
        target = r * cfg.omega_star / cos_s
        F = -gain * (v - target) - target * coupling
        tan_delta = cfg.lengths[i] * cos_s / r - cfg.lengths[i] / (v * stiffness) * (
            pot.mu2 * sin_s + (b * F * sin_s + radial_grad) * v - orient_visc
        )
        return ControlInput(F=float(F), delta=math.atan(tan_delta))


class PseudoRelativisticController(_ControllerBase):
    family_name = "prcc"

    def energy(self, fleet, pairs=None, check=True, forces=None):
        return lyapunov.relativistic_energy(
            fleet, self.cfg, self.pot, family=self.family, pairs=pairs, check=check, forces=forces
        )

    def _radial_gradient(self, err, cos_s, fleet, boundary_slope, radial_pair):
        return err * cos_s / ((self.cfg.v_max - fleet.v) * fleet.r**2) - boundary_slope - radial_pair

    def fleet_terms(self, fleet, pairs=None, check=True, forces=None):
        cfg, pot = self.cfg, self.pot
        if pairs is None:
            pairs = pair_geometry(fleet, cfg)
        if check:
            require_member(fleet, cfg, pairs)
        forces, omega, cos_s, sin_s, speed_visc, orient_visc = self._couplings(fleet, pairs, forces)
        err = omega - cfg.omega_star
        b = pot.lateral_weight
        head = cfg.v_max - fleet.v
        speed_scale = (
            cfg.v_max * fleet.v * cos_s
            - 2.0 * fleet.r * fleet.v * cfg.omega_star
            + fleet.r * cfg.omega_star * cfg.v_max
        ) / (2.0 * fleet.r * head**2 * fleet.v**2)
        stiffness = (
            pot.orientation_weight / (cos_s - math.cos(cfg.theta_max)) ** 2
            + fleet.v * cos_s / head * (b - 1.0 / fleet.r**2)
            + cfg.omega_star / (fleet.r * head)
        )
        if not (np.all(speed_scale > 0) and np.all(stiffness > 0)):
            raise StateSpaceError("control denominators lost positivity; state left the domain")
        accel_coupling = b * cfg.v_max * sin_s / (2.0 * head**2 * fleet.v)
        boundary_slope = forces.boundary_slope
        tangential = fleet.r / cfg.omega_star * forces.tangential
        radial_grad = self._radial_gradient(err, cos_s, fleet, boundary_slope, forces.radial)
        return {
            "speed_error_scale": speed_scale,
            "orientation_stiffness": stiffness,
            "accel_steer_coupling": accel_coupling,
            "radial_gradient": radial_grad,
            "tangential_coupling": tangential,
            "speed_viscosity": speed_visc,
            "orientation_viscosity": orient_visc,
            "err": err,
            "cos_s": cos_s,
            "sin_s": sin_s,
            "kappa": forces.kappa,
        }

    def fleet_controls(self, fleet, pairs=None, check=True, forces=None):
        cfg, pot = self.cfg, self.pot
        t = self.fleet_terms(fleet, pairs, check, forces)
        coupling = t["tangential_coupling"] - t["speed_viscosity"]
        F = -(np.asarray(self.family.f1.fn(t["err"])) + cfg.omega_star * coupling) / t[
            "speed_error_scale"
        ]
        tan_delta = cfg.lengths * t["cos_s"] / fleet.r - cfg.lengths / (
            t["orientation_stiffness"] * fleet.v
        ) * (
            np.asarray(self.family.f2.fn(t["sin_s"]))
            + (t["accel_steer_coupling"] * F + t["radial_gradient"]) * fleet.v
            - t["orientation_viscosity"]
        )
        return F, np.arctan(tan_delta)

    def terms(self, i, fleet, check=True) -> PrccTerms:
        t = self.fleet_terms(fleet, check=check)
        return PrccTerms(
            speed_error_scale=float(t["speed_error_scale"][i]),
            orientation_stiffness=float(t["orientation_stiffness"][i]),
            accel_steer_coupling=float(t["accel_steer_coupling"][i]),
            radial_gradient=float(t["radial_gradient"][i]),
            tangential_coupling=float(t["tangential_coupling"][i]),
            speed_viscosity=float(t["speed_viscosity"][i]),
            orientation_viscosity=float(t["orientation_viscosity"][i]),
        )

    def dissipation_exact(self, fleet, pairs=None) -> float:
        t = self.fleet_terms(fleet, pairs, check=False)
        core = -float(np.sum(t["err"] * np.asarray(self.family.f1.fn(t["err"])))) - float(
            np.sum(t["sin_s"] * np.asarray(self.family.f2.fn(t["sin_s"])))
        )
        return core + lyapunov.viscous_dissipation(fleet, t["kappa"], self.family)

    def dissipation_bound(self, fleet, pairs=None) -> float:
        cos_s = np.cos(fleet.s)
        sin_s = np.sin(fleet.s)
        err = fleet.v * cos_s / fleet.r - self.cfg.omega_star
        return -float(np.sum(err * np.asarray(self.family.f1.fn(err)))) - float(
            np.sum(sin_s * np.asarray(self.family.f2.fn(sin_s)))
        )

    def _control_scalar(self, i, access: _FleetAccess) -> ControlInput:
        cfg, pot, fam = self.cfg, self.pot, self.family
        r, phi, s, v = access.own(i)
        tangential_raw = radial_pair = speed_visc = orient_visc = 0.0
        cos_s, sin_s = math.cos(s), math.sin(s)
        omega_own = v * cos_s / r
        for j, d in access.neighbors(i):
            rj, phij = access.position(j)
            slope = fam.pair(d, cfg.min_gap[i, j])[1]
            half = math.sin(0.5 * (phi - phij))
            tangential_raw += slope * rj * math.sin(phi - phij) / d
            radial_pair += (
                (cfg.radial_weight[i, j] * (r - rj) + rj * 2.0 * half * half) * slope / d
            )
            if self.viscous:
                kap = fam.viscosity(d, cfg.min_gap[i, j])[0]
                sj, vj = access.motion(j)
                speed_visc += kap * (fam.g1.fn(vj * math.cos(sj) / rj) - fam.g1.fn(omega_own))
                orient_visc += kap * (fam.g2.fn(math.sin(sj)) - fam.g2.fn(sin_s))
        speed_visc /= cfg.omega_star
        err = omega_own - cfg.omega_star
        head = cfg.v_max - v
        b = pot.lateral_weight
        speed_scale = (
            cfg.v_max * v * cos_s - 2.0 * r * v * cfg.omega_star + r * cfg.omega_star * cfg.v_max
        ) / (2.0 * r * head**2 * v**2)
        stiffness = (
            pot.orientation_weight / (cos_s - math.cos(cfg.theta_max)) ** 2
            + v * cos_s / head * (b - 1.0 / r**2)
            + cfg.omega_star / (r * head)
        )
        accel_coupling = b * cfg.v_max * sin_s / (2.0 * head**2 * v)
        boundary_slope = fam.boundary(r)[1]
        radial_grad = err * cos_s / (head * r**2) - boundary_slope - radial_pair
        coupling = r / cfg.omega_star * tangential_raw - speed_visc
        F = -(float(fam.f1.fn(err)) + cfg.omega_star * coupling) / speed_scale
        tan_delta = cfg.lengths[i] * cos_s / r - cfg.lengths[i] / (stiffness * v) * (
            float(fam.f2.fn(sin_s)) + (accel_coupling * F + radial_grad) * v - orient_visc
        )
        return ControlInput(F=float(F), delta=math.atan(tan_delta))


_FAMILIES = {
    "ncc": NewtonianController,
    "prcc": PseudoRelativisticController,
}


def make_controller(
    cfg: RingConfig,
    pot: PotentialConfig,
    family: str = "ncc",
    viscous: bool = False,
    potentials: PotentialFamily | None = None,
):
    try:
        cls = _FAMILIES[family]
    except KeyError:
        raise ConfigError([f"unknown controller family {family!r}; choose from {sorted(_FAMILIES)}"])
    return cls(cfg, pot, viscous=viscous, family=potentials)


@dataclass(frozen=True)
class InformationAudit:
    """Which fields of which vehicles a control evaluation actually read."""

    vehicle: int
    viscous: bool
    own_fields: frozenset
    neighbor_fields: dict
    violations: tuple
    control: ControlInput


def permitted_information_audit(controller, i: int, fleet: FleetState) -> InformationAudit:
    """Run the scalar control path through a recording view and compare the
    observed reads against what a decentralized controller may measure.

    Permitted: the vehicle's own full state; relative positions (r, phi) of
    vehicles within the interaction radius; additionally their (s, v) when
    the controller is viscous.  Violations are reported, never raised.
    """
    require_member(fleet, controller.cfg)
    access = _AuditingAccess(fleet, controller.cfg)
    control = controller._control_scalar(i, access)
    neighbor_ids = {j for j, _ in _FleetAccess(fleet, controller.cfg).neighbors(i)}
    allowed_neighbor = {"r", "phi"} | ({"s", "v"} if controller.viscous else set())
    violations = []
    own_fields = set()
    neighbor_fields: dict[int, set] = {}
    for j, field in sorted(access.reads):
        if j == i:
            own_fields.add(field)
            continue
        neighbor_fields.setdefault(j, set()).add(field)
        if j not in neighbor_ids:
            violations.append(f"read {field} of vehicle {j} beyond the interaction radius")
        elif field not in allowed_neighbor:
            violations.append(f"read {field} of neighbour {j}, not permitted for this controller")
    return InformationAudit(
        vehicle=i,
        viscous=controller.viscous,
        own_fields=frozenset(own_fields),
        neighbor_fields={j: frozenset(v) for j, v in neighbor_fields.items()},
        violations=tuple(violations),
        control=control,
    )
