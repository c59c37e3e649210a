"""Scenario definition, the monitored run loop, metrics and file emission.

A scenario is a key/value tree (YAML on disk) with sections mirroring the
dataclasses here: ``ring``, ``potentials``, ``controller``, ``integrator``,
``init``, ``monitors``, ``outputs``.  Runs are deterministic: the same
scenario and seed produce byte-identical output files.

The run loop enforces three monitors:

* state-space membership after every step (strict inequalities, zero
  tolerance; a violation is an error, never a clamp);
* energy monotonicity after every step, within 1e-6 * max(1, E);
* a finite-difference dissipation audit at a configurable cadence.

A monitor firing stops the run and is reported with the first violated
invariant, its time and a state snapshot; the run verdict is then a fail.
"""

from __future__ import annotations

import copy
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .controllers import make_controller
from .dynamics import IntegratorConfig, polar_rhs_arrays, rk4_step
from .geometry import (
    ConfigError,
    FleetState,
    RingConfig,
    VehicleState,
    check_state_space,
    membership_margins,
    pair_geometry,
    require_member,
    validate_ring_config,
    weighted_distance,
)
from .lyapunov import StepSizeError, dissipation_residual, pair_forces
from .potentials import PotentialConfig, standard_family, validate_potential_config

__all__ = [
    "ControllerSpec",
    "InitSampler",
    "MonitorConfig",
    "Scenario",
    "PackingError",
    "MonitorViolation",
    "TrajectoryRecord",
    "MetricsSeries",
    "RunResult",
    "sample_initial_fleet",
    "equilibrium_residual",
    "run_scenario",
    "metrics_series",
    "emit_outputs",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "apply_override",
    "sweep_scenarios",
    "comparison_table",
]


class PackingError(RuntimeError):
    """The initial-condition sampler could not place the fleet."""


@dataclass(frozen=True)
class ControllerSpec:
    family: str = "ncc"
    viscous: bool = False
    shaping: str = "linear"


@dataclass(frozen=True)
class InitSampler:
    """Seeded rejection sampler for an admissible initial fleet.

    Margins shrink each sampled interval away from its open boundary; the
    gap margin is added on top of every pairwise minimum gap.
    """

    seed: int = 0
    r_margin: float = 10.0
    s_margin: float = 0.12
    v_margin: float = 2.5
    gap_margin: float = 4.0
    max_attempts: int = 20000


@dataclass(frozen=True)
class MonitorConfig:
    clf_tolerance: float = 1e-6
    dissipation_every: int = 100
    dissipation_tolerance: float = 1e-6
    fd_step: float = 1e-4


@dataclass(frozen=True)
class Scenario:
    ring: RingConfig
    potentials: PotentialConfig
    controller: ControllerSpec = ControllerSpec()
    integrator: IntegratorConfig = IntegratorConfig()
    init: InitSampler | FleetState = InitSampler()
    monitors: MonitorConfig = MonitorConfig()
    output_dir: str | None = None


def validate_scenario(sc: Scenario) -> list[str]:
    issues = validate_ring_config(sc.ring)
    issues += validate_potential_config(sc.potentials, sc.ring)
    issues += sc.integrator.issues()
    if sc.controller.family not in ("ncc", "prcc"):
        issues.append(f"unknown controller family {sc.controller.family!r}")
    if sc.controller.shaping != "linear":
        issues.append(
            f"unknown shaping choice {sc.controller.shaping!r}; "
            "custom shaping functions go through the library API"
        )
    if sc.integrator.steps % sc.integrator.record_every != 0:
        issues.append(
            f"step count {sc.integrator.steps} is not a multiple of "
            f"record_every = {sc.integrator.record_every}; the final state would go unrecorded"
        )
    if isinstance(sc.init, FleetState):
        if sc.init.n != sc.ring.n:
            issues.append(f"explicit initial fleet has {sc.init.n} vehicles, config declares {sc.ring.n}")
        elif not issues:
            report = check_state_space(sc.init, sc.ring)
            if not report.ok:
                issues += [f"explicit initial state: {v.message}" for v in report.violations]
    else:
        init = sc.init
        if init.r_margin < 0 or init.s_margin < 0 or init.v_margin < 0 or init.gap_margin < 0:
            issues.append("sampler margins must be non-negative")
        elif not issues:
            if sc.ring.r_in + init.r_margin >= sc.ring.r_out - init.r_margin:
                issues.append(f"radial margin {init.r_margin} leaves no admissible radius band")
            if init.s_margin >= sc.ring.theta_max:
                issues.append(f"orientation margin {init.s_margin} >= bound {sc.ring.theta_max}")
            if 2 * init.v_margin >= sc.ring.v_max:
                issues.append(f"speed margin {init.v_margin} leaves no admissible speed band")
    if not sc.monitors.clf_tolerance > 0:
        issues.append("energy monotonicity tolerance must be positive")
    if not sc.monitors.dissipation_every >= 0:
        issues.append("dissipation cadence must be >= 0 (0 disables the audit)")
    if not sc.monitors.fd_step > 0:
        issues.append("finite-difference step must be positive")
    return issues


def sample_initial_fleet(spec: InitSampler, cfg: RingConfig) -> FleetState:
    """Draw an admissible fleet; deterministic for a given seed.

    Vehicles are accepted one at a time; a candidate is rejected when it
    comes within ``min_gap + gap_margin`` of any accepted vehicle.  Fails
    with a packing diagnostic once ``max_attempts`` draws are spent.
    """
    r_lo, r_hi = cfg.r_in + spec.r_margin, cfg.r_out - spec.r_margin
    s_cap = cfg.theta_max - spec.s_margin
    v_lo, v_hi = spec.v_margin, cfg.v_max - spec.v_margin
    if not (r_lo < r_hi and s_cap > 0 and v_lo < v_hi):
        raise ConfigError(["sampler margins leave an empty admissible box"])
    rng = np.random.default_rng(spec.seed)
    accepted: list[VehicleState] = []
    attempts = 0
    while len(accepted) < cfg.n:
        if attempts >= spec.max_attempts:
            raise PackingError(
                f"placed {len(accepted)} of {cfg.n} vehicles after {attempts} draws; "
                f"the annulus cannot hold the fleet at gap margin {spec.gap_margin}"
            )
        attempts += 1
        i = len(accepted)
        cand = VehicleState(
            r=rng.uniform(r_lo, r_hi),
            phi=rng.uniform(0.0, 2.0 * math.pi),
            s=rng.uniform(-s_cap, s_cap),
            v=rng.uniform(v_lo, v_hi),
        )
        ok = all(
            weighted_distance(cand, other, cfg.radial_weight[i, j])
            > cfg.min_gap[i, j] + spec.gap_margin
            for j, other in enumerate(accepted)
        )
        if ok:
            accepted.append(cand)
    fleet = FleetState.from_vehicles(accepted)
    require_member(fleet, cfg)
    return fleet


def equilibrium_residual(fleet: FleetState, cfg: RingConfig, pot: PotentialConfig,
                         family=None, pairs=None, check: bool = True) -> float:
    """Distance-like residual that vanishes exactly on closed-loop equilibria.

    Sums, over vehicles: the speed error |v - omega* r|, the orientation
    |s|, the unbalanced radial force |U'(r) + pair radial gradient| and the
    unbalanced tangential force.
    """
    if family is None:
        family = standard_family(cfg, pot)
    if pairs is None:
        pairs = pair_geometry(fleet, cfg)
    if check:
        require_member(fleet, cfg, pairs)
    forces = pair_forces(fleet, cfg, family, pairs)
    boundary_slope = np.asarray(family.boundary(fleet.r)[1])
    per_vehicle = (
        np.abs(fleet.v - cfg.omega_star * fleet.r)
        + np.abs(fleet.s)
        + np.abs(boundary_slope + forces.radial)
        + np.abs(forces.tangential)
    )
    return float(np.sum(per_vehicle))


@dataclass(frozen=True)
class MonitorViolation:
    kind: str
    step: int
    time: float
    message: str
    fleet: FleetState


@dataclass
class TrajectoryRecord:
    """Decimated time series of states, controls, energy and monitor status."""

    scenario: Scenario
    t: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    s: np.ndarray
    v: np.ndarray
    F: np.ndarray
    delta: np.ndarray
    clf: np.ndarray
    monitor_ok: np.ndarray

    @property
    def rows(self) -> int:
        return len(self.t)

    def fleet(self, idx: int) -> FleetState:
        return FleetState(r=self.r[idx], phi=self.phi[idx], s=self.s[idx], v=self.v[idx])


@dataclass(frozen=True)
class MetricsSeries:
    t: np.ndarray
    sup_angular_error: np.ndarray
    sup_accel: np.ndarray
    sup_orientation: np.ndarray
    min_gap: np.ndarray
    clf: np.ndarray
    equilibrium_residual: np.ndarray

    COLUMNS = (
        "t",
        "sup_angular_error",
        "sup_accel",
        "sup_orientation",
        "min_gap",
        "clf",
        "equilibrium_residual",
    )


@dataclass
class RunResult:
    scenario: Scenario
    record: TrajectoryRecord
    metrics: MetricsSeries
    margins: dict
    passed: bool
    violation: MonitorViolation | None
    max_actuation: float
    runtime_s: float

    @property
    def final_fleet(self) -> FleetState:
        return self.record.fleet(self.record.rows - 1)


def resolve_initial_fleet(sc: Scenario) -> FleetState:
    if isinstance(sc.init, FleetState):
        return sc.init
    return sample_initial_fleet(sc.init, sc.ring)


def _spot_check_dissipation(fleet, controller, cfg, mon: MonitorConfig):
    """Run the finite-difference audit, refining h if the step cannot resolve
    the derivative; returns (check, message or None)."""
    tol = mon.dissipation_tolerance
    check = None
    for h in (mon.fd_step, mon.fd_step / 8.0, mon.fd_step / 64.0):
        try:
            check = dissipation_residual(fleet, controller, cfg, h=h)
        except StepSizeError:
            continue
        if check.matches_exact(tol) and check.within_bound(tol):
            return check, None
    if check is None:
        return None, "finite-difference dissipation estimate failed to converge in h"
    msgs = []
    if not check.matches_exact(tol):
        msgs.append(
            f"dE/dt finite difference {check.dE_dt_fd:.9g} does not match the analytic "
            f"rate {check.exact:.9g} (tolerance {tol:g} relative)"
        )
    if not check.within_bound(tol):
        msgs.append(
            f"dE/dt finite difference {check.dE_dt_fd:.9g} exceeds the dissipation "
            f"bound {check.bound:.9g}"
        )
    return check, "; ".join(msgs)


def run_scenario(sc: Scenario, controller=None) -> RunResult:
    """Integrate the closed loop to the horizon under the three monitors.

    ``controller`` overrides the scenario's controller (used for fault
    injection in tests and for custom shaping families).  Returns a result
    whose ``passed`` flag is True iff no monitor fired.
    """
    issues = validate_scenario(sc)
    if issues:
        raise ConfigError(issues)
    cfg, pot, it, mon = sc.ring, sc.potentials, sc.integrator, sc.monitors
    if controller is None:
        controller = make_controller(cfg, pot, family=sc.controller.family, viscous=sc.controller.viscous)
    fleet = resolve_initial_fleet(sc)

    steps = it.steps
    n_rows = steps // it.record_every + 1
    rec_t = np.zeros(n_rows)
    rec = {name: np.zeros((n_rows, cfg.n)) for name in ("r", "phi", "s", "v", "F", "delta")}
    rec_clf = np.zeros(n_rows)
    rec_ok = np.ones(n_rows, dtype=bool)

    margins = {k: math.inf for k in ("r_inner", "r_outer", "v_low", "v_high", "orientation", "gap")}
    max_actuation = 0.0
    violation = None
    prev_energy = None
    row = 0
    lengths = cfg.lengths
    family = controller.family

    def open_loop_rhs(arr, u):
        # inputs held over the step; u = (F, tan(delta)) with tan precomputed
        r, s, v = arr[0], arr[2], arr[3]
        cos_s = np.cos(s)
        dphi = v * cos_s / r
        out = np.empty_like(arr)
        out[0] = -v * np.sin(s)
        out[1] = dphi
        out[2] = v / lengths * u[1] - dphi
        out[3] = u[0]
        return out

    def closed_loop_rhs(arr, _):
        w = FleetState.from_array(arr)
        F, delta = controller.fleet_controls(w, check=False)
        return polar_rhs_arrays(w, F, delta, lengths)

    started = time.perf_counter()
    state = fleet.as_array()
    for k in range(steps + 1):
        t_k = k * it.dt
        w = FleetState.from_array(state)
        pairs = pair_geometry(w, cfg)
        step_margins = membership_margins(w, cfg, pairs)
        for key, value in step_margins.items():
            if value < margins[key]:
                margins[key] = value
        if min(step_margins.values()) <= 0.0:
            report = check_state_space(w, cfg, pairs)
            violation = MonitorViolation(
                kind="state_space",
                step=k,
                time=t_k,
                message="; ".join(v.message for v in report.violations),
                fleet=w,
            )
        energy = None
        forces = None
        if violation is None:
            forces = pair_forces(w, cfg, family, pairs)
            energy = controller.energy(w, pairs=pairs, check=False, forces=forces).total
            if prev_energy is not None and energy > prev_energy + mon.clf_tolerance * max(1.0, prev_energy):
                violation = MonitorViolation(
                    kind="clf_increase",
                    step=k,
                    time=t_k,
                    message=(
                        f"energy rose from {prev_energy:.12g} to {energy:.12g} over one step, "
                        f"beyond tolerance {mon.clf_tolerance:g} * max(1, E)"
                    ),
                    fleet=w,
                )
        if violation is not None:
            # snapshot row for the violation, then stop
            rec_t[row] = t_k
            for name, arr in (("r", w.r), ("phi", w.phi), ("s", w.s), ("v", w.v)):
                rec[name][row] = arr
            rec["F"][row] = np.nan
            rec["delta"][row] = np.nan
            rec_clf[row] = energy if energy is not None else np.nan
            rec_ok[row] = False
            row += 1
            break
        F, delta = controller.fleet_controls(w, pairs=pairs, check=False, forces=forces)
        actuation = controller.max_actuation(F, delta)
        if actuation > max_actuation:
            max_actuation = actuation
        if k % it.record_every == 0:
            rec_t[row] = t_k
            rec["r"][row] = w.r
            rec["phi"][row] = w.phi
            rec["s"][row] = w.s
            rec["v"][row] = w.v
            rec["F"][row] = F
            rec["delta"][row] = delta
            rec_clf[row] = energy
            row += 1
        if mon.dissipation_every > 0 and k % mon.dissipation_every == 0:
            # k = 0 included: a transcribed-wrong controller is caught at the
            # initial state, before the energy monitor has a baseline
            _, problem = _spot_check_dissipation(w, controller, cfg, mon)
            if problem is not None:
                violation = MonitorViolation(
                    kind="dissipation", step=k, time=t_k, message=problem, fleet=w
                )
                break
        prev_energy = energy
        if k == steps:
            break
        if it.stagewise_control:
            state = rk4_step(closed_loop_rhs, state, None, it.dt)
        else:
            state = rk4_step(open_loop_rhs, state, (F, np.tan(delta)), it.dt)
    runtime = time.perf_counter() - started

    record = TrajectoryRecord(
        scenario=sc,
        t=rec_t[:row],
        r=rec["r"][:row],
        phi=rec["phi"][:row],
        s=rec["s"][:row],
        v=rec["v"][:row],
        F=rec["F"][:row],
        delta=rec["delta"][:row],
        clf=rec_clf[:row],
        monitor_ok=rec_ok[:row],
    )
    metrics = metrics_series(record)
    return RunResult(
        scenario=sc,
        record=record,
        metrics=metrics,
        margins=margins,
        passed=violation is None,
        violation=violation,
        max_actuation=max_actuation,
        runtime_s=runtime,
    )


def metrics_series(record: TrajectoryRecord) -> MetricsSeries:
    """Figure-style series on the recorded time grid."""
    if record.rows == 0:
        raise ValueError("empty trajectory record")
    sc = record.scenario
    cfg, pot = sc.ring, sc.potentials
    family = standard_family(cfg, pot, viscous=sc.controller.viscous)
    off = ~np.eye(cfg.n, dtype=bool)
    min_gap = np.zeros(record.rows)
    residual = np.zeros(record.rows)
    for idx in range(record.rows):
        w = record.fleet(idx)
        pairs = pair_geometry(w, cfg)
        min_gap[idx] = float(np.min(pairs.d[off])) if cfg.n > 1 else math.inf
        residual[idx] = equilibrium_residual(w, cfg, pot, family=family, pairs=pairs, check=False)
    sup_angular = np.max(np.abs(record.v / record.r - cfg.omega_star), axis=1)
    with np.errstate(invalid="ignore"):
        sup_accel = np.max(np.abs(record.F), axis=1)
    sup_orientation = np.max(np.abs(record.s), axis=1)
    return MetricsSeries(
        t=record.t.copy(),
        sup_angular_error=sup_angular,
        sup_accel=sup_accel,
        sup_orientation=sup_orientation,
        min_gap=min_gap,
        clf=record.clf.copy(),
        equilibrium_residual=residual,
    )


# ---------------------------------------------------------------------------
# scenario (de)serialisation
# ---------------------------------------------------------------------------

_SECTION_KEYS = {
    "ring": {
        "r_in", "r_out", "v_max", "omega_star", "theta_max", "n",
        "min_gap", "radial_weight", "interaction_radius", "vehicle_length",
    },
    "potentials": {"q1", "q2", "c", "epsilon", "mu1", "mu2", "orientation_weight", "lateral_weight"},
    "controller": {"family", "viscous", "shaping"},
    "integrator": {"dt", "t_end", "record_every", "stagewise_control"},
    "init": {"seed", "r_margin", "s_margin", "v_margin", "gap_margin", "max_attempts", "explicit"},
    "monitors": {"clf_tolerance", "dissipation_every", "dissipation_tolerance", "fd_step"},
    "outputs": {"directory"},
}


def _check_keys(section: str, data: dict) -> None:
    unknown = set(data) - _SECTION_KEYS[section]
    if unknown:
        raise ConfigError([f"unknown key(s) in section {section!r}: {sorted(unknown)}"])


def scenario_from_dict(tree: dict) -> Scenario:
    unknown = set(tree) - set(_SECTION_KEYS)
    if unknown:
        raise ConfigError([f"unknown scenario section(s): {sorted(unknown)}"])
    if "ring" not in tree:
        raise ConfigError(["scenario is missing the 'ring' section"])
    ring_data = dict(tree["ring"])
    _check_keys("ring", ring_data)
    length = ring_data.pop("vehicle_length", 5.0)
    ring = RingConfig(
        r_in=float(ring_data["r_in"]),
        r_out=float(ring_data["r_out"]),
        v_max=float(ring_data["v_max"]),
        omega_star=float(ring_data["omega_star"]),
        theta_max=float(ring_data["theta_max"]),
        n=int(ring_data["n"]),
        min_gap=np.asarray(ring_data.get("min_gap", 6.0), dtype=float),
        radial_weight=np.asarray(ring_data.get("radial_weight", 1.0), dtype=float),
        interaction_radius=float(ring_data.get("interaction_radius", 20.0)),
        lengths=np.asarray(length, dtype=float),
    )
    pot_data = dict(tree.get("potentials", {}))
    _check_keys("potentials", pot_data)
    pot = PotentialConfig(**{k: float(v) for k, v in pot_data.items()})
    ctl_data = dict(tree.get("controller", {}))
    _check_keys("controller", ctl_data)
    controller = ControllerSpec(
        family=str(ctl_data.get("family", "ncc")),
        viscous=bool(ctl_data.get("viscous", False)),
        shaping=str(ctl_data.get("shaping", "linear")),
    )
    it_data = dict(tree.get("integrator", {}))
    _check_keys("integrator", it_data)
    integrator = IntegratorConfig(
        dt=float(it_data.get("dt", 1e-3)),
        t_end=float(it_data.get("t_end", 200.0)),
        record_every=int(it_data.get("record_every", 100)),
        stagewise_control=bool(it_data.get("stagewise_control", False)),
    )
    init_data = dict(tree.get("init", {}))
    _check_keys("init", init_data)
    init: InitSampler | FleetState
    if "explicit" in init_data:
        rows = init_data["explicit"]
        init = FleetState.from_vehicles(
            VehicleState(r=float(x["r"]), phi=float(x["phi"]), s=float(x["s"]), v=float(x["v"]))
            for x in rows
        )
    else:
        init = InitSampler(
            seed=int(init_data.get("seed", 0)),
            r_margin=float(init_data.get("r_margin", 10.0)),
            s_margin=float(init_data.get("s_margin", 0.12)),
            v_margin=float(init_data.get("v_margin", 2.5)),
            gap_margin=float(init_data.get("gap_margin", 4.0)),
            max_attempts=int(init_data.get("max_attempts", 20000)),
        )
    mon_data = dict(tree.get("monitors", {}))
    _check_keys("monitors", mon_data)
    monitors = MonitorConfig(
        clf_tolerance=float(mon_data.get("clf_tolerance", 1e-6)),
        dissipation_every=int(mon_data.get("dissipation_every", 100)),
        dissipation_tolerance=float(mon_data.get("dissipation_tolerance", 1e-6)),
        fd_step=float(mon_data.get("fd_step", 1e-4)),
    )
    out_data = dict(tree.get("outputs", {}))
    _check_keys("outputs", out_data)
    directory = out_data.get("directory")
    return Scenario(
        ring=ring,
        potentials=pot,
        controller=controller,
        integrator=integrator,
        init=init,
        monitors=monitors,
        output_dir=str(directory) if directory else None,
    )


def _collapse_uniform(matrix: np.ndarray):
    off = ~np.eye(matrix.shape[0], dtype=bool)
    vals = matrix[off]
    if vals.size == 0 or np.all(vals == vals[0]):
        return float(vals[0]) if vals.size else 0.0
    return [[float(x) for x in row] for row in matrix]


def scenario_to_dict(sc: Scenario) -> dict:
    """Exact resolved configuration, suitable for byte-stable YAML echo."""
    ring = sc.ring
    lengths = (
        float(ring.lengths[0]) if np.all(ring.lengths == ring.lengths[0]) else [float(x) for x in ring.lengths]
    )
    tree: dict = {
        "ring": {
            "r_in": ring.r_in,
            "r_out": ring.r_out,
            "v_max": ring.v_max,
            "omega_star": ring.omega_star,
            "theta_max": ring.theta_max,
            "n": ring.n,
            "min_gap": _collapse_uniform(ring.min_gap),
            "radial_weight": _collapse_uniform(ring.radial_weight),
            "interaction_radius": ring.interaction_radius,
            "vehicle_length": lengths,
        },
        "potentials": {
            "q1": sc.potentials.q1,
            "q2": sc.potentials.q2,
            "c": sc.potentials.c,
            "epsilon": sc.potentials.epsilon,
            "mu1": sc.potentials.mu1,
            "mu2": sc.potentials.mu2,
            "orientation_weight": sc.potentials.orientation_weight,
            "lateral_weight": sc.potentials.lateral_weight,
        },
        "controller": {
            "family": sc.controller.family,
            "viscous": sc.controller.viscous,
            "shaping": sc.controller.shaping,
        },
        "integrator": {
            "dt": sc.integrator.dt,
            "t_end": sc.integrator.t_end,
            "record_every": sc.integrator.record_every,
            "stagewise_control": sc.integrator.stagewise_control,
        },
        "monitors": {
            "clf_tolerance": sc.monitors.clf_tolerance,
            "dissipation_every": sc.monitors.dissipation_every,
            "dissipation_tolerance": sc.monitors.dissipation_tolerance,
            "fd_step": sc.monitors.fd_step,
        },
        "outputs": {"directory": sc.output_dir},
    }
    if isinstance(sc.init, FleetState):
        tree["init"] = {
            "explicit": [
                {"r": float(w.r), "phi": float(w.phi), "s": float(w.s), "v": float(w.v)}
                for w in sc.init.vehicles
            ]
        }
    else:
        tree["init"] = {
            "seed": sc.init.seed,
            "r_margin": sc.init.r_margin,
            "s_margin": sc.init.s_margin,
            "v_margin": sc.init.v_margin,
            "gap_margin": sc.init.gap_margin,
            "max_attempts": sc.init.max_attempts,
        }
    return tree


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        tree = yaml.safe_load(fh)
    if not isinstance(tree, dict):
        raise ConfigError([f"scenario file {path} does not contain a key/value tree"])
    return scenario_from_dict(tree)


def apply_override(tree: dict, dotted_key: str, value) -> None:
    """Set ``tree['a']['b'] = value`` for dotted key 'a.b'; sections must exist."""
    parts = dotted_key.split(".")
    node = tree
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def emit_outputs(result: RunResult, out_dir) -> dict:
    """Write trajectory.csv, metrics.csv, the scenario echo and a plot script.

    Floats are written with shortest round-trip formatting, so identical
    runs produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record, metrics = result.record, result.metrics
    n = result.scenario.ring.n

    traj_path = out / "trajectory.csv"
    headers = ["t"]
    for i in range(n):
        headers += [f"r{i}", f"phi{i}", f"s{i}", f"v{i}", f"F{i}", f"delta{i}"]
    with open(traj_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(headers) + "\n")
        for row in range(record.rows):
            cells = [_fmt(record.t[row])]
            for i in range(n):
                cells += [
                    _fmt(record.r[row, i]),
                    _fmt(record.phi[row, i]),
                    _fmt(record.s[row, i]),
                    _fmt(record.v[row, i]),
                    _fmt(record.F[row, i]),
                    _fmt(record.delta[row, i]),
                ]
            fh.write(",".join(cells) + "\n")

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(MetricsSeries.COLUMNS) + "\n")
        columns = [getattr(metrics, name) for name in MetricsSeries.COLUMNS]
        for row in range(len(metrics.t)):
            fh.write(",".join(_fmt(col[row]) for col in columns) + "\n")

    echo_path = out / "scenario.yaml"
    tree = scenario_to_dict(result.scenario)
    tree["outputs"]["directory"] = None  # the directory is a run-time choice
    with open(echo_path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(tree, fh, sort_keys=True, default_flow_style=False)

    plots_path = out / "plots.py"
    gap_floor = float(np.max(result.scenario.ring.min_gap))
    label = f"{result.scenario.controller.family.upper()}, " + (
        "viscous" if result.scenario.controller.viscous else "inviscid"
    )
    plots_path.write_text(_PLOT_SCRIPT.format(gap_floor=gap_floor, label=label), encoding="utf-8")
    return {
        "trajectory": traj_path,
        "metrics": metrics_path,
        "scenario": echo_path,
        "plots": plots_path,
    }


_PLOT_SCRIPT = '''"""Render the standard figure set from metrics.csv (same directory)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent
LABEL = {label!r}
GAP_FLOOR = {gap_floor!r}

data = np.genfromtxt(HERE / "metrics.csv", delimiter=",", names=True)
t = data["t"]

panels = [
    ("sup_angular_error", "max |v/r - omega*| (1/s)", "log"),
    ("sup_accel", "max |F| (m/s^2)", "log"),
    ("sup_orientation", "max |s| (rad)", "log"),
    ("min_gap", "min inter-vehicle distance (m)", "linear"),
    ("clf", "fleet energy", "log"),
    ("equilibrium_residual", "equilibrium residual", "log"),
]

for column, ylab, scale in panels:
    fig, ax = plt.subplots(figsize=(7, 4))
    y = data[column]
    if scale == "log":
        y = np.maximum(y, 1e-18)
    ax.plot(t, y)
    if column == "min_gap":
        ax.axhline(GAP_FLOOR, linestyle="--", color="tab:red", label="minimum gap")
        ax.legend()
    ax.set_yscale(scale)
    ax.set_xlabel("t (s)")
    ax.set_ylabel(ylab)
    ax.set_title(f"{{column}} ({{LABEL}})")
    fig.tight_layout()
    fig.savefig(HERE / f"{{column}}.png", dpi=150)
    plt.close(fig)

print("wrote", len(panels), "figures to", HERE)
'''


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepEntry:
    name: str
    out_dir: str
    passed: bool
    summary: dict


def _variant_name(overrides: dict) -> str:
    return "__".join(f"{k.replace('.', '_')}={v}" for k, v in overrides.items()) or "base"


def _run_variant(args) -> SweepEntry:
    tree, overrides, out_dir = args
    tree = copy.deepcopy(tree)
    for key, value in overrides.items():
        apply_override(tree, key, value)
    sc = scenario_from_dict(tree)
    result = run_scenario(sc)
    emit_outputs(result, out_dir)
    m = result.metrics
    summary = {
        "passed": result.passed,
        "violation": result.violation.message if result.violation else None,
        "energy_start": float(m.clf[0]),
        "energy_mid": float(m.clf[len(m.clf) // 2]),
        "energy_end": float(m.clf[-1]),
        "sup_angular_error_end": float(m.sup_angular_error[-1]),
        "sup_accel_end": float(m.sup_accel[-1]),
        "min_gap_overall": float(np.min(m.min_gap)),
        "max_actuation": result.max_actuation,
        "runtime_s": result.runtime_s,
    }
    return SweepEntry(
        name=_variant_name(overrides), out_dir=str(out_dir), passed=result.passed, summary=summary
    )


def sweep_scenarios(tree: dict, vary: dict, out_root, jobs: int = 1) -> list[SweepEntry]:
    """Run the cartesian product of the ``vary`` axes, one directory per run.

    Runs are independent (no shared mutable state) and execute in parallel
    processes when ``jobs > 1``.
    """
    out_root = Path(out_root)
    keys = list(vary)
    combos = list(itertools.product(*(vary[k] for k in keys))) if keys else [()]
    tasks = []
    for combo in combos:
        overrides = dict(zip(keys, combo))
        tasks.append((tree, overrides, str(out_root / _variant_name(overrides))))
    if jobs <= 1 or len(tasks) == 1:
        return [_run_variant(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_run_variant, tasks))


def comparison_table(entries) -> str:
    """Plain-text comparison of sweep results; descriptive, asserts nothing."""
    cols = [
        ("variant", lambda e: e.name),
        ("verdict", lambda e: "pass" if e.passed else "FAIL"),
        ("E(0)", lambda e: f"{e.summary['energy_start']:.4g}"),
        ("E(T/2)", lambda e: f"{e.summary['energy_mid']:.4g}"),
        ("E(T)", lambda e: f"{e.summary['energy_end']:.4g}"),
        ("sup|v/r-w*|(T)", lambda e: f"{e.summary['sup_angular_error_end']:.4g}"),
        ("min gap", lambda e: f"{e.summary['min_gap_overall']:.4g}"),
    ]
    rows = [[fn(e) for _, fn in cols] for e in entries]
    widths = [max(len(head), *(len(r[i]) for r in rows)) if rows else len(head)
              for i, (head, _) in enumerate(cols)]
    lines = ["  ".join(head.ljust(widths[i]) for i, (head, _) in enumerate(cols))]
    for r in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)))
    return "\n".join(lines)
