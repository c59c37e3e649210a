"""Domain types and geometry for lane-free traffic on an annular road.

Vehicle positions are polar: radius ``r`` from the road centre, angular
coordinate ``phi`` (kept unwrapped, i.e. monotone along a trajectory and
never reduced mod 2*pi), relative orientation ``s`` (heading minus the
local tangent direction) and speed ``v``.  Distances are metres, angles
radians, speeds m/s.

The inter-vehicle metric is chordal with a configurable radial weight,

    d_ab = sqrt(p_ab * (r_a - r_b)**2 + 2 * r_a * r_b * (1 - cos(phi_a - phi_b)))

which reduces to the plane Euclidean distance between the two points when
``p_ab = 1``.  Angles enter every formula in this package only through
differences, so unwrapped ``phi`` values are safe.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RingConfig",
    "VehicleState",
    "FleetState",
    "PairGeometry",
    "ConstraintViolation",
    "MembershipReport",
    "ConfigError",
    "StateSpaceError",
    "weighted_distance",
    "pair_geometry",
    "membership_margins",
    "check_state_space",
    "validate_ring_config",
    "polar_from_cartesian",
    "cartesian_from_polar",
]

HALF_PI = math.pi / 2.0


class ConfigError(ValueError):
    """A configuration failed validation; ``issues`` lists every failure."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {i}" for i in self.issues))


class StateSpaceError(ValueError):
    """A fleet state lies outside the admissible open state space."""


def _symmetric_matrix(value, n: int, name: str) -> np.ndarray:
    """Broadcast a scalar to an n-by-n matrix, or validate a given matrix shape."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        out = np.full((n, n), float(arr))
        np.fill_diagonal(out, 0.0)
        return out
    if arr.shape != (n, n):
        raise ConfigError([f"{name} must be scalar or {n}x{n}, got shape {arr.shape}"])
    return arr.copy()


@dataclass(frozen=True)
class RingConfig:
    """Road geometry, fleet composition and shared structural parameters.

    ``min_gap`` and ``radial_weight`` are symmetric n-by-n matrices (their
    diagonals are unused).  ``lengths`` holds one wheelbase per vehicle.
    """

    r_in: float
    r_out: float
    v_max: float
    omega_star: float
    theta_max: float
    n: int
    min_gap: np.ndarray
    radial_weight: np.ndarray
    interaction_radius: float
    lengths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_gap", _symmetric_matrix(self.min_gap, self.n, "min_gap"))
        object.__setattr__(
            self, "radial_weight", _symmetric_matrix(self.radial_weight, self.n, "radial_weight")
        )
        lengths = np.asarray(self.lengths, dtype=float)
        if lengths.ndim == 0:
            lengths = np.full(self.n, float(lengths))
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def uniform(
        cls,
        r_in: float,
        r_out: float,
        v_max: float,
        omega_star: float,
        theta_max: float,
        n: int,
        min_gap: float,
        radial_weight: float,
        interaction_radius: float,
        vehicle_length: float,
    ) -> "RingConfig":
        """Build a config where every pair shares the same gap and weight."""
        return cls(
            r_in=r_in,
            r_out=r_out,
            v_max=v_max,
            omega_star=omega_star,
            theta_max=theta_max,
            n=n,
            min_gap=min_gap,
            radial_weight=radial_weight,
            interaction_radius=interaction_radius,
            lengths=vehicle_length,
        )

    @property
    def r_mid(self) -> float:
        return 0.5 * (self.r_in + self.r_out)

    def validated(self) -> "RingConfig":
        issues = validate_ring_config(self)
        if issues:
            raise ConfigError(issues)
        return self


def validate_ring_config(cfg: RingConfig) -> list[str]:
    """Check every structural inequality; return one message per failure.

    Each message states both sides of the violated inequality so a bad
    scenario file can be fixed without reading source code.
    """
    issues: list[str] = []
    if not cfg.r_in > 0:
        issues.append(f"inner radius must be positive: r_in = {cfg.r_in}")
    if not cfg.r_out > cfg.r_in:
        issues.append(f"outer radius must exceed inner: r_out = {cfg.r_out} <= r_in = {cfg.r_in}")
    if not cfg.v_max > 0:
        issues.append(f"speed limit must be positive: v_max = {cfg.v_max}")
    if not cfg.n >= 1:
        issues.append(f"fleet size must be at least 1: n = {cfg.n}")

    if cfg.r_out > 0 and cfg.v_max > 0:
        upper = cfg.v_max / cfg.r_out
        if not (0.0 < cfg.omega_star < upper):
            issues.append(
                f"angular set-point must lie in the open interval (0, v_max/r_out): "
                f"omega_star = {cfg.omega_star}, v_max/r_out = {upper}"
            )
    if not (0.0 < cfg.theta_max < HALF_PI):
        issues.append(f"orientation bound must lie in (0, pi/2): theta_max = {cfg.theta_max}")
    elif cfg.v_max > 0:
        lhs = math.cos(cfg.theta_max)
        rhs = cfg.r_out * cfg.omega_star / cfg.v_max
        if not lhs > rhs:
            issues.append(
                f"cos(theta_max) must exceed r_out*omega_star/v_max: "
                f"cos({cfg.theta_max}) = {lhs:.6g} <= {rhs:.6g}"
            )

    off = ~np.eye(cfg.n, dtype=bool)
    if cfg.n > 1:
        gaps = cfg.min_gap[off]
        if not np.all(gaps > 0):
            issues.append(f"minimum gaps must be positive: min off-diagonal = {gaps.min()}")
        if not np.allclose(cfg.min_gap, cfg.min_gap.T):
            issues.append("min_gap matrix must be symmetric")
        if not cfg.interaction_radius > gaps.max():
            issues.append(
                f"interaction radius must exceed every minimum gap: "
                f"interaction_radius = {cfg.interaction_radius} <= max gap = {gaps.max()}"
            )
        weights = cfg.radial_weight[off]
        if not np.all(weights > 0):
            issues.append(f"radial weights must be positive: min off-diagonal = {weights.min()}")
        if not np.allclose(cfg.radial_weight, cfg.radial_weight.T):
            issues.append("radial_weight matrix must be symmetric")
        if not issues and weights.min() < 1.0:
            # Weights below 1 weaken the worst-case neighbour-count estimate the
            # decentralisation argument relies on; accepted, but flagged.
            warnings.warn(
                f"radial weights below 1 (min = {weights.min()}); "
                "pair-interaction bounds assume weights >= 1",
                stacklevel=2,
            )
    elif not cfg.interaction_radius > 0:
        issues.append(f"interaction radius must be positive: {cfg.interaction_radius}")

    if not np.all(cfg.lengths > 0):
        issues.append(f"vehicle lengths must be positive: min = {cfg.lengths.min()}")
    if cfg.lengths.shape != (cfg.n,):
        issues.append(f"lengths must have shape ({cfg.n},), got {cfg.lengths.shape}")
    return issues


@dataclass(frozen=True)
class VehicleState:
    """Polar state of a single vehicle."""

    r: float
    phi: float
    s: float
    v: float


@dataclass(frozen=True)
class FleetState:
    """Ordered fleet state; four equal-length coordinate arrays."""

    r: np.ndarray
    phi: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("r", "phi", "s", "v"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.r.shape == self.phi.shape == self.s.shape == self.v.shape):
            raise ValueError("fleet coordinate arrays must share one shape")

    @property
    def n(self) -> int:
        return self.r.shape[0]

    @property
    def vehicles(self) -> tuple[VehicleState, ...]:
        return tuple(
            VehicleState(float(self.r[i]), float(self.phi[i]), float(self.s[i]), float(self.v[i]))
            for i in range(self.n)
        )

    @classmethod
    def from_vehicles(cls, vehicles) -> "FleetState":
        vehicles = list(vehicles)
        return cls(
            r=np.array([w.r for w in vehicles], dtype=float),
            phi=np.array([w.phi for w in vehicles], dtype=float),
            s=np.array([w.s for w in vehicles], dtype=float),
            v=np.array([w.v for w in vehicles], dtype=float),
        )

    def as_array(self) -> np.ndarray:
        """Stack to shape (4, n), rows ordered r, phi, s, v."""
        return np.stack((self.r, self.phi, self.s, self.v))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FleetState":
        """Rebuild from a trusted (4, n) float array; skips re-validation."""
        arr = np.asarray(arr, dtype=float)
        obj = object.__new__(cls)
        object.__setattr__(obj, "r", arr[0])
        object.__setattr__(obj, "phi", arr[1])
        object.__setattr__(obj, "s", arr[2])
        object.__setattr__(obj, "v", arr[3])
        return obj


def weighted_distance(a: VehicleState, b: VehicleState, radial_weight: float = 1.0) -> float:
    """Weighted chordal distance between two vehicles.

    Symmetric in its arguments; equals the Euclidean distance between the
    two points when ``radial_weight`` is 1.
    """
    if a.r <= 0 or b.r <= 0:
        raise ValueError("radial positions must be positive")
    if radial_weight <= 0:
        raise ValueError("radial weight must be positive")
    half = math.sin(0.5 * (a.phi - b.phi))
    return math.sqrt(radial_weight * (a.r - b.r) ** 2 + 4.0 * a.r * b.r * half * half)


@dataclass(frozen=True)
class PairGeometry:
    """Pairwise geometry cache shared by controllers, energies and monitors.

    All matrices are (n, n); the distance diagonal is +inf so that a
    vehicle never interacts with itself.
    """

    d: np.ndarray
    dr: np.ndarray
    sin_dphi: np.ndarray
    one_minus_cos: np.ndarray
    active: np.ndarray


def pair_geometry(fleet: FleetState, cfg: RingConfig) -> PairGeometry:
    r, phi = fleet.r, fleet.phi
    dr = r[:, None] - r[None, :]
    dphi = phi[:, None] - phi[None, :]
    # 2*sin(x/2)^2 avoids the cancellation in 1 - cos(x) for nearby angles.
    half = np.sin(0.5 * dphi)
    one_minus_cos = 2.0 * half * half
    d2 = cfg.radial_weight * dr * dr + 2.0 * (r[:, None] * r[None, :]) * one_minus_cos
    d = np.sqrt(d2)
    np.fill_diagonal(d, np.inf)
    active = d < cfg.interaction_radius
    return PairGeometry(d=d, dr=dr, sin_dphi=np.sin(dphi), one_minus_cos=one_minus_cos, active=active)


def membership_margins(
    fleet: FleetState, cfg: RingConfig, pairs: PairGeometry | None = None
) -> dict[str, float]:
    """Smallest margin of each strict state-space inequality.

    Keys: ``r_inner``, ``r_outer``, ``v_low``, ``v_high``, ``orientation``,
    ``gap``.  Membership requires every value to be strictly positive.
    """
    if pairs is None:
        pairs = pair_geometry(fleet, cfg)
    if fleet.n > 1:
        off = ~np.eye(fleet.n, dtype=bool)
        gap = float(np.min(pairs.d[off] - cfg.min_gap[off]))
    else:
        gap = math.inf
    return {
        "r_inner": float(np.min(fleet.r) - cfg.r_in),
        "r_outer": float(cfg.r_out - np.max(fleet.r)),
        "v_low": float(np.min(fleet.v)),
        "v_high": float(cfg.v_max - np.max(fleet.v)),
        "orientation": float(cfg.theta_max - np.max(np.abs(fleet.s))),
        "gap": gap,
    }


@dataclass(frozen=True)
class ConstraintViolation:
    kind: str
    vehicles: tuple[int, ...]
    margin: float
    message: str


@dataclass(frozen=True)
class MembershipReport:
    ok: bool
    violations: tuple[ConstraintViolation, ...]
    margins: dict[str, float]

    def __bool__(self) -> bool:
        return self.ok


def check_state_space(
    fleet: FleetState, cfg: RingConfig, pairs: PairGeometry | None = None
) -> MembershipReport:
    """Strict membership test; on failure every violated constraint is listed.

    All inequalities are strict with zero tolerance: a state exactly on the
    boundary (e.g. ``v == v_max``) is not a member.
    """
    if fleet.n != cfg.n:
        raise ValueError(f"fleet has {fleet.n} vehicles but config declares {cfg.n}")
    if pairs is None:
        pairs = pair_geometry(fleet, cfg)
    violations: list[ConstraintViolation] = []

    def vehicle_checks(kind, values, fmt):
        for i, margin in enumerate(values):
            if not margin > 0:
                violations.append(
                    ConstraintViolation(kind, (i,), float(margin), fmt(i, float(margin)))
                )

    vehicle_checks(
        "radius",
        np.minimum(fleet.r - cfg.r_in, cfg.r_out - fleet.r),
        lambda i, m: f"vehicle {i}: r = {fleet.r[i]} outside ({cfg.r_in}, {cfg.r_out}), margin {m:.6g}",
    )
    vehicle_checks(
        "speed",
        np.minimum(fleet.v, cfg.v_max - fleet.v),
        lambda i, m: f"vehicle {i}: v = {fleet.v[i]} outside (0, {cfg.v_max}), margin {m:.6g}",
    )
    vehicle_checks(
        "orientation",
        cfg.theta_max - np.abs(fleet.s),
        lambda i, m: f"vehicle {i}: |s| = {abs(fleet.s[i]):.6g} not below {cfg.theta_max}, margin {m:.6g}",
    )
    for i in range(fleet.n):
        for j in range(i + 1, fleet.n):
            margin = float(pairs.d[i, j] - cfg.min_gap[i, j])
            if not margin > 0:
                violations.append(
                    ConstraintViolation(
                        "gap",
                        (i, j),
                        margin,
                        f"pair ({i}, {j}): d = {pairs.d[i, j]:.6g} not above "
                        f"minimum gap {cfg.min_gap[i, j]}, margin {margin:.6g}",
                    )
                )
    return MembershipReport(
        ok=not violations,
        violations=tuple(violations),
        margins=membership_margins(fleet, cfg, pairs),
    )


def require_member(fleet: FleetState, cfg: RingConfig, pairs: PairGeometry | None = None) -> None:
    report = check_state_space(fleet, cfg, pairs)
    if not report.ok:
        raise StateSpaceError(
            "state outside the admissible state space:\n"
            + "\n".join(f"  - {v.message}" for v in report.violations)
        )


def polar_from_cartesian(
    x: float, y: float, theta: float, v: float, phi_near: float | None = None
) -> VehicleState:
    """Convert a Cartesian pose to the polar state used on the ring.

    ``phi_near`` selects the 2*pi branch of the angular coordinate closest
    to a previous value, which keeps ``phi`` unwrapped along a trajectory.
    The relative orientation is ``s = theta - phi - pi/2``, wrapped into
    (-pi, pi].
    """
    if x == 0.0 and y == 0.0:
        raise ValueError("the road centre (0, 0) has no polar representation")
    r = math.hypot(x, y)
    phi = math.atan2(y, x)
    if phi_near is not None:
        phi += 2.0 * math.pi * round((phi_near - phi) / (2.0 * math.pi))
    s = theta - phi - HALF_PI
    s = math.remainder(s, 2.0 * math.pi)
    return VehicleState(r=r, phi=phi, s=s, v=v)


def cartesian_from_polar(state: VehicleState) -> tuple[float, float, float, float]:
    """Inverse of :func:`polar_from_cartesian` up to angle unwrapping."""
    x = state.r * math.cos(state.phi)
    y = state.r * math.sin(state.phi)
    theta = state.s + state.phi + HALF_PI
    return x, y, theta, state.v
