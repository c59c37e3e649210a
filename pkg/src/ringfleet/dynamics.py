"""Open-loop vehicle models, fixed-step integration, frame transforms.

The vehicle model is the kinematic bicycle.  In polar coordinates on the
ring (r, phi, s, v with s the deviation from the local tangent):

    dr/dt   = -v sin(s)
    dphi/dt =  v cos(s) / r
    ds/dt   =  (v / length) tan(delta) - v cos(s) / r
    dv/dt   =  F

The Cartesian form (x, y, theta, v) is kept only as a cross-model oracle:
integrating both from matching initial conditions with identical held
inputs must agree after the coordinate map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import FleetState, RingConfig

__all__ = [
    "IntegratorConfig",
    "polar_rhs",
    "polar_rhs_arrays",
    "cartesian_rhs",
    "rk4_step",
    "corotating_transform",
]

HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    t_end: float = 200.0
    record_every: int = 100
    stagewise_control: bool = False

    def issues(self) -> list[str]:
        out = []
        if not self.dt > 0:
            out.append(f"time step must be positive: dt = {self.dt}")
        if not self.t_end >= self.dt:
            out.append(f"horizon must cover at least one step: t_end = {self.t_end}, dt = {self.dt}")
        if not self.record_every >= 1:
            out.append(f"record decimation must be >= 1: record_every = {self.record_every}")
        return out

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


def _check_steering(delta) -> None:
    if np.any(~(np.abs(delta) < HALF_PI)):
        raise ValueError("steering angle must satisfy |delta| < pi/2")


def polar_rhs_arrays(fleet: FleetState, F: np.ndarray, delta: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Time derivative of the stacked (4, n) polar state; no domain checks."""
    _check_steering(delta)
    cos_s = np.cos(fleet.s)
    dphi = fleet.v * cos_s / fleet.r
    out = np.empty((4, fleet.n))
    out[0] = -fleet.v * np.sin(fleet.s)
    out[1] = dphi
    out[2] = fleet.v / lengths * np.tan(delta) - dphi
    out[3] = F
    return out


def _controls_to_arrays(controls, n: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(controls, tuple) and len(controls) == 2:
        F, delta = controls
        return np.broadcast_to(np.asarray(F, float), (n,)), np.broadcast_to(
            np.asarray(delta, float), (n,)
        )
    F = np.array([u.F for u in controls], dtype=float)
    delta = np.array([u.delta for u in controls], dtype=float)
    return F, delta


def polar_rhs(fleet: FleetState, controls, cfg: RingConfig) -> np.ndarray:
    """Fleet derivative under given controls, shape (4, n) ordered r, phi, s, v.

    ``controls`` is either an ``(F, delta)`` array pair or a sequence of
    per-vehicle control inputs.
    """
    F, delta = _controls_to_arrays(controls, fleet.n)
    return polar_rhs_arrays(fleet, F, delta, cfg.lengths)


def cartesian_rhs(state, control, length):
    """Bicycle model in the plane; state ordered (x, y, theta, v)."""
    state = np.asarray(state, dtype=float)
    if isinstance(control, tuple):
        F, delta = control
    else:
        F, delta = control.F, control.delta
    _check_steering(delta)
    x, y, theta, v = state
    return np.array(
        [v * np.cos(theta), v * np.sin(theta), v / length * np.tan(delta), F * np.ones_like(v)]
    )


def rk4_step(rhs, state: np.ndarray, u, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step with inputs held constant."""
    k1 = rhs(state, u)
    k2 = rhs(state + 0.5 * dt * k1, u)
    k3 = rhs(state + 0.5 * dt * k2, u)
    k4 = rhs(state + dt * k3, u)
    out = state + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("non-finite derivative encountered during the step")
    return out


def corotating_transform(fleet: FleetState, t: float, cfg: RingConfig) -> FleetState:
    """View the fleet from an observer rotating at the angular set-point.

    Only phi changes (by -omega_star * t), so every pairwise difference and
    distance is untouched; a vehicle on the target motion is stationary in
    this frame.
    """
    return FleetState(r=fleet.r, phi=fleet.phi - cfg.omega_star * t, s=fleet.s, v=fleet.v)
