"""Repulsive potentials, viscosity kernel and shaping functions.

The concrete family used by both controller types:

* pair potential     V(d) = q1 * (cutoff - d)**3 / (d - min_gap)   on (min_gap, cutoff], 0 beyond;
* wall potential     U(r) = ((r-rm)^2 - c^2)**3 / ((r - r_in)(r_out - r)) outside the free annulus
                     |r - rm| <= c, 0 inside, with rm the mid radius;
* viscosity kernel   kappa(d) = q2 * (cutoff - d)**2 on (min_gap, cutoff], 0 beyond;
* gain shaping       a C1 majorant of max(0, x), quadratic blend of width epsilon.

V and U blow up at their respective boundaries, which is what keeps the
closed loop away from collisions and the road walls; all kernels vanish
identically beyond the interaction cutoff, which is what makes the
controllers decentralized.  Derivatives are closed forms (the feedback
laws consume V' and U' directly); finite differences are used only as
test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import ConfigError, RingConfig

__all__ = [
    "PotentialConfig",
    "validate_potential_config",
    "vehicle_potential",
    "boundary_potential",
    "viscosity_kernel",
    "gain_shaping",
    "ShapingFunction",
    "linear_shaping",
    "PotentialFamily",
    "standard_family",
    "AxiomCheck",
    "AxiomReport",
    "check_axioms",
]


@dataclass(frozen=True)
class PotentialConfig:
    """Gains of the standard function family plus the two energy weights."""

    q1: float = 3e-3
    q2: float = 0.1
    c: float = 10.0
    epsilon: float = 0.2
    mu1: float = 0.3
    mu2: float = 100.0
    orientation_weight: float = 0.5
    lateral_weight: float = 1.0

    def validated(self, cfg: RingConfig) -> "PotentialConfig":
        issues = validate_potential_config(self, cfg)
        if issues:
            raise ConfigError(issues)
        return self


def validate_potential_config(pot: PotentialConfig, cfg: RingConfig) -> list[str]:
    issues = []
    if not pot.q1 > 0:
        issues.append(f"pair-potential scale must be positive: q1 = {pot.q1}")
    if not pot.q2 >= 0:
        issues.append(f"viscosity scale must be non-negative: q2 = {pot.q2}")
    half_width = 0.5 * (cfg.r_out - cfg.r_in)
    if not (0.0 < pot.c < half_width):
        issues.append(
            f"free-annulus half-width must satisfy 0 < c < (r_out - r_in)/2: "
            f"c = {pot.c}, (r_out - r_in)/2 = {half_width}"
        )
    if not pot.epsilon > 0:
        issues.append(f"gain-shaping width must be positive: epsilon = {pot.epsilon}")
    if not pot.mu1 > 0:
        issues.append(f"longitudinal gain must be positive: mu1 = {pot.mu1}")
    if not pot.mu2 > 0:
        issues.append(f"lateral gain must be positive: mu2 = {pot.mu2}")
    if not pot.orientation_weight > 0:
        issues.append(f"orientation weight must be positive: {pot.orientation_weight}")
    floor = 1.0 / cfg.r_in**2 if cfg.r_in > 0 else float("inf")
    if not pot.lateral_weight > floor:
        issues.append(
            f"lateral energy weight must exceed 1/r_in^2: "
            f"b = {pot.lateral_weight} <= {floor:.6g}"
        )
    return issues


def _scalar_like(reference, *values):
    if np.ndim(reference) == 0:
        out = tuple(float(v) for v in values)
        return out[0] if len(out) == 1 else out
    return values[0] if len(values) == 1 else values


def vehicle_potential(d, min_gap, cutoff, scale):
    """Pair repulsion and its first two derivatives, evaluated at distance d.

    Zero (with zero derivatives) for d >= cutoff, C2 across the cutoff,
    grows without bound as d approaches min_gap from above.  d <= min_gap
    is rejected: such a pair is already outside the state space.
    """
    d_in = d
    d = np.asarray(d, dtype=float)
    min_gap = np.asarray(min_gap, dtype=float)
    if np.any(d <= min_gap):
        raise ValueError("pair distance at or below the minimum gap")
    inside = d <= cutoff
    # Evaluate on the cutoff-clipped distance so the dead branch is finite.
    dc = np.where(inside, d, cutoff)
    gap = dc - min_gap
    u = cutoff - dc
    value = np.where(inside, scale * u**3 / gap, 0.0)
    slope = np.where(inside, -scale * u**2 * (3.0 * gap + u) / gap**2, 0.0)
    curvature = np.where(inside, 2.0 * scale * u * (3.0 * gap**2 + 3.0 * gap * u + u**2) / gap**3, 0.0)
    return _scalar_like(d_in, value, slope, curvature)


def boundary_potential(r, r_in, r_out, half_width):
    """Wall repulsion U(r) and U'(r); zero on the central free annulus."""
    r_arg = r
    r = np.asarray(r, dtype=float)
    if np.any((r <= r_in) | (r >= r_out)):
        raise ValueError(f"radius outside the open annulus ({r_in}, {r_out})")
    y = r - 0.5 * (r_in + r_out)
    core = y * y - half_width**2
    outside = np.abs(y) > half_width
    denom = (r - r_in) * (r_out - r)
    value = np.where(outside, core**3 / denom, 0.0)
    # d/dr of core^3/denom with denom' = -2y.
    slope = np.where(outside, 2.0 * y * core**2 * (3.0 * denom + core) / denom**2, 0.0)
    return _scalar_like(r_arg, value, slope)


def viscosity_kernel(d, min_gap, cutoff, scale):
    """Neighbour-coupling kernel kappa(d) and kappa'(d); C1 at the cutoff."""
    d_in = d
    d = np.asarray(d, dtype=float)
    min_gap = np.asarray(min_gap, dtype=float)
    if np.any(d <= min_gap):
        raise ValueError("pair distance at or below the minimum gap")
    inside = d <= cutoff
    u = np.where(inside, cutoff - d, 0.0)
    return _scalar_like(d_in, scale * u * u, -2.0 * scale * u)


def gain_shaping(x, width):
    """C1 majorant of max(0, x): 0 below -width, quadratic blend, then x + width/2."""
    x_in = x
    x = np.asarray(x, dtype=float)
    blend = (x > -width) & (x < 0.0)
    xw = np.where(blend, x + width, 0.0)
    value = np.where(x >= 0.0, 0.5 * width + x, xw * xw / (2.0 * width))
    return _scalar_like(x_in, value)


@dataclass(frozen=True)
class ShapingFunction:
    """A scalar shaping function bundled with its derivative."""

    fn: Callable
    deriv: Callable


def linear_shaping(gain: float = 1.0) -> ShapingFunction:
    return ShapingFunction(fn=lambda x: gain * x, deriv=lambda x: gain * np.ones_like(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class PotentialFamily:
    """The callable bundle consumed by energies and controllers.

    ``pair`` and ``viscosity`` take (d, min_gap) and broadcast, so a full
    distance matrix can be evaluated against a per-pair gap matrix in one
    call.  ``g1``/``g2`` are the non-decreasing viscous couplings,
    ``f1``/``f2`` the sector-bounded error shapers (f(0) = 0, x f(x) > 0
    for x != 0), and ``gain_shaping`` the max(0, x) majorant used by the
    speed-gain construction.
    """

    pair: Callable  # (d, min_gap) -> (V, V', V'')
    boundary: Callable  # (r,) -> (U, U')
    viscosity: Callable  # (d, min_gap) -> (kappa, kappa')
    g1: ShapingFunction
    g2: ShapingFunction
    f1: ShapingFunction
    f2: ShapingFunction
    gain_shaping: Callable  # (x,) -> value


def standard_family(cfg: RingConfig, pot: PotentialConfig, viscous: bool = True) -> PotentialFamily:
    """Instantiate the standard family; ``viscous=False`` zeroes the kernel.

    The default shaping choices are the identity couplings g1 = g2 = id and
    the linear error shapers f1 = mu1*x, f2 = mu2*x.  Alternative functions
    may be substituted by constructing a ``PotentialFamily`` directly; run
    :func:`check_axioms` on anything hand-rolled.
    """
    cutoff = cfg.interaction_radius
    q2 = pot.q2 if viscous else 0.0
    return PotentialFamily(
        pair=lambda d, min_gap: vehicle_potential(d, min_gap, cutoff, pot.q1),
        boundary=lambda r: boundary_potential(r, cfg.r_in, cfg.r_out, pot.c),
        viscosity=lambda d, min_gap: viscosity_kernel(d, min_gap, cutoff, q2),
        g1=linear_shaping(1.0),
        g2=linear_shaping(1.0),
        f1=linear_shaping(pot.mu1),
        f2=linear_shaping(pot.mu2),
        gain_shaping=lambda x: gain_shaping(x, pot.epsilon),
    )


@dataclass(frozen=True)
class AxiomCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AxiomReport:
    checks: tuple[AxiomCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> tuple[AxiomCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(lines)


def _strictly_increasing(values) -> bool:
    values = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(values) > 0))


def _jump_estimate(fn, x0: float, h: float = 1e-5) -> float:
    """Estimate the discontinuity of fn at x0 from two-sided samples.

    The signed difference X(h) = fn(x0+h) - fn(x0-h) is 2h f'(x0) + O(h^3)
    for a continuous function but tends to the jump for a discontinuous
    one; the two-step combination 2 X(h/2) - X(h) cancels the smooth part.
    """
    x_full = fn(x0 + h) - fn(x0 - h)
    x_half = fn(x0 + 0.5 * h) - fn(x0 - 0.5 * h)
    return abs(2.0 * x_half - x_full)


def _curvature_jump_estimate(slope_fn, x0: float, h: float = 1e-5) -> float:
    """Estimate the second-derivative discontinuity at x0 given the analytic
    first derivative; one-sided slope differences of slope_fn converge to the
    one-sided curvatures, and the two-step combination cancels the smooth
    linear-in-h part."""

    def osd_gap(hh):
        right = (slope_fn(x0 + 2 * hh) - slope_fn(x0 + hh)) / hh
        left = (slope_fn(x0 - hh) - slope_fn(x0 - 2 * hh)) / hh
        return right - left

    return abs(2.0 * osd_gap(0.5 * h) - osd_gap(h))


def _zero_set_edges(fn, grid, values, iters: int = 60) -> list[float]:
    """Bisect the boundaries between zero and non-zero stretches of fn on grid."""
    edges = []
    nonzero = np.asarray(values) != 0.0
    for k in range(len(grid) - 1):
        if nonzero[k] == nonzero[k + 1]:
            continue
        lo, hi = grid[k], grid[k + 1]
        lo_zero = not nonzero[k]
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if (fn(mid) == 0.0) == lo_zero:
                lo = mid
            else:
                hi = mid
        edges.append(0.5 * (lo + hi))
    return edges


def check_axioms(family: PotentialFamily, cfg: RingConfig) -> AxiomReport:
    """Sample-based verification of the structural requirements on a family.

    Blow-up limits cannot be asserted literally, so they are tested as
    strict monotone growth along a geometric approach sequence
    (offset 10**-k, k = 1..8).  Smoothness at branch joins is checked by
    comparing values and numerical derivatives from both sides.
    """
    checks: list[AxiomCheck] = []
    cutoff = cfg.interaction_radius
    off = ~np.eye(cfg.n, dtype=bool)
    gaps = np.unique(cfg.min_gap[off]) if cfg.n > 1 else np.array([cutoff / 3.0])

    def add(name, passed, detail):
        checks.append(AxiomCheck(name, bool(passed), detail))

    # --- pair potential -------------------------------------------------
    for gap in gaps:
        # offsets 1e-1 .. 1e-8: values must grow strictly as the gap closes
        approach = gap + 10.0 ** -np.arange(1, 9)
        vals = family.pair(approach, gap)[0]
        add(
            "pair_blowup_at_min_gap",
            _strictly_increasing(vals) and vals.min() > 0,
            f"gap {gap}: V({gap}+1e-1..1e-8) spans [{vals.min():.4g}, {vals.max():.4g}]",
        )
        grid = np.linspace(gap + 1e-3, cutoff, 257)
        v, v1, v2 = family.pair(grid, gap)
        add("pair_nonnegative", np.all(v >= 0), f"gap {gap}: min V on grid = {np.min(v):.4g}")
        far = np.linspace(cutoff, cutoff + 3 * (cutoff - gap), 65)
        vf, v1f, v2f = family.pair(far, gap)
        add(
            "pair_zero_beyond_cutoff",
            np.all(vf == 0) and np.all(v1f == 0) and np.all(v2f == 0),
            f"gap {gap}: max |V|,|V'|,|V''| beyond cutoff = "
            f"{max(np.max(np.abs(vf)), np.max(np.abs(v1f)), np.max(np.abs(v2f))):.4g}",
        )
        joins = [
            _jump_estimate(lambda x: family.pair(x, gap)[k], cutoff) for k in (0, 1, 2)
        ]
        add(
            "pair_smooth_at_cutoff",
            max(joins) < 1e-6,
            f"gap {gap}: estimated V, V', V'' jumps at the cutoff = {[f'{j:.2g}' for j in joins]}",
        )

    # pair symmetry: a symmetric distance matrix must give a symmetric value matrix
    if cfg.n > 1:
        rng = np.random.default_rng(0)
        base = cfg.min_gap + 1.0 + rng.uniform(0, cutoff, size=(cfg.n, cfg.n))
        d_sym = 0.5 * (base + base.T)
        np.fill_diagonal(d_sym, np.inf)
        v_sym = family.pair(d_sym, cfg.min_gap)[0]
        k_sym = family.viscosity(d_sym, cfg.min_gap)[0]
        add(
            "pair_symmetric",
            np.allclose(v_sym, v_sym.T, rtol=0, atol=0),
            f"max asymmetry {np.max(np.abs(v_sym - v_sym.T)):.4g}",
        )
        add(
            "viscosity_symmetric",
            np.allclose(k_sym, k_sym.T, rtol=0, atol=0),
            f"max asymmetry {np.max(np.abs(k_sym - k_sym.T)):.4g}",
        )

    # --- boundary potential ----------------------------------------------
    # offsets 1e-1 .. 1e-8 off each wall: strict growth as the wall nears
    inner = cfg.r_in + 10.0 ** -np.arange(1, 9)
    outer = cfg.r_out - 10.0 ** -np.arange(1, 9)
    u_inner = family.boundary(inner)[0]
    u_outer = family.boundary(outer)[0]
    add(
        "boundary_blowup_at_walls",
        _strictly_increasing(u_inner) and _strictly_increasing(u_outer),
        f"U near walls spans [{min(u_inner.min(), u_outer.min()):.4g}, "
        f"{max(u_inner.max(), u_outer.max()):.4g}]",
    )
    r_grid = np.linspace(cfg.r_in + 1e-3, cfg.r_out - 1e-3, 2049)
    u_vals = family.boundary(r_grid)[0]
    add("boundary_nonnegative", np.all(u_vals >= 0), f"min U on grid = {np.min(u_vals):.4g}")
    for edge in _zero_set_edges(lambda r: family.boundary(r)[0], r_grid, u_vals):
        mism = [
            _jump_estimate(lambda x: family.boundary(x)[0], edge),
            _jump_estimate(lambda x: family.boundary(x)[1], edge),
            _curvature_jump_estimate(lambda x: family.boundary(x)[1], edge),
        ]
        add(
            "boundary_smooth_at_free_annulus_edge",
            mism[0] < 1e-6 and mism[1] < 1e-6 and mism[2] < 1e-4,
            f"edge near r = {edge:.6g}: estimated U, U', U'' jumps = "
            f"{[f'{m:.2g}' for m in mism]}",
        )

    # --- viscosity ---------------------------------------------------------
    for gap in gaps:
        far = np.linspace(cutoff, cutoff + 2 * (cutoff - gap), 33)
        kf, k1f = family.viscosity(far, gap)
        add(
            "viscosity_zero_beyond_cutoff",
            np.all(kf == 0) and np.all(k1f == 0),
            f"gap {gap}: max |kappa|, |kappa'| beyond cutoff = "
            f"{max(np.max(np.abs(kf)), np.max(np.abs(k1f))):.4g}",
        )
        grid = np.linspace(gap + 1e-3, cutoff, 129)
        kv = family.viscosity(grid, gap)[0]
        add("viscosity_nonnegative", np.all(kv >= 0), f"gap {gap}: min kappa = {np.min(kv):.4g}")
        mism = [
            _jump_estimate(lambda x: family.viscosity(x, gap)[k], cutoff) for k in (0, 1)
        ]
        add(
            "viscosity_smooth_at_cutoff",
            max(mism) < 1e-6,
            f"gap {gap}: estimated kappa, kappa' jumps = {[f'{m:.2g}' for m in mism]}",
        )

    # --- shaping functions ---------------------------------------------------
    x_grid = np.linspace(-5.0, 5.0, 1001)
    fx = np.asarray(family.gain_shaping(x_grid))
    add(
        "gain_shaping_majorizes_positive_part",
        np.all(fx >= np.maximum(0.0, x_grid)) and np.all(fx >= 0),
        f"min of f(x) - max(0, x) = {np.min(fx - np.maximum(0.0, x_grid)):.4g}",
    )
    slope_jumps = []
    fine = np.linspace(-2.0, 1.0, 30001)
    f_fine = np.asarray(family.gain_shaping(fine))
    slopes = np.diff(f_fine) / np.diff(fine)
    slope_jumps.append(float(np.max(np.abs(np.diff(slopes)))))
    add(
        "gain_shaping_c1",
        max(slope_jumps) < 1e-2,
        f"largest slope jump of the gain shaping on a fine grid = {max(slope_jumps):.3g}",
    )
    for label, sf in (("f1", family.f1), ("f2", family.f2)):
        at_zero = float(np.asarray(sf.fn(0.0)))
        nz = x_grid[x_grid != 0.0]
        sector = np.asarray(sf.fn(nz)) * nz
        add(
            f"error_shaping_sector_{label}",
            at_zero == 0.0 and np.all(sector > 0),
            f"{label}(0) = {at_zero}, min x*{label}(x) off zero = {np.min(sector):.4g}",
        )
    for label, sf in (("g1", family.g1), ("g2", family.g2)):
        vals = np.asarray(sf.fn(x_grid))
        add(
            f"coupling_nondecreasing_{label}",
            np.all(np.diff(vals) >= 0),
            f"min increment of {label} on grid = {np.min(np.diff(vals)):.4g}",
        )

    return AxiomReport(checks=tuple(checks))
