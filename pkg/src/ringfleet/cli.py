"""Command-line front end: run, sweep, verify and plots.

Exit codes: 0 on success, 1 when a run-time monitor fired or a
verification check failed, 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from .controllers import make_controller, permitted_information_audit
from .dynamics import polar_rhs_arrays, rk4_step, cartesian_rhs
from .geometry import (
    ConfigError,
    FleetState,
    VehicleState,
    cartesian_from_polar,
    polar_from_cartesian,
)
from .lyapunov import StepSizeError, dissipation_residual
from .potentials import check_axioms, standard_family
from .simulation import (
    InitSampler,
    comparison_table,
    emit_outputs,
    load_scenario,
    run_scenario,
    sample_initial_fleet,
    sweep_scenarios,
)

_PLOT_ONLY_FILES = ("metrics.csv", "trajectory.csv")


def _cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    result = run_scenario(sc)
    out_dir = args.out or sc.output_dir or (Path(args.scenario).stem + "_run")
    paths = emit_outputs(result, out_dir)
    m = result.metrics
    if not args.quiet:
        print(f"scenario : {args.scenario}")
        print(f"outputs  : {paths['trajectory'].parent}")
        print(f"steps    : {sc.integrator.steps} at dt = {sc.integrator.dt} (runtime {result.runtime_s:.1f} s)")
        print(f"energy   : {m.clf[0]:.6g} -> {m.clf[-1]:.6g}")
        print(f"sup |v/r - omega*| at t_end : {m.sup_angular_error[-1]:.3e}")
        print(f"sup |F| at t_end            : {m.sup_accel[-1]:.3e}")
        print(f"min gap over run            : {np.min(m.min_gap):.6g}")
        print("margins  : " + ", ".join(f"{k}={v:.4g}" for k, v in result.margins.items()))
        print(f"max |F| + |delta| over run  : {result.max_actuation:.6g}")
    if result.passed:
        if not args.quiet:
            print("verdict  : PASS")
        return 0
    v = result.violation
    print(f"verdict  : FAIL [{v.kind}] at t = {v.time:.6g} (step {v.step}): {v.message}")
    return 1


def _cmd_sweep(args) -> int:
    with open(args.scenario, "r", encoding="utf-8") as fh:
        tree = yaml.safe_load(fh)
    vary = {}
    for spec in args.vary or []:
        if "=" not in spec:
            raise ConfigError([f"--vary must look like key=v1,v2,... got {spec!r}"])
        key, _, values = spec.partition("=")
        vary[key] = [yaml.safe_load(v) for v in values.split(",")]
    out_root = args.out or (Path(args.scenario).stem + "_sweep")
    entries = sweep_scenarios(tree, vary, out_root, jobs=args.jobs)
    print(comparison_table(entries))
    return 0 if all(e.passed for e in entries) else 1


def _verify_line(ok: bool, label: str, detail: str = "") -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else ""))
    return ok


def _cmd_verify(args) -> int:
    sc = load_scenario(args.scenario)
    cfg, pot = sc.ring, sc.potentials
    ok = True

    family = standard_family(cfg, pot, viscous=sc.controller.viscous)
    report = check_axioms(family, cfg)
    ok &= _verify_line(
        report.passed,
        "potential and shaping axioms",
        f"{len(report.checks)} checks" if report.passed else str(report.failures),
    )

    # analytic derivatives against central differences at random points
    rng = np.random.default_rng(12345)
    h = 1e-6
    gap = float(np.max(cfg.min_gap))
    worst = 0.0
    for _ in range(25):
        d = rng.uniform(gap + 0.5, cfg.interaction_radius - 0.5)
        fd = (family.pair(d + h, gap)[0] - family.pair(d - h, gap)[0]) / (2 * h)
        worst = max(worst, abs(fd - family.pair(d, gap)[1]) / max(1.0, abs(fd)))
        r = rng.uniform(cfg.r_in + 1.0, cfg.r_out - 1.0)
        fd = (family.boundary(r + h)[0] - family.boundary(r - h)[0]) / (2 * h)
        worst = max(worst, abs(fd - family.boundary(r)[1]) / max(1.0, abs(fd)))
    ok &= _verify_line(worst < 1e-5, "closed-form derivatives vs central differences", f"worst {worst:.2e}")

    controller = make_controller(cfg, pot, family=sc.controller.family, viscous=sc.controller.viscous)
    sampler = InitSampler(seed=2024, r_margin=8.0, s_margin=0.05, v_margin=2.0, gap_margin=2.0)
    worst_mismatch = 0.0
    worst_margin = 0.0
    for k in range(args.samples):
        fleet = sample_initial_fleet(InitSampler(**{**sampler.__dict__, "seed": 2024 + k}), cfg)
        try:
            chk = dissipation_residual(fleet, controller, cfg, h=sc.monitors.fd_step)
        except StepSizeError as exc:
            ok &= _verify_line(False, f"dissipation sample {k}", str(exc))
            continue
        worst_mismatch = max(worst_mismatch, abs(chk.dE_dt_fd - chk.exact) / max(1.0, abs(chk.exact)))
        worst_margin = min(worst_margin, chk.margin / max(1.0, abs(chk.bound)))
    ok &= _verify_line(
        worst_mismatch < sc.monitors.dissipation_tolerance,
        f"dissipation identity on {args.samples} sampled states",
        f"worst relative mismatch {worst_mismatch:.2e}",
    )
    ok &= _verify_line(
        worst_margin > -sc.monitors.dissipation_tolerance,
        "dissipation bound on sampled states",
        f"worst relative margin {worst_margin:.2e}",
    )

    # polar vs Cartesian cross-check on a short held-input flight
    state = VehicleState(r=cfg.r_mid, phi=0.3, s=0.02, v=0.5 * cfg.v_max)
    polar = FleetState.from_vehicles([state])
    cart = np.array(cartesian_from_polar(state))
    length = float(cfg.lengths[0])
    dt, worst_gap = 1e-3, 0.0
    p_arr = polar.as_array()
    for k in range(2000):
        F = 0.2 * np.sin(0.01 * k)
        delta = np.arctan(length / cfg.r_mid) + 0.02 * np.cos(0.013 * k)
        p_arr = rk4_step(
            lambda a, u: polar_rhs_arrays(FleetState.from_array(a), np.array([u[0]]), np.array([u[1]]), cfg.lengths[:1]),
            p_arr, (F, delta), dt,
        )
        cart = rk4_step(lambda a, u: cartesian_rhs(a, u, length), cart, (F, delta), dt)
        mapped = polar_from_cartesian(cart[0], cart[1], cart[2], cart[3], phi_near=float(p_arr[1, 0]))
        worst_gap = max(
            worst_gap,
            abs(mapped.r - p_arr[0, 0]),
            abs(mapped.phi - p_arr[1, 0]),
            abs(mapped.s - p_arr[2, 0]),
            abs(mapped.v - p_arr[3, 0]),
        )
    ok &= _verify_line(worst_gap < 1e-6, "polar vs Cartesian model agreement (2 s)", f"worst {worst_gap:.2e}")

    # decentralization audit on a sampled fleet
    fleet = sample_initial_fleet(sampler, cfg)
    audit = permitted_information_audit(controller, 0, fleet)
    ok &= _verify_line(
        not audit.violations,
        "information access audit",
        "no out-of-scope reads" if not audit.violations else "; ".join(audit.violations),
    )
    return 0 if ok else 1


def _cmd_plots(args) -> int:
    run_dir = Path(args.run_dir)
    missing = [name for name in _PLOT_ONLY_FILES if not (run_dir / name).exists()]
    if missing:
        print(f"not a run directory (missing {missing}): {run_dir}", file=sys.stderr)
        return 2
    from .simulation import _PLOT_SCRIPT  # reuse the template

    label = run_dir.name
    (run_dir / "plots.py").write_text(
        _PLOT_SCRIPT.format(gap_floor=0.0, label=label), encoding="utf-8"
    )
    print(f"wrote {run_dir / 'plots.py'}; run it with python to render figures")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringfleet",
        description="Lane-free ring-road cruise-controller simulator and verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario to its horizon under monitors")
    p_run.add_argument("scenario", help="scenario YAML file")
    p_run.add_argument("--out", default=None, help="output directory (default: <scenario>_run)")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid of runs over scenario overrides")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument(
        "--vary", action="append", metavar="KEY=V1,V2,...",
        help="dotted scenario key and comma-separated values; repeatable",
    )
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_verify = sub.add_parser(
        "verify", help="axiom checks, dissipation sampling and model cross-checks (no long run)"
    )
    p_verify.add_argument("scenario")
    p_verify.add_argument("--samples", type=int, default=25)
    p_verify.set_defaults(fn=_cmd_verify)

    p_plots = sub.add_parser("plots", help="(re)generate the plot script for a run directory")
    p_plots.add_argument("run_dir")
    p_plots.set_defaults(fn=_cmd_plots)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
