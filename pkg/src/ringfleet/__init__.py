"""Deterministic simulator and verification harness for lane-free ring-road
cruise controllers."""

from .controllers import (
    ControlInput,
    NccTerms,
    NewtonianController,
    PrccTerms,
    PseudoRelativisticController,
    make_controller,
    permitted_information_audit,
)
from .dynamics import IntegratorConfig, corotating_transform, polar_rhs, cartesian_rhs, rk4_step
from .geometry import (
    ConfigError,
    FleetState,
    RingConfig,
    StateSpaceError,
    VehicleState,
    cartesian_from_polar,
    check_state_space,
    pair_geometry,
    polar_from_cartesian,
    validate_ring_config,
    weighted_distance,
)
from .lyapunov import (
    ClfValue,
    DissipationCheck,
    StepSizeError,
    dissipation_residual,
    newtonian_energy,
    relativistic_energy,
)
from .potentials import (
    PotentialConfig,
    PotentialFamily,
    boundary_potential,
    check_axioms,
    gain_shaping,
    standard_family,
    vehicle_potential,
    viscosity_kernel,
)
from .simulation import (
    InitSampler,
    MetricsSeries,
    MonitorConfig,
    PackingError,
    RunResult,
    Scenario,
    ControllerSpec,
    emit_outputs,
    equilibrium_residual,
    load_scenario,
    metrics_series,
    run_scenario,
    sample_initial_fleet,
)

__version__ = "0.1.0"
