"""Closed-loop simulation, trajectory diagnostics and eps-convergence sweeps."""

from genfric.sim.canonical import CanonicalTrajectory, canonical_integrate
from genfric.sim.diagnostics import (
    GrowthReport,
    RhoDecayReport,
    check_linear_growth,
    energy_dissipated,
    hamiltonian_ratio,
    hamiltonian_residual,
    rho_decay_check,
)
from genfric.sim.motion import (
    Sample,
    SimConfig,
    SolverLimits,
    SolverSettings,
    StandstillMonitor,
    StepSettings,
    Termination,
    Trajectory,
    integrate,
)
from genfric.sim.sweep import (
    ContinuityProbe,
    SweepReport,
    epsilon_sweep,
    epsilon_sweep_async,
    thread_limit,
)

__all__ = [
    "CanonicalTrajectory",
    "ContinuityProbe",
    "GrowthReport",
    "RhoDecayReport",
    "Sample",
    "SimConfig",
    "SolverLimits",
    "SolverSettings",
    "StandstillMonitor",
    "StepSettings",
    "SweepReport",
    "Termination",
    "Trajectory",
    "canonical_integrate",
    "check_linear_growth",
    "energy_dissipated",
    "epsilon_sweep",
    "epsilon_sweep_async",
    "hamiltonian_ratio",
    "hamiltonian_residual",
    "integrate",
    "rho_decay_check",
    "thread_limit",
]
