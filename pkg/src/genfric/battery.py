"""The invariant battery behind ``genfric check``.

Each check produces a :class:`CheckResult`; the battery passes only when all
of them do. Resonance witnesses are reported but never fail the battery.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from genfric.config import RunConfig
from genfric.dualnorm import duality_residuals, solve_dual
from genfric.model import FloatArray, OscillatorSystem, detect_resonance
from genfric.output.json_writer import (
    decay_summary,
    growth_summary,
    resonance_summary,
    sweep_summary,
)
from genfric.sim.diagnostics import check_linear_growth, hamiltonian_ratio, rho_decay_check
from genfric.sim.motion import Termination, Trajectory, integrate
from genfric.sim.sweep import epsilon_sweep
from genfric.support import QuadratureSpec

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    """Outcome of one named check."""

    name: str
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)


@dataclass
class BatteryReport:
    """All check outcomes plus the resonance diagnostic."""

    checks: list[CheckResult] = field(default_factory=list)
    resonance: dict[str, Any] = field(default_factory=dict)
    trajectory: Trajectory | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def sample_states(sys: OscillatorSystem, count: int, seed: int) -> list[FloatArray]:
    """Random states whose block amplitudes lie in [0.5, 2] (no degenerate blocks)."""
    rng = np.random.default_rng(seed)
    states = []
    for _ in range(count):
        amp = rng.uniform(0.5, 2.0, size=sys.n)
        phase = rng.uniform(0.0, 2.0 * math.pi, size=sys.n)
        s = np.empty(sys.dim)
        s[0::2] = amp * np.cos(phase) / sys.omega
        s[1::2] = amp * np.sin(phase)
        states.append(s)
    return states


def check_duality(
    sys: OscillatorSystem,
    states: list[FloatArray],
    spec: QuadratureSpec,
    tol: float,
    rel_tol: float,
) -> CheckResult:
    """Duality gaps and restart agreement, each relative to rho."""
    worst = {"pairing_gap": 0.0, "fixedpoint_gap": 0.0, "euler_gap": 0.0, "restart_gap": 0.0}
    unconverged = 0
    for s in states:
        sol = solve_dual(sys, s, tol=tol, spec=spec)
        if not sol.converged:
            unconverged += 1
        res = duality_residuals(sys, s, sol, spec)
        for name, value in res._asdict().items():
            worst[name] = max(worst[name], value / sol.rho)
        restart = solve_dual(sys, s, tol=tol, spec=spec, initial=np.ones(sys.n))
        gap = float(np.linalg.norm(restart.z_opt - sol.z_opt) / np.linalg.norm(sol.z_opt))
        worst["restart_gap"] = max(worst["restart_gap"], gap)
    passed = unconverged == 0 and all(v <= rel_tol for v in worst.values())
    return CheckResult(
        "duality",
        passed,
        {"states": len(states), "unconverged": unconverged, "tolerance": rel_tol, **worst},
    )


def run_battery(cfg: RunConfig) -> BatteryReport:
    """Run every check configured in ``cfg``.

    Raises:
        IntegrationError: If the simulation or a sweep rung cannot be integrated
    """
    sys = cfg.oscillators()
    spec = cfg.quadrature
    report = BatteryReport()

    res = detect_resonance(
        sys,
        cfg.resonance.bound,
        cfg.resonance.tolerance,
        max_search_size=cfg.resonance.max_search_size,
    )
    report.resonance = resonance_summary(res)
    if res.resonant:
        logger.info("Resonant frequencies, minimal witnesses %s", res.minimal)

    states = sample_states(sys, cfg.check.samples, cfg.check.seed)
    report.checks.append(
        check_duality(sys, states, spec, cfg.solver.tol, cfg.check.residual_tol)
    )

    sim_cfg = cfg.sim_config()
    traj = integrate(sys, cfg.state.initial, sim_cfg)
    report.trajectory = traj
    report.checks.append(
        CheckResult(
            "solver",
            traj.reason is not Termination.SOLVER_FAILURE,
            {"reason": traj.reason.value, "samples": len(traj)},
        )
    )
    ratio = hamiltonian_ratio(traj)
    report.checks.append(
        CheckResult(
            "hamiltonian",
            ratio <= cfg.check.hamiltonian_tol,
            {"worst_ratio": ratio, "tolerance": cfg.check.hamiltonian_tol},
        )
    )
    if traj.samples:
        decay = rho_decay_check(traj, band_factor=sim_cfg.band_factor)
        report.checks.append(CheckResult("rho_decay", decay.passed, decay_summary(decay)))
        growth = check_linear_growth(sys, traj)
        report.checks.append(CheckResult("linear_growth", growth.passed, growth_summary(growth)))

    if cfg.check.sweep:
        sweep = epsilon_sweep(
            sys,
            cfg.state.initial,
            cfg.sweep_config(),
            cfg.sweep.ladder,
            ratio=cfg.sweep.ratio,
            probe_sizes=cfg.sweep.probe_sizes,
            probe_epsilon=cfg.sweep.probe_epsilon,
            grid_max_points=cfg.sweep.grid_max_points,
        )
        report.checks.append(CheckResult("epsilon_cauchy", sweep.cauchy, sweep_summary(sweep)))
    return report
