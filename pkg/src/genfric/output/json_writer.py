"""JSON summaries (versioned with a top-level ``schema`` field)."""

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from genfric.dualnorm import DualityResiduals, DualSolution
from genfric.model import OscillatorSystem, ResonanceReport
from genfric.output.files import atomic_write
from genfric.sim.diagnostics import GrowthReport, RhoDecayReport, energy_dissipated
from genfric.sim.motion import Trajectory
from genfric.sim.sweep import SweepReport
from genfric.support import SupportValue

SCHEMA_VERSION = 1


def _clean(value: Any) -> Any:
    """Make a value JSON-safe: arrays to lists, non-finite floats to null."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return _clean(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class JsonWriter:
    """Formats summary dictionaries as deterministic JSON.

    The schema version is injected as the first key of every document.
    """

    def __init__(self, pretty: bool = True) -> None:
        self._pretty = pretty

    def format(self, kind: str, data: dict[str, Any]) -> str:
        """Render one summary of the given ``kind`` (simulate, sweep, ...)."""
        doc = {"schema": SCHEMA_VERSION, "kind": kind, **_clean(data)}
        if self._pretty:
            return json.dumps(doc, indent=2, allow_nan=False) + "\n"
        return json.dumps(doc, allow_nan=False)

    def write(self, kind: str, data: dict[str, Any], path: Path) -> Path:
        """Atomically write the summary to ``path``."""
        return atomic_write(path, self.format(kind, data))


def system_summary(sys: OscillatorSystem) -> dict[str, Any]:
    return {"omegas": list(sys.omegas), "n": sys.n}


def support_summary(z: list[float], value: SupportValue) -> dict[str, Any]:
    return {
        "z": z,
        "value": value.value,
        "gradient": value.gradient,
        "estimated_error": value.estimated_error,
        "degenerate": list(value.degenerate),
    }


def rho_summary(
    state: list[float], sol: DualSolution, residuals: DualityResiduals | None = None
) -> dict[str, Any]:
    data: dict[str, Any] = {
        "state": state,
        "rho": sol.rho,
        "z_opt": sol.z_opt,
        "grad_rho": sol.grad_rho,
        "kkt_residual": sol.kkt_residual,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "degenerate": list(sol.degenerate),
    }
    if residuals is not None:
        data["residuals"] = residuals._asdict()
    return data


def resonance_summary(report: ResonanceReport) -> dict[str, Any]:
    return {
        "resonant": report.resonant,
        "bound": report.bound,
        "tolerance": report.tolerance,
        "witnesses": [list(m) for m in report.witnesses],
        "minimal": [list(m) for m in report.minimal],
    }


def decay_summary(report: RhoDecayReport) -> dict[str, Any]:
    return {
        "passed": report.passed,
        "checked": report.checked,
        "violations": report.violations,
        "worst_excess": report.worst_excess,
        "worst_index": report.worst_index,
    }


def growth_summary(report: GrowthReport) -> dict[str, Any]:
    return {
        "passed": report.passed,
        "checked": report.checked,
        "violations": report.violations,
        "worst_ratio": report.worst_ratio,
    }


def trajectory_summary(sys: OscillatorSystem, traj: Trajectory) -> dict[str, Any]:
    """Headline numbers of one run (first/last sample, termination, step stats)."""
    first, last = traj.samples[0], traj.samples[-1]
    return {
        "system": system_summary(sys),
        "reason": traj.reason.value,
        "epsilon": traj.epsilon,
        "samples": len(traj.samples),
        "steps": traj.steps,
        "min_step": traj.min_step,
        "t_end": last.t,
        "rho_initial": first.rho,
        "rho_final": last.rho,
        "energy_initial": first.energy,
        "energy_final": last.energy,
        "energy_dissipated": energy_dissipated(sys, traj),
        "max_abs_u": max(abs(s.u) for s in traj.samples),
        "max_abs_h_res": max(abs(s.h_res) for s in traj.samples),
    }


def sweep_summary(report: SweepReport) -> dict[str, Any]:
    return {
        "ladder": report.ladder,
        "distances": report.distances,
        "contractions": report.contractions,
        "ratio": report.ratio,
        "cauchy": report.cauchy,
        "t_end": report.t_end,
        "grid_points": report.grid_points,
        "reasons": report.reasons,
        "probe_epsilon": report.probe_epsilon,
        "probes": [
            {"delta": p.delta, "deviation": p.deviation, "gain": p.gain} for p in report.probes
        ],
    }
