"""Structural checks on single states and on recorded trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from genfric.control import ControlLaw
from genfric.dualnorm import DEFAULT_TOL, DualSolution, solve_dual
from genfric.model import OscillatorSystem, drift, energy
from genfric.sim.motion import Trajectory
from genfric.support import DEFAULT_QUADRATURE, QuadratureSpec


def hamiltonian_residual(
    sys: OscillatorSystem,
    s: ArrayLike,
    sol: DualSolution | None = None,
    tol: float = DEFAULT_TOL,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """<Ax, d rho/dx>(x), which vanishes since rho is invariant under the free motion.

    Raises:
        DegenerateStateError: If s = 0
    """
    x = sys.check(s)
    if sol is None:
        sol = solve_dual(sys, x, tol=tol, spec=spec)
    return float(drift(sys, x) @ sol.grad_rho)


@dataclass
class RhoDecayReport:
    """Outcome of the monotone-decay check.

    Attributes:
        checked: Number of consecutive sample pairs compared
        violations: Indices k with rho[k+1] > rho[k] + band[k]
        worst_excess: Largest rho[k+1] - rho[k] - band[k] (<= 0 when clean)
        worst_index: Index k of the worst pair, or None for a single sample
    """

    checked: int
    violations: list[int]
    worst_excess: float
    worst_index: int | None

    @property
    def passed(self) -> bool:
        return not self.violations


def rho_decay_check(
    traj: Trajectory,
    law: ControlLaw | None = None,
    band_factor: float = 1.0,
) -> RhoDecayReport:
    """Verify rho(t_{k+1}) <= rho(t_k) + C (eps + rtol rho_k + atol).

    eps comes from ``law`` when it carries a resolved width, else from the
    width recorded on the trajectory.

    Raises:
        ValueError: If the trajectory is empty
    """
    if not traj.samples:
        raise ValueError("rho_decay_check needs a non-empty trajectory")
    eps = law.epsilon if law is not None and law.epsilon is not None else traj.epsilon
    rho = traj.column("rho")
    if rho.size < 2:
        return RhoDecayReport(checked=0, violations=[], worst_excess=-math.inf, worst_index=None)

    band = band_factor * (eps + traj.rtol * rho[:-1] + traj.atol)
    excess = np.diff(rho) - band
    worst = int(np.argmax(excess))
    return RhoDecayReport(
        checked=int(excess.size),
        violations=[int(k) for k in np.flatnonzero(excess > 0)],
        worst_excess=float(excess[worst]),
        worst_index=worst,
    )


@dataclass
class GrowthReport:
    """Outcome of the linear-growth bound check on x' = Ax + Bu."""

    checked: int
    violations: list[int]
    worst_ratio: float

    @property
    def passed(self) -> bool:
        return not self.violations


def check_linear_growth(sys: OscillatorSystem, traj: Trajectory) -> GrowthReport:
    """Check ||x'|| <= ||A|| ||x|| + ||B|| at every recorded sample.

    ||B|| = sqrt(N) in the Euclidean norm, and |u| <= 1.
    """
    b_norm = math.sqrt(sys.n)
    ratios = []
    for s in traj.samples:
        velocity = drift(sys, s.state)
        velocity[1::2] += s.u
        bound = sys.a_norm * float(np.linalg.norm(s.state)) + b_norm
        ratios.append(float(np.linalg.norm(velocity)) / bound)
    arr = np.asarray(ratios)
    return GrowthReport(
        checked=len(ratios),
        violations=[int(k) for k in np.flatnonzero(arr > 1.0 + 1e-12)],
        worst_ratio=float(arr.max()) if arr.size else 0.0,
    )


def hamiltonian_ratio(traj: Trajectory) -> float:
    """Largest |h_res| / (rho max w) over the recorded samples."""
    w_max = max(traj.omegas)
    ratios = [abs(s.h_res) / (s.rho * w_max) for s in traj.samples if s.rho > 0]
    return max(ratios, default=0.0)


def energy_dissipated(sys: OscillatorSystem, traj: Trajectory) -> float:
    """E(first sample) - E(last sample)."""
    if not traj.samples:
        return 0.0
    return energy(sys, traj.samples[0].state) - energy(sys, traj.samples[-1].state)
