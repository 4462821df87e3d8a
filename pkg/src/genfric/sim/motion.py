"""Damped motion x' = Ax + B u_eps(x) under the regularized feedback."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, model_validator

from genfric.control import ControlLaw, StagePolicy, regularized_from_sigma, stage_select
from genfric.dualnorm import DEFAULT_MAX_ITER, DEFAULT_TOL, DualCache, DualSolution
from genfric.errors import DegenerateStateError, DualSolverError, TrajectoryFormatError
from genfric.model import FloatArray, OscillatorSystem, drift, energy
from genfric.sim.stepper import (
    AcceptedStep,
    DenseSegment,
    StepGuard,
    StepTolerance,
    integrate_adaptive,
)
from genfric.support import DEFAULT_QUADRATURE, QuadratureSpec

logger = logging.getLogger(__name__)

# A solve that missed the tolerance by less than this factor is still used
_FAILURE_SLACK = 1e3

# rho below this fraction of rho(s0) counts as having reached the origin
_ORIGIN_RATIO = 1e-12


class Termination(str, Enum):
    """Why a run stopped."""

    TERMINAL_STAGE = "terminal-stage"
    HORIZON = "horizon"
    STANDSTILL = "standstill"
    SOLVER_FAILURE = "solver-failure"


class SolverLimits(BaseModel):
    """Tolerance, iteration budget and reuse radius of the dual solver."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tol: float = Field(default=DEFAULT_TOL, gt=0)
    max_iter: int = Field(default=DEFAULT_MAX_ITER, ge=1)
    reuse_delta: float = Field(default=0.0, ge=0)


class SolverSettings(SolverLimits):
    """Dual-norm solver settings used along a trajectory."""

    quadrature: QuadratureSpec = DEFAULT_QUADRATURE


class StepSettings(BaseModel):
    """Horizon, step control, standstill and recording settings of a run.

    ``stall_window`` defaults to one slowest period 2 pi / min w.
    ``stall_delta`` is relative to rho at the start of the window.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    t_max: float = Field(default=50.0, gt=0)
    h_init: float = Field(default=1e-3, gt=0)
    h_max: float = Field(default=0.1, gt=0)
    rtol: float = Field(default=1e-9, gt=0)
    atol: float = Field(default=1e-12, gt=0)
    stall_window: float | None = Field(default=None, gt=0)
    stall_delta: float = Field(default=1e-6, gt=0)
    detect_standstill: bool = True
    record_stride: int = Field(default=1, ge=1)
    drift_only: bool = False
    band_factor: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def check_steps(self) -> StepSettings:
        """The initial step may not exceed the step cap."""
        if self.h_init > self.h_max:
            raise ValueError(f"h_init ({self.h_init}) must not exceed h_max ({self.h_max})")
        return self

    @property
    def tolerance(self) -> StepTolerance:
        return StepTolerance(h_init=self.h_init, h_max=self.h_max, rtol=self.rtol, atol=self.atol)

    def window_for(self, sys: OscillatorSystem) -> float:
        """Standstill window length for ``sys``."""
        if self.stall_window is not None:
            return self.stall_window
        return 2.0 * math.pi / min(sys.omegas)


class SimConfig(StepSettings):
    """Settings for one simulated run: step settings plus the feedback and solver.

    ``keep_dense`` retains the continuous extension of every step in the
    trajectory (see :meth:`Trajectory.state_at`).
    """

    law: ControlLaw = Field(default_factory=ControlLaw)
    stages: StagePolicy | None = None
    solver: SolverSettings = Field(default_factory=SolverSettings)
    keep_dense: bool = False


@dataclass
class Sample:
    """One recorded point of a trajectory."""

    t: float
    state: FloatArray
    u: float
    sigma: float
    rho: float
    h_res: float
    energy: float


@dataclass
class Trajectory:
    """Recorded samples of one run and why it stopped.

    Attributes:
        omegas: Frequencies of the simulated system
        samples: Recorded points, strictly increasing in t
        reason: Termination tag
        epsilon: Regularization width actually used
        amplitude: Largest control amplitude the run allowed
        rtol: Relative step tolerance of the run
        atol: Absolute step tolerance of the run
        min_step: Smallest accepted step (inf for a run without steps)
        steps: Number of accepted steps
        segments: Continuous extension of every accepted step, kept when the
            run was configured with ``keep_dense``
    """

    omegas: tuple[float, ...]
    samples: list[Sample] = field(default_factory=list)
    reason: Termination = Termination.HORIZON
    epsilon: float = 0.0
    amplitude: float = 1.0
    rtol: float = 0.0
    atol: float = 0.0
    min_step: float = math.inf
    steps: int = 0
    segments: list[DenseSegment] = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return len(self.omegas)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> FloatArray:
        return np.array([s.t for s in self.samples])

    @property
    def states(self) -> FloatArray:
        """Recorded states as an (n_samples, 2N) array."""
        return np.array([s.state for s in self.samples]).reshape(len(self.samples), 2 * self.n)

    def state_at(self, times: ArrayLike) -> FloatArray:
        """States at ``times``, shape (len(times), 2N).

        Uses the continuous extension of the steps when the run kept it and
        linear interpolation between samples otherwise. Times outside the
        recorded span are clamped to it.
        """
        grid = np.atleast_1d(np.asarray(times, dtype=np.float64))
        if not self.segments:
            states = self.states
            return np.column_stack(
                [np.interp(grid, self.times, states[:, j]) for j in range(states.shape[1])]
            )
        ends = np.array([seg.t1 for seg in self.segments])
        index = np.minimum(np.searchsorted(ends, grid), len(self.segments) - 1)
        out = np.empty((grid.size, 2 * self.n))
        for k in np.unique(index):
            seg = self.segments[k]
            mask = index == k
            out[mask] = seg(np.clip(grid[mask], seg.t0, seg.t1))
        return out

    def column(self, name: str) -> FloatArray:
        """One scalar column (u, sigma, rho, h_res, energy) as an array."""
        return np.array([getattr(s, name) for s in self.samples], dtype=np.float64)

    def validate(self) -> None:
        """Check the recorded-sample invariants.

        Raises:
            TrajectoryFormatError: On empty input, non-increasing times,
                |u| above 1, wrong state length or non-finite values
        """
        if not self.samples:
            raise TrajectoryFormatError("Trajectory has no samples")
        prev = -math.inf
        for k, s in enumerate(self.samples):
            if not s.t > prev:
                raise TrajectoryFormatError(f"Sample {k}: time {s.t!r} does not increase")
            prev = s.t
            if len(s.state) != 2 * self.n:
                raise TrajectoryFormatError(
                    f"Sample {k}: state has length {len(s.state)}, expected {2 * self.n}"
                )
            if abs(s.u) > 1.0 + 1e-12:
                raise TrajectoryFormatError(f"Sample {k}: |u| = {abs(s.u)!r} exceeds 1")
            values = [s.t, s.u, s.sigma, s.rho, s.h_res, s.energy, *s.state]
            if not all(math.isfinite(v) for v in values):
                raise TrajectoryFormatError(f"Sample {k}: non-finite entry")


@dataclass
class StepEvaluation:
    """Dual solution and control at one right-hand-side evaluation."""

    sol: DualSolution | None
    sigma: float
    u: float


class _SolverFailure(Exception):
    def __init__(self, sol: DualSolution) -> None:
        super().__init__(f"dual solve residual {sol.kkt_residual:.3e}")
        self.sol = sol


class _Origin(Exception):
    pass


def sigma_guard(eps: float) -> StepGuard:
    """Reject steps that move sigma by more than eps/2 near or across the surface."""

    def guard(start: StepEvaluation, end: StepEvaluation) -> float | None:
        jump = abs(end.sigma - start.sigma)
        near = min(abs(start.sigma), abs(end.sigma)) <= eps or start.sigma * end.sigma < 0
        if near and jump > 0.5 * eps:
            return max(0.1, 0.45 * eps / jump)
        return None

    return guard


def hamiltonian_residual_of(sys: OscillatorSystem, s: FloatArray, sol: DualSolution) -> float:
    """<Ax, d rho/dx> at a solved state."""
    return float(drift(sys, s) @ sol.grad_rho)


class StandstillMonitor:
    """Flags a run whose rho fell by less than ``delta`` (relative) over ``window``.

    Only the samples needed for the comparison are kept: the newest one at
    least ``window`` old and everything after it.
    """

    def __init__(self, window: float, delta: float) -> None:
        self.window = window
        self.delta = delta
        self._history: deque[tuple[float, float]] = deque()

    def __len__(self) -> int:
        return len(self._history)

    def update(self, t: float, rho: float) -> bool:
        """Record (t, rho); True once rho has stalled over a full window."""
        history = self._history
        history.append((t, rho))
        cutoff = t - self.window
        while len(history) > 1 and history[1][0] <= cutoff:
            history.popleft()
        t_ref, rho_ref = history[0]
        return t_ref <= cutoff and rho_ref - rho < self.delta * rho_ref


def integrate(sys: OscillatorSystem, s0: ArrayLike, cfg: SimConfig | None = None) -> Trajectory:
    """Simulate the regularized closed loop from ``s0``.

    The run ends at the horizon, when the stage policy declares the terminal
    stage (or rho has collapsed to the origin), when rho stalls over one
    standstill window, or when the dual solver fails; in the last case the
    partial trajectory is returned.

    Raises:
        DegenerateStateError: If s0 = 0
        IntegrationError: If the step size underflows
    """
    cfg = cfg or SimConfig()
    x0 = sys.check(s0, "initial state")
    cache = DualCache(
        sys,
        spec=cfg.solver.quadrature,
        tol=cfg.solver.tol,
        max_iter=cfg.solver.max_iter,
        reuse_delta=cfg.solver.reuse_delta,
    )
    sol0 = cache.solve(x0)
    if sol0.rho == 0:
        raise DegenerateStateError("Initial state is the origin")
    rho0 = sol0.rho
    law = cfg.law.resolve(rho0)
    eps = law.width
    failure_level = _FAILURE_SLACK * cfg.solver.tol

    stage_amp = 1.0
    traj = Trajectory(
        omegas=sys.omegas,
        epsilon=eps,
        amplitude=0.0 if cfg.drift_only else law.amplitude,
        rtol=cfg.rtol,
        atol=cfg.atol,
    )
    if cfg.stages is not None:
        decision = stage_select(cfg.stages, rho0)
        if decision.terminal:
            traj.samples.append(_sample(sys, 0.0, x0, sol0, 0.0))
            traj.reason = Termination.TERMINAL_STAGE
            return traj
        stage_amp = decision.amplitude

    def solve(y: FloatArray) -> DualSolution:
        if float(np.abs(y).max()) == 0.0:
            raise _Origin
        try:
            sol = cache.solve(y)
        except DegenerateStateError:
            raise _Origin from None
        if not sol.converged and sol.kkt_residual > failure_level:
            raise _SolverFailure(sol)
        return sol

    def rhs(t: float, y: FloatArray) -> tuple[FloatArray, StepEvaluation]:
        dy = drift(sys, y)
        if cfg.drift_only:
            return dy, StepEvaluation(None, 0.0, 0.0)
        sol = solve(y)
        sigma = float(sol.grad_rho[1::2].sum())
        u = regularized_from_sigma(sigma, law, stage_amp)
        dy[1::2] += u
        return dy, StepEvaluation(sol, sigma, u)

    watch_stall = cfg.detect_standstill and not cfg.drift_only
    monitor = StandstillMonitor(cfg.window_for(sys), cfg.stall_delta)
    accepted = 0

    def on_step(step: AcceptedStep) -> str | None:
        nonlocal stage_amp, accepted
        ev: StepEvaluation = step.aux
        sol = ev.sol if ev.sol is not None else solve(step.y)
        if step.h > 0:
            accepted += 1
            traj.steps = accepted
            traj.min_step = min(traj.min_step, step.h)
            if cfg.keep_dense and step.dense is not None:
                traj.segments.append(step.dense)

        reason: Termination | None = None
        if sol.rho < _ORIGIN_RATIO * rho0:
            reason = Termination.TERMINAL_STAGE
        elif cfg.stages is not None and not cfg.drift_only:
            decision = stage_select(cfg.stages, sol.rho)
            if decision.terminal:
                reason = Termination.TERMINAL_STAGE
            elif decision.amplitude != stage_amp:
                logger.debug(
                    "t=%.4g: stage amplitude %s -> %s", step.t, stage_amp, decision.amplitude
                )
                stage_amp = decision.amplitude

        if watch_stall and reason is None:
            if monitor.update(step.t, sol.rho):
                reason = Termination.STANDSTILL

        if reason is not None or step.h == 0 or accepted % cfg.record_stride == 0:
            traj.samples.append(_sample(sys, step.t, step.y, sol, ev.u))
        if reason is not None:
            traj.reason = reason
            return reason.value
        return None

    try:
        last = integrate_adaptive(
            rhs, x0, cfg.t_max, cfg.tolerance, on_step, None if cfg.drift_only else sigma_guard(eps)
        )
    except (_SolverFailure, DualSolverError) as exc:
        logger.warning("Dual solver failed mid-trajectory (%s); returning partial trajectory", exc)
        traj.reason = Termination.SOLVER_FAILURE
        return traj
    except _Origin:
        traj.reason = Termination.TERMINAL_STAGE
        return traj

    if traj.reason is Termination.HORIZON and traj.samples[-1].t < last.t:
        ev = last.aux
        sol = ev.sol if ev.sol is not None else solve(last.y)
        traj.samples.append(_sample(sys, last.t, last.y, sol, ev.u))
    logger.debug(
        "Run finished (%s) after %d steps; %d dual solves, %d reuses",
        traj.reason.value,
        traj.steps,
        cache.solves,
        cache.reuses,
    )
    return traj


def _sample(
    sys: OscillatorSystem,
    t: float,
    y: FloatArray,
    sol: DualSolution,
    u: float,
) -> Sample:
    return Sample(
        t=float(t),
        state=np.array(y, dtype=np.float64),
        u=float(u),
        sigma=float(sol.grad_rho[1::2].sum()),
        rho=sol.rho,
        h_res=hamiltonian_residual_of(sys, y, sol),
        energy=energy(sys, y),
    )
