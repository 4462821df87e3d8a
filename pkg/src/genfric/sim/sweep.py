"""Convergence of regularized trajectories as eps -> 0, and continuity in initial data.

Rungs of the eps ladder and the perturbed probe runs are independent, so they
are integrated concurrently in worker threads; results are merged by index.
"""

from __future__ import annotations

import asyncio
import logging
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from genfric.errors import IntegrationError
from genfric.model import FloatArray, OscillatorSystem
from genfric.sim.motion import SimConfig, Termination, Trajectory, integrate

logger = logging.getLogger(__name__)

DEFAULT_RATIO = 0.9
DEFAULT_GRID_MAX_POINTS = 20_000
DEFAULT_PROBE_SIZES = (1e-6,)

THREADS_ENV = "GENFRIC_THREADS"


def thread_limit() -> int:
    """Worker cap from GENFRIC_THREADS, defaulting to the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            logger.warning("Ignoring %s=%r (not an integer)", THREADS_ENV, raw)
        else:
            if value >= 1:
                return value
            logger.warning("Ignoring %s=%r (must be >= 1)", THREADS_ENV, raw)
    return os.cpu_count() or 1


@dataclass
class ContinuityProbe:
    """Sup deviation caused by a perturbation of size ``delta`` in s0."""

    delta: float
    deviation: float

    @property
    def gain(self) -> float:
        return self.deviation / self.delta


@dataclass
class SweepReport:
    """Pairwise distances between successive rungs of the eps ladder.

    Attributes:
        ladder: Regularization widths, non-increasing
        distances: d_k = max_t ||x_k(t) - x_{k+1}(t)|| on the shared grid
        ratio: Required contraction d_{k+1} <= ratio * d_k
        t_end: End of the shared grid
        grid_points: Number of shared grid points
        reasons: Termination tag of each rung
        probe_epsilon: Width used by the continuity probes
        probes: One entry per perturbation size
    """

    ladder: list[float]
    distances: list[float]
    ratio: float
    t_end: float
    grid_points: int
    reasons: list[str] = field(default_factory=list)
    probe_epsilon: float | None = None
    probes: list[ContinuityProbe] = field(default_factory=list)

    @property
    def contractions(self) -> list[float]:
        """d_{k+1} / d_k (inf where d_k = 0 < d_{k+1}, 0 where both vanish)."""
        out = []
        for a, b in zip(self.distances, self.distances[1:], strict=False):
            if a > 0:
                out.append(b / a)
            else:
                out.append(0.0 if b == 0 else math.inf)
        return out

    @property
    def cauchy(self) -> bool:
        """Whether every successive distance contracts by at least ``ratio``."""
        return all(
            b <= self.ratio * a for a, b in zip(self.distances, self.distances[1:], strict=False)
        )


def validate_ladder(ladder: Sequence[float]) -> list[float]:
    """Check an eps ladder: at least three positive, non-increasing widths.

    Raises:
        ValueError: If the ladder is too short, unordered or not positive
    """
    values = [float(e) for e in ladder]
    if len(values) < 3:
        raise ValueError(f"An eps ladder needs at least 3 rungs, got {len(values)}")
    if any(not math.isfinite(e) or e <= 0 for e in values):
        raise ValueError("Every eps in the ladder must be positive and finite")
    if any(b > a for a, b in zip(values, values[1:], strict=False)):
        raise ValueError(f"The eps ladder must be non-increasing, got {values}")
    return values


def shared_grid(runs: Sequence[Trajectory], max_points: int) -> FloatArray:
    """Common time grid: spacing of the smallest accepted step, capped in size."""
    t_end = min(run.samples[-1].t for run in runs)
    h = min(run.min_step for run in runs)
    if t_end <= 0 or not math.isfinite(h):
        return np.zeros(1)
    points = min(max_points, math.ceil(t_end / h) + 1)
    return np.linspace(0.0, t_end, max(points, 2))


def resample(run: Trajectory, grid: FloatArray) -> FloatArray:
    """States on ``grid`` from the continuous extension of the run, shape (len(grid), 2N)."""
    return run.state_at(grid)


def sup_distance(a: Trajectory, b: Trajectory, grid: FloatArray) -> float:
    """max over the grid of ||x_a(t) - x_b(t)||."""
    diff = resample(a, grid) - resample(b, grid)
    return float(np.linalg.norm(diff, axis=1).max())


def _rung_config(cfg: SimConfig, eps: float) -> SimConfig:
    return cfg.model_copy(
        update={
            "law": cfg.law.model_copy(update={"epsilon": eps}),
            "detect_standstill": False,
            "record_stride": 1,
            "keep_dense": True,
        }
    )


def _probe_direction(dim: int) -> FloatArray:
    return np.ones(dim) / math.sqrt(dim)


async def epsilon_sweep_async(
    sys: OscillatorSystem,
    s0: ArrayLike,
    cfg: SimConfig,
    ladder: Sequence[float],
    *,
    ratio: float = DEFAULT_RATIO,
    probe_sizes: Sequence[float] = DEFAULT_PROBE_SIZES,
    probe_epsilon: float | None = None,
    grid_max_points: int = DEFAULT_GRID_MAX_POINTS,
    max_workers: int | None = None,
) -> SweepReport:
    """Integrate every rung (and the continuity probes) concurrently.

    Standstill detection is switched off for every run so that all rungs
    cover the same horizon. Probes run at ``probe_epsilon`` (default: the
    last rung) from s0 + delta * e, e the normalized all-ones direction.

    Raises:
        ValueError: On an invalid ladder, ratio or probe size
        IntegrationError: If any run ends in solver failure or step underflow
    """
    rungs = validate_ladder(ladder)
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    if any(d <= 0 for d in probe_sizes):
        raise ValueError("Probe perturbation sizes must be positive")
    x0 = sys.check(s0, "initial state")
    probe_eps = rungs[-1] if probe_epsilon is None else float(probe_epsilon)
    semaphore = asyncio.Semaphore(max_workers or thread_limit())

    async def run(eps: float, start: FloatArray) -> Trajectory:
        async with semaphore:
            return await asyncio.to_thread(integrate, sys, start, _rung_config(cfg, eps))

    direction = _probe_direction(sys.dim)
    base_index = rungs.index(probe_eps) if probe_eps in rungs else None
    jobs = [run(eps, x0) for eps in rungs]
    if probe_sizes and base_index is None:
        jobs.append(run(probe_eps, x0))
    jobs.extend(run(probe_eps, x0 + d * direction) for d in probe_sizes)
    results = await asyncio.gather(*jobs)

    for k, traj in enumerate(results):
        if traj.reason is Termination.SOLVER_FAILURE or not traj.samples:
            raise IntegrationError(f"Sweep run {k} ended with solver failure at t={_end(traj)}")

    runs = list(results[: len(rungs)])
    extra = list(results[len(rungs) :])
    grid = shared_grid(runs, grid_max_points)
    distances = [sup_distance(a, b, grid) for a, b in zip(runs, runs[1:], strict=False)]
    logger.debug("Sweep distances on %d grid points: %s", grid.size, distances)

    probes = []
    if probe_sizes:
        base = runs[base_index] if base_index is not None else extra.pop(0)
        for delta, perturbed in zip(probe_sizes, extra, strict=True):
            probe_grid = shared_grid([base, perturbed], grid_max_points)
            probes.append(
                ContinuityProbe(
                    delta=float(delta), deviation=sup_distance(base, perturbed, probe_grid)
                )
            )

    return SweepReport(
        ladder=rungs,
        distances=distances,
        ratio=ratio,
        t_end=float(grid[-1]),
        grid_points=int(grid.size),
        reasons=[r.reason.value for r in runs],
        probe_epsilon=probe_eps if probe_sizes else None,
        probes=probes,
    )


def _end(traj: Trajectory) -> str:
    return f"{traj.samples[-1].t:.6g}" if traj.samples else "0"


def epsilon_sweep(
    sys: OscillatorSystem,
    s0: ArrayLike,
    cfg: SimConfig,
    ladder: Sequence[float],
    **kwargs,
) -> SweepReport:
    """Blocking wrapper around :func:`epsilon_sweep_async`."""
    return asyncio.run(epsilon_sweep_async(sys, s0, cfg, ladder, **kwargs))
