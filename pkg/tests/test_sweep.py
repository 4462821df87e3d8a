"""Tests for eps-convergence sweeps and continuity probes."""

import math

import numpy as np
import pytest

from genfric.control import ControlLaw
from genfric.errors import IntegrationError
from genfric.sim import SimConfig, Termination, epsilon_sweep, integrate, thread_limit
from genfric.sim import sweep as sweep_module
from genfric.sim.sweep import (
    THREADS_ENV,
    SweepReport,
    epsilon_sweep_async,
    resample,
    shared_grid,
    sup_distance,
    validate_ladder,
)
from tests.conftest import make_trajectory

# Step cap small enough for every rung to resolve its eps band
SWEEP_CFG = SimConfig(t_max=3.0, h_max=0.005, law=ControlLaw(epsilon=1e-3))


class TestValidateLadder:
    """Ladder shape rules."""

    def test_accepts_non_increasing(self):
        assert validate_ladder([1e-1, 1e-2, 1e-2]) == [0.1, 0.01, 0.01]

    @pytest.mark.parametrize(
        "ladder",
        [[1e-1, 1e-2], [1e-1, 1e-2, 1e-1], [1e-1, 0.0, 0.0], [1e-1, -1e-2, -1e-3], [math.inf] * 3],
    )
    def test_rejects(self, ladder):
        with pytest.raises(ValueError):
            validate_ladder(ladder)


class TestSweepReport:
    """Contraction bookkeeping."""

    def test_cauchy(self):
        report = SweepReport([1, 0.1, 0.01, 0.001], [1.0, 0.5, 0.2], 0.9, 1.0, 10)
        assert report.cauchy
        assert report.contractions == pytest.approx([0.5, 0.4])

    def test_stalled(self):
        report = SweepReport([1, 0.1, 0.01, 0.001], [1.0, 0.95, 0.2], 0.9, 1.0, 10)
        assert not report.cauchy

    def test_zero_distances(self):
        """0 <= ratio * 0 holds; growth from zero does not."""
        assert SweepReport([1, 1, 1], [0.0, 0.0], 0.9, 1.0, 10).cauchy
        report = SweepReport([1, 1, 1], [0.0, 1e-3], 0.9, 1.0, 10)
        assert not report.cauchy
        assert report.contractions == [math.inf]


class TestGrid:
    """Shared grid and resampling."""

    def test_shared_grid_cap(self):
        a = make_trajectory([3.0, 2.0, 1.0])
        a.min_step = 1e-6
        grid = shared_grid([a, a], max_points=50)
        assert grid.size == 50
        assert grid[-1] == 2.0

    def test_grid_ends_at_shortest_run(self):
        a, b = make_trajectory([3.0, 2.0, 1.0]), make_trajectory([3.0, 2.0])
        a.min_step = b.min_step = 0.5
        grid = shared_grid([a, b], max_points=100)
        assert grid[-1] == 1.0
        assert grid.size == 3

    def test_resample_uses_step_interpolant(self, one_osc):
        """Between accepted steps the rung is sampled from its dense output."""
        cfg = SimConfig(t_max=2.0, h_max=0.25, law=ControlLaw(epsilon=1e-2), keep_dense=True)
        run = integrate(one_osc, [0.0, 2.0], cfg)
        assert run.segments
        seg = run.segments[len(run.segments) // 2]
        t_mid = np.array([seg.t0 + 0.5 * seg.h])
        np.testing.assert_allclose(resample(run, t_mid), seg(t_mid))
        np.testing.assert_allclose(resample(run, run.times), run.states, atol=1e-12)

    def test_sup_distance(self):
        a, b = make_trajectory([3.0, 2.0]), make_trajectory([3.0, 2.5])
        assert sup_distance(a, b, np.linspace(0.0, 1.0, 5)) == pytest.approx(0.5)


class TestEpsilonSweep:
    """Concurrent rung integration."""

    def test_single_oscillator_converges(self, one_osc):
        """(0, 2) with ladder 1e-1..1e-4 gives contracting distances."""
        report = epsilon_sweep(
            one_osc, [0.0, 2.0], SWEEP_CFG, [1e-1, 1e-2, 1e-3, 1e-4], probe_sizes=()
        )
        assert len(report.distances) == 3
        assert all(b < a for a, b in zip(report.distances, report.distances[1:], strict=False))
        assert report.cauchy
        assert report.t_end == pytest.approx(3.0)
        assert report.reasons == ["horizon"] * 4
        assert report.probes == []
        assert report.probe_epsilon is None

    async def test_equal_ladder_is_deterministic(self, one_osc):
        """Identical rungs give identical trajectories."""
        report = await epsilon_sweep_async(
            one_osc, [0.0, 2.0], SWEEP_CFG, [1e-2, 1e-2, 1e-2], probe_sizes=(), max_workers=2
        )
        assert report.distances == [0.0, 0.0]
        assert report.cauchy

    async def test_continuity_probe(self, one_osc):
        """Deviations scale with the perturbation: gains for 1e-6 and 1e-5 agree within 10x."""
        report = await epsilon_sweep_async(
            one_osc,
            [0.0, 2.0],
            SWEEP_CFG,
            [1e-1, 1e-2, 1e-3],
            probe_sizes=(1e-6, 1e-5),
        )
        assert report.probe_epsilon == 1e-3
        assert [p.delta for p in report.probes] == [1e-6, 1e-5]
        for probe in report.probes:
            assert 0.0 < probe.deviation < 1e-2
            assert math.isfinite(probe.gain)
        small, large = (p.gain for p in report.probes)
        assert 0.1 <= small / large <= 10.0

    async def test_probe_off_ladder(self, one_osc):
        """A probe width outside the ladder gets its own base run."""
        report = await epsilon_sweep_async(
            one_osc,
            [0.0, 2.0],
            SWEEP_CFG,
            [1e-1, 1e-2, 1e-3],
            probe_sizes=(1e-6,),
            probe_epsilon=5e-2,
        )
        assert report.probe_epsilon == 5e-2
        assert len(report.reasons) == 3
        assert len(report.probes) == 1

    async def test_rejects_bad_arguments(self, one_osc):
        with pytest.raises(ValueError):
            await epsilon_sweep_async(one_osc, [0.0, 2.0], SWEEP_CFG, [1e-1, 1e-2, 1e-3], ratio=0)
        with pytest.raises(ValueError):
            await epsilon_sweep_async(
                one_osc, [0.0, 2.0], SWEEP_CFG, [1e-1, 1e-2, 1e-3], probe_sizes=(-1.0,)
            )

    async def test_solver_failure_raises(self, one_osc, monkeypatch):
        """A rung ending in solver failure aborts the sweep."""

        def failing(sys, s0, cfg):
            traj = make_trajectory([2.0, 1.0])
            traj.reason = Termination.SOLVER_FAILURE
            return traj

        monkeypatch.setattr(sweep_module, "integrate", failing)
        with pytest.raises(IntegrationError, match="solver failure"):
            await epsilon_sweep_async(
                one_osc, [0.0, 2.0], SWEEP_CFG, [1e-1, 1e-2, 1e-3], probe_sizes=()
            )

    async def test_rungs_skip_standstill(self, one_osc, monkeypatch):
        """Rungs keep dense output and run at their own eps without standstill detection."""
        seen: list[SimConfig] = []

        def record(sys, s0, cfg):
            seen.append(cfg)
            traj = make_trajectory([2.0, 1.0])
            traj.min_step = 0.5
            return traj

        monkeypatch.setattr(sweep_module, "integrate", record)
        await epsilon_sweep_async(
            one_osc, [0.0, 2.0], SWEEP_CFG, [1e-1, 1e-2, 1e-3], probe_sizes=()
        )
        assert sorted(c.law.epsilon for c in seen) == [1e-3, 1e-2, 1e-1]
        assert not any(c.detect_standstill for c in seen)
        assert all(c.keep_dense for c in seen)


class TestThreadLimit:
    """GENFRIC_THREADS handling."""

    def test_env_value(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "3")
        assert thread_limit() == 3

    @pytest.mark.parametrize("raw", ["abc", "0", "-2"])
    def test_invalid_falls_back(self, monkeypatch, raw):
        monkeypatch.setenv(THREADS_ENV, raw)
        assert thread_limit() >= 1

    def test_unset(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert thread_limit() >= 1
