"""Tests for the invariant battery."""

import numpy as np
import pytest

from genfric.battery import check_duality, run_battery, sample_states
from genfric.config import list_presets, load_preset, parse_config
from genfric.dualnorm import block_amplitudes
from genfric.support import QuadratureSpec
from tests.conftest import ONE_OSCILLATOR_CONFIG

EXPECTED_CHECKS = [
    "duality",
    "solver",
    "hamiltonian",
    "rho_decay",
    "linear_growth",
    "epsilon_cauchy",
]


class TestSampleStates:
    """Random test states."""

    def test_amplitudes_in_range(self, two_osc):
        for s in sample_states(two_osc, 20, seed=3):
            r = block_amplitudes(two_osc, s)
            assert np.all((r >= 0.5 - 1e-12) & (r <= 2.0 + 1e-12))

    def test_seeded(self, two_osc):
        a = sample_states(two_osc, 3, seed=7)
        b = sample_states(two_osc, 3, seed=7)
        for x, y in zip(a, b, strict=True):
            np.testing.assert_array_equal(x, y)


class TestCheckDuality:
    """Gaps relative to rho."""

    def test_two_oscillators_pass(self, two_osc):
        states = sample_states(two_osc, 4, seed=0)
        result = check_duality(two_osc, states, QuadratureSpec(), tol=1e-8, rel_tol=1e-6)
        assert result.passed
        assert result.detail["unconverged"] == 0
        assert result.detail["states"] == 4

    def test_impossible_tolerance_fails(self, three_osc):
        states = sample_states(three_osc, 2, seed=0)
        spec = QuadratureSpec(nodes_per_axis=16)
        result = check_duality(three_osc, states, spec, tol=1e-8, rel_tol=1e-30)
        assert not result.passed


class TestRunBattery:
    """The full battery on a short N=1 run."""

    def test_all_pass(self):
        report = run_battery(parse_config(ONE_OSCILLATOR_CONFIG))
        assert [c.name for c in report.checks] == EXPECTED_CHECKS
        assert report.passed, report.failures
        assert report.resonance["resonant"] is False
        assert report.trajectory is not None

    def test_strict_ratio_fails_sweep(self):
        text = ONE_OSCILLATOR_CONFIG.replace("t_max = 2.0", "t_max = 2.0\nratio = 1e-6")
        report = run_battery(parse_config(text))
        assert not report.passed
        assert report.failures == ["epsilon_cauchy"]

    def test_sweep_optional(self):
        text = ONE_OSCILLATOR_CONFIG.replace("samples = 5", "samples = 5\nsweep = false")
        report = run_battery(parse_config(text))
        assert "epsilon_cauchy" not in [c.name for c in report.checks]

    @pytest.mark.parametrize("name", ["duality", "hamiltonian"])
    def test_detail_recorded(self, name):
        text = ONE_OSCILLATOR_CONFIG.replace("samples = 5", "samples = 2\nsweep = false")
        report = run_battery(parse_config(text))
        check = next(c for c in report.checks if c.name == name)
        assert "tolerance" in check.detail


@pytest.mark.slow
class TestBundledPresets:
    """Every bundled preset passes its own battery."""

    @pytest.mark.parametrize("name", [name for name, _ in list_presets()])
    def test_preset_passes(self, name):
        report = run_battery(load_preset(name))
        assert [c.name for c in report.checks] == EXPECTED_CHECKS
        assert report.passed, report.failures
