"""Shared pytest fixtures: oscillator systems, sample states and config files."""

import math
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from genfric.model import OscillatorSystem
from genfric.sim.motion import Sample, Trajectory

SQRT2 = math.sqrt(2.0)

# Minimal N=1 run config; short horizons keep the CLI tests fast
ONE_OSCILLATOR_CONFIG = """
[system]
omegas = [1.0]

[state]
initial = [0.0, 2.0]

[control]
epsilon = 1e-3

[sim]
t_max = 3.0
h_max = 0.05

[sweep]
ladder = [1e-1, 1e-2, 1e-3]
t_max = 2.0

[support]
z = [1.0]

[check]
samples = 5

[output]
stem = "unit"
"""


@pytest.fixture
def one_osc() -> OscillatorSystem:
    """Single unit-frequency oscillator."""
    return OscillatorSystem((1.0,))


@pytest.fixture
def two_osc() -> OscillatorSystem:
    """Incommensurate pair (1, sqrt 2)."""
    return OscillatorSystem((1.0, SQRT2))


@pytest.fixture
def three_osc() -> OscillatorSystem:
    """Resonant triple (1, 2, 3)."""
    return OscillatorSystem((1.0, 2.0, 3.0))


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so sampled properties are reproducible."""
    return np.random.default_rng(20240611)


def random_state(
    sys: OscillatorSystem, rng: np.random.Generator, lo: float = 0.5, hi: float = 2.0
) -> np.ndarray:
    """State whose block amplitudes r_i lie in [lo, hi] (no degenerate blocks)."""
    amp = rng.uniform(lo, hi, size=sys.n)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=sys.n)
    s = np.empty(sys.dim)
    s[0::2] = amp * np.cos(phase) / sys.omega
    s[1::2] = amp * np.sin(phase)
    return s


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[..., Path]:
    """Write config text into tmp_path and return its path."""

    def _write(text: str = ONE_OSCILLATOR_CONFIG, name: str = "run.toml") -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write


def make_trajectory(
    rhos: list[float], omegas: tuple[float, ...] = (1.0,), epsilon: float = 1e-3
) -> Trajectory:
    """Hand-built N=1 trajectory with samples (t=k, x=rho_k) for checker tests."""
    samples = [
        Sample(
            t=float(k),
            state=np.array([r, 0.0]),
            u=0.0,
            sigma=0.0,
            rho=float(r),
            h_res=0.0,
            energy=0.5 * r * r,
        )
        for k, r in enumerate(rhos)
    ]
    return Trajectory(omegas=omegas, samples=samples, epsilon=epsilon, rtol=1e-9, atol=1e-12)
