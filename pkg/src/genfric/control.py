"""Generalized dry-friction feedback u = -sign <B, d rho/dx>.

The exact law is set-valued on the switching surface sigma(x) = 0. The
regularized law replaces sign by a saturating smoother of width epsilon; the
staged policy lowers the amplitude at intermediate rho and declares the run
finished below the last threshold.
"""

from __future__ import annotations

from enum import Enum
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, model_validator

from genfric.dualnorm import DualSolution, solve_dual
from genfric.model import OscillatorSystem

# Default regularization width relative to the initial rho
DEFAULT_EPSILON_SCALE = 1e-3


class Smoother(str, Enum):
    """Odd, nondecreasing approximations of sign that saturate at +/-1."""

    SATURATION = "saturation"  # clamp(v, -1, 1); exact sliding outside the ramp
    TANH = "tanh"  # smooth, for Hessian-based diagnostics

    def __call__(self, v: float) -> float:
        if self is Smoother.SATURATION:
            return float(np.clip(v, -1.0, 1.0))
        return float(np.tanh(v))


class ControlLaw(BaseModel):
    """Regularized feedback settings.

    ``epsilon`` may be left unset; it is then resolved to
    ``epsilon_scale * rho(s0)`` at the start of a run.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float | None = Field(default=None, gt=0)
    epsilon_scale: float = Field(default=DEFAULT_EPSILON_SCALE, gt=0)
    smoother: Smoother = Smoother.SATURATION
    amplitude: float = Field(default=1.0, gt=0, le=1)

    def resolve(self, rho0: float) -> ControlLaw:
        """Fix epsilon from the initial norm when it was not given."""
        if self.epsilon is not None:
            return self
        return self.model_copy(update={"epsilon": self.epsilon_scale * rho0})

    @property
    def width(self) -> float:
        """The regularization width; the law must be resolved first."""
        if self.epsilon is None:
            raise ValueError("ControlLaw.epsilon is unresolved; call resolve(rho0) first")
        return self.epsilon


class StagePolicy(BaseModel):
    """Amplitude schedule over rho: full, reduced, then terminal."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rho_hi: float = Field(default=10.0, gt=0)
    rho_lo: float = Field(default=1.0, gt=0)
    a_mid: float = Field(default=0.5, gt=0, lt=1)

    @model_validator(mode="after")
    def check_order(self) -> StagePolicy:
        """Thresholds must satisfy rho_hi > rho_lo."""
        if self.rho_hi <= self.rho_lo:
            raise ValueError(f"rho_hi ({self.rho_hi}) must exceed rho_lo ({self.rho_lo})")
        return self


class StageDecision(NamedTuple):
    """Amplitude for the current stage, or the terminal flag."""

    amplitude: float
    terminal: bool


class ControlSet(NamedTuple):
    """Closed interval of admissible control values."""

    lo: float
    hi: float

    @property
    def is_unique(self) -> bool:
        return self.lo == self.hi


def switching_value(
    sys: OscillatorSystem, s: ArrayLike, sol: DualSolution | None = None
) -> float:
    """sigma(x) = <B, d rho/dx>, the sum of velocity components of the gradient."""
    if sol is None:
        sol = solve_dual(sys, s)
    return float(sol.grad_rho[1::2].sum())


def control_exact(
    sys: OscillatorSystem,
    s: ArrayLike,
    sol: DualSolution | None = None,
    sigma_tol: float = 0.0,
) -> ControlSet:
    """Set-valued law: {-sign sigma}, or all of [-1, 1] on the surface."""
    sigma = switching_value(sys, s, sol)
    if abs(sigma) <= sigma_tol:
        return ControlSet(-1.0, 1.0)
    u = -float(np.sign(sigma))
    return ControlSet(u, u)


def regularized_from_sigma(sigma: float, law: ControlLaw, amplitude: float = 1.0) -> float:
    """u = -amplitude * law.amplitude * smoother(sigma / epsilon)."""
    return -amplitude * law.amplitude * law.smoother(sigma / law.width)


def control_regularized(
    sys: OscillatorSystem,
    s: ArrayLike,
    law: ControlLaw,
    sol: DualSolution | None = None,
) -> float:
    """Smoothed feedback, bounded by the law's amplitude."""
    return regularized_from_sigma(switching_value(sys, s, sol), law)


def stage_select(policy: StagePolicy, rho: float) -> StageDecision:
    """Pick the stage amplitude for the current rho.

    Raises:
        ValueError: If rho is negative
    """
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    if rho >= policy.rho_hi:
        return StageDecision(1.0, False)
    if rho >= policy.rho_lo:
        return StageDecision(policy.a_mid, False)
    return StageDecision(0.0, True)
