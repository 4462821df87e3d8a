"""Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4)).

The right-hand side returns the derivative together with an auxiliary record
(controls, norms) of the evaluation, so the FSAL stage at the end of an
accepted step doubles as the diagnostic sample for the new state.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field

from genfric.errors import IntegrationError
from genfric.model import FloatArray

logger = logging.getLogger(__name__)

Rhs = Callable[[float, FloatArray], tuple[FloatArray, Any]]

# Step guard: (aux at step start, aux at step end) -> shrink factor in (0, 1), or None to accept
StepGuard = Callable[[Any, Any], float | None]


class StepTolerance(BaseModel):
    """Step-size control settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    h_init: float = Field(default=1e-3, gt=0)
    h_max: float = Field(default=0.1, gt=0)
    rtol: float = Field(default=1e-9, gt=0)
    atol: float = Field(default=1e-12, gt=0)


@dataclass
class DenseSegment:
    """Quartic continuous extension over one accepted step [t0, t0 + h]."""

    t0: float
    h: float
    y0: FloatArray
    q: FloatArray

    @property
    def t1(self) -> float:
        return self.t0 + self.h

    def __call__(self, t: ArrayLike) -> FloatArray:
        """States at times inside the step, shape (len(t), dim) for array input."""
        theta = (np.asarray(t, dtype=np.float64) - self.t0) / self.h
        powers = np.cumprod(np.repeat(theta[..., None], self.q.shape[1], axis=-1), axis=-1)
        return self.y0 + powers @ self.q.T


@dataclass
class AcceptedStep:
    """State after an accepted step."""

    t: float
    y: FloatArray
    dy: FloatArray
    aux: Any
    h: float
    error: float
    dense: DenseSegment | None = None


class DormandPrince54:
    """Dormand-Prince 5(4) pair: seven stages, FSAL, 5th order propagation."""

    c = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
    a = (
        (),
        (1 / 5,),
        (3 / 40, 9 / 40),
        (44 / 45, -56 / 15, 32 / 9),
        (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
        (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
        (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
    )
    # 5th minus embedded 4th order weights
    e = (
        71 / 57600,
        0.0,
        -71 / 16695,
        71 / 1920,
        -17253 / 339200,
        22 / 525,
        -1 / 40,
    )
    # Continuous extension weights: y(t0 + th h) = y0 + h * K^T p [th, th^2, th^3, th^4]
    p = (
        (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
        (0.0, 0.0, 0.0, 0.0),
        (
            0.0,
            131558114200 / 32700410799,
            -68118460800 / 10900136933,
            87487479700 / 32700410799,
        ),
        (
            0.0,
            -1754552775 / 470086768,
            14199869525 / 1410260304,
            -10690763975 / 1880347072,
        ),
        (
            0.0,
            127303824393 / 49829197408,
            -318862633887 / 49829197408,
            701980252875 / 199316789632,
        ),
        (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
        (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
    )
    order = 5

    def attempt(
        self,
        rhs: Rhs,
        t: float,
        y: FloatArray,
        h: float,
        k1: FloatArray,
        tol: StepTolerance,
    ) -> tuple[FloatArray, FloatArray, Any, float, FloatArray]:
        """One trial step.

        Returns:
            (y_new, f(y_new), aux(y_new), error ratio, stage slopes of shape (7, dim))
        """
        ks = [k1]
        aux = None
        y_new = y
        for i in range(1, 7):
            stage = y + h * sum(coef * k for coef, k in zip(self.a[i], ks, strict=False))
            k, aux = rhs(t + self.c[i] * h, stage)
            ks.append(k)
            if i == 6:
                y_new = stage
        err = h * sum(coef * k for coef, k in zip(self.e, ks, strict=True))
        scale = tol.atol + tol.rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = float(np.sqrt(np.mean((err / scale) ** 2)))
        return y_new, ks[6], aux, ratio, np.array(ks)

    def extension(self, t: float, y: FloatArray, h: float, slopes: FloatArray) -> DenseSegment:
        """Dense output over an accepted step from its stage slopes."""
        return DenseSegment(t0=t, h=h, y0=y, q=h * (slopes.T @ np.array(self.p)))


def integrate_adaptive(
    rhs: Rhs,
    y0: FloatArray,
    t_end: float,
    tol: StepTolerance,
    on_step: Callable[[AcceptedStep], str | None],
    step_guard: StepGuard | None = None,
    t0: float = 0.0,
) -> AcceptedStep:
    """Integrate from t0 until t_end or until ``on_step`` returns a reason.

    ``on_step`` is called after every accepted step (and once for the
    initial state with h = 0). The last accepted step is returned.

    Raises:
        IntegrationError: If the step size underflows
    """
    method = DormandPrince54()
    y = np.array(y0, dtype=np.float64)
    dy, aux = rhs(t0, y)
    current = AcceptedStep(t=t0, y=y, dy=dy, aux=aux, h=0.0, error=0.0)
    if on_step(current) is not None:
        return current

    h = min(tol.h_init, tol.h_max, t_end - t0)
    t = t0
    while t < t_end:
        h = min(h, t_end - t)
        h_min = 1e-14 * max(1.0, abs(t))
        if h < h_min:
            raise IntegrationError(f"Step size underflow at t={t:.6g} (h={h:.3g})")

        y_new, dy_new, aux_new, ratio, slopes = method.attempt(
            rhs, t, current.y, h, current.dy, tol
        )
        shrink = step_guard(current.aux, aux_new) if step_guard is not None else None
        if ratio > 1.0 or not np.isfinite(ratio) or shrink is not None:
            if not np.isfinite(ratio):
                factor = 0.2
            elif ratio == 0:
                factor = 1.0
            else:
                factor = max(0.1, 0.9 * ratio ** (-0.2))
            if shrink is not None:
                factor = min(factor, shrink)
            h *= min(factor, 0.9)
            continue

        dense = method.extension(t, current.y, h, slopes)
        t = t + h if t_end - (t + h) > h_min else t_end
        current = AcceptedStep(t=t, y=y_new, dy=dy_new, aux=aux_new, h=h, error=ratio, dense=dense)
        if on_step(current) is not None:
            return current
        growth = 5.0 if ratio == 0 else min(5.0, max(0.2, 0.9 * ratio ** (-0.2)))
        h = min(h * growth, tol.h_max)
    return current
