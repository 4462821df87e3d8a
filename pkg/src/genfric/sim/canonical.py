"""Joint state/costate integration along the closed loop.

With p = +d rho/dx the pair evolves as

    x' = Ax + B u,        p' = -A^T p + Hess(rho) B u,

u = -amplitude * tanh(<B, d rho/dx> / eps). Hess(rho) B is a central
difference of d rho/dx along B with step 1e-5 * rho. The distance
||p(t) - d rho/dx(x(t))|| measures how well the costate tracks the gradient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from genfric.control import Smoother, regularized_from_sigma
from genfric.dualnorm import DualCache, DualSolution
from genfric.model import FloatArray, OscillatorSystem, drift
from genfric.sim.motion import SimConfig, StepEvaluation, Termination, sigma_guard
from genfric.sim.stepper import AcceptedStep, integrate_adaptive

logger = logging.getLogger(__name__)

HESSIAN_STEP = 1e-5


@dataclass
class CanonicalTrajectory:
    """Paired x(t), p(t) and the tracking gap at each accepted step.

    ``note`` explains an early stop (degenerate block or solver failure).
    """

    times: list[float] = field(default_factory=list)
    states: list[FloatArray] = field(default_factory=list)
    momenta: list[FloatArray] = field(default_factory=list)
    gaps: list[float] = field(default_factory=list)
    controls: list[float] = field(default_factory=list)
    reason: Termination = Termination.HORIZON
    note: str | None = None

    @property
    def max_gap(self) -> float:
        return max(self.gaps, default=0.0)


class _Abort(Exception):
    pass


def costate_drift(sys: OscillatorSystem, p: FloatArray) -> FloatArray:
    """-A^T p: pairs (w_i^2 eta_i, -xi_i)."""
    xe = p.reshape(-1, 2)
    out = np.empty_like(xe)
    out[:, 0] = (sys.omega**2) * xe[:, 1]
    out[:, 1] = -xe[:, 0]
    return out.reshape(-1)


def canonical_integrate(
    sys: OscillatorSystem,
    s0: ArrayLike,
    cfg: SimConfig,
    p0: ArrayLike | None = None,
) -> CanonicalTrajectory:
    """Integrate (x, p) from (s0, p0), with p0 defaulting to d rho/dx(s0).

    Unless ``cfg.drift_only`` is set the law must use the tanh smoother, since
    the costate equation differentiates the control. Degenerate blocks stop
    the run early with a note instead of raising.

    Raises:
        ValueError: If a non-smooth smoother is configured
        DegenerateStateError: If s0 = 0
    """
    if not cfg.drift_only and cfg.law.smoother is not Smoother.TANH:
        raise ValueError("canonical_integrate needs the tanh smoother (u must be differentiable)")
    x0 = sys.check(s0, "initial state")
    settings = cfg.solver
    caches = [
        DualCache(sys, spec=settings.quadrature, tol=settings.tol, max_iter=settings.max_iter)
        for _ in range(3)
    ]
    main, plus, minus = caches
    sol0 = main.solve(x0)
    law = cfg.law.resolve(sol0.rho)
    eps = law.width
    start_p = sol0.grad_rho.copy() if p0 is None else sys.check(p0, "initial momentum")
    n2 = sys.dim

    def solve(cache: DualCache, x: FloatArray) -> DualSolution:
        sol = cache.solve(x)
        if sol.degenerate:
            blocks = list(sol.degenerate)
            raise _Abort(f"degenerate blocks {blocks} at |x| = {np.linalg.norm(x):.3g}")
        if not sol.converged and sol.kkt_residual > 1e3 * settings.tol:
            raise _Abort(f"dual solver residual {sol.kkt_residual:.3e}")
        return sol

    def hessian_b(x: FloatArray, rho: float) -> FloatArray:
        h = HESSIAN_STEP * rho
        shift = h * sys.B
        return (solve(plus, x + shift).grad_rho - solve(minus, x - shift).grad_rho) / (2.0 * h)

    def rhs(t: float, y: FloatArray) -> tuple[FloatArray, StepEvaluation]:
        x, p = y[:n2], y[n2:]
        dx = drift(sys, x)
        dp = costate_drift(sys, p)
        if cfg.drift_only:
            return np.concatenate([dx, dp]), StepEvaluation(None, 0.0, 0.0)
        sol = solve(main, x)
        sigma = float(sol.grad_rho[1::2].sum())
        u = regularized_from_sigma(sigma, law)
        dx[1::2] += u
        dp += hessian_b(x, sol.rho) * u
        return np.concatenate([dx, dp]), StepEvaluation(sol, sigma, u)

    out = CanonicalTrajectory()

    def on_step(step: AcceptedStep) -> str | None:
        ev: StepEvaluation = step.aux
        x, p = step.y[:n2], step.y[n2:]
        sol = ev.sol if ev.sol is not None else solve(main, x)
        out.times.append(step.t)
        out.states.append(x.copy())
        out.momenta.append(p.copy())
        out.gaps.append(float(np.linalg.norm(p - sol.grad_rho)))
        out.controls.append(ev.u)
        return None

    guard = None if cfg.drift_only else sigma_guard(eps)
    try:
        integrate_adaptive(
            rhs, np.concatenate([x0, start_p]), cfg.t_max, cfg.tolerance, on_step, guard
        )
    except _Abort as exc:
        logger.warning("Canonical integration stopped at t=%.6g: %s", _last(out), exc)
        out.reason = Termination.SOLVER_FAILURE
        out.note = str(exc)
    return out


def _last(out: CanonicalTrajectory) -> float:
    return out.times[-1] if out.times else math.nan
