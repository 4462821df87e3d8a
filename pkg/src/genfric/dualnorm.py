"""The norm rho whose unit ball is the limit body, and its gradient.

rho(x) = max {<x, p> : H(p) <= 1}. For fixed reduced momentum z the inner
maximum over p is sum z_i r_i with r_i = sqrt(w_i^2 x_i^2 + y_i^2) (per-block
alignment), so

    rho(x) = max {<r, z> : Hs(z) <= 1, z >= 0},

an N-dimensional problem. It is solved as an unconstrained maximization of
F(u) = log <r, e^u> - log Hs(e^u) with damped Newton steps; F is invariant
along u + c, so Newton systems are solved in the least-squares sense.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from genfric.errors import DegenerateStateError, DualSolverError
from genfric.model import FloatArray, OscillatorSystem, pairs
from genfric.support import (
    DEFAULT_QUADRATURE,
    TWO_OVER_PI,
    H_of_p,
    QuadratureSpec,
    h_value_and_grad,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200

# Blocks below this fraction of max r are frozen at z_i = 0
FREEZE_RATIO = 1e-12

_FD_STEP = 1e-5
_ARMIJO = 1e-4
_MAX_HALVINGS = 30


@dataclass
class DualSolution:
    """Solution of the dual-norm problem at one state.

    Attributes:
        rho: Norm value, nonnegative
        z_opt: Maximizer with Hs(z_opt) = 1, zero on frozen blocks
        grad_rho: d rho / dx by the envelope theorem (length 2N)
        kkt_residual: ||r/rho - grad Hs(z_opt)|| over active blocks
        iterations: Newton iterations spent
        converged: Whether kkt_residual reached the tolerance
        degenerate: Frozen blocks (r_i ~ 0) with zero gradient entries
    """

    rho: float
    z_opt: FloatArray
    grad_rho: FloatArray
    kkt_residual: float
    iterations: int
    converged: bool = True
    degenerate: tuple[int, ...] = ()


class DualityResiduals(NamedTuple):
    """Consistency gaps of a dual solution."""

    pairing_gap: float
    fixedpoint_gap: float
    euler_gap: float


@dataclass
class _Iterate:
    u: FloatArray
    value: float
    grad_h: FloatArray
    objective: float
    rho: float
    gap: float
    ascent: FloatArray = field(repr=False)


def block_amplitudes(sys: OscillatorSystem, s: ArrayLike) -> FloatArray:
    """Per-oscillator amplitudes r_i = sqrt(w_i^2 x_i^2 + y_i^2)."""
    xy = pairs(sys.check(s))
    return np.hypot(sys.omega * xy[:, 0], xy[:, 1])


def _evaluate(u: FloatArray, r: FloatArray, spec: QuadratureSpec, inner: int) -> _Iterate:
    z = np.exp(u)
    value, grad_h = h_value_and_grad(z, spec, inner=inner)
    pairing = float(r @ z)
    rho = pairing / value
    gap = float(np.linalg.norm(r / rho - grad_h))
    ascent = z * (r / pairing - grad_h / value)
    return _Iterate(
        u=u,
        value=value,
        grad_h=grad_h,
        objective=math.log(pairing) - math.log(value),
        rho=rho,
        gap=gap,
        ascent=ascent,
    )


def _newton_matrix(it: _Iterate, r: FloatArray, spec: QuadratureSpec, inner: int) -> FloatArray:
    """Central-difference Hessian of F in u, symmetrized."""
    n = it.u.shape[0]
    hess = np.empty((n, n))
    for j in range(n):
        step = np.zeros(n)
        step[j] = _FD_STEP
        plus = _evaluate(it.u + step, r, spec, inner).ascent
        minus = _evaluate(it.u - step, r, spec, inner).ascent
        hess[:, j] = (plus - minus) / (2 * _FD_STEP)
    return 0.5 * (hess + hess.T)


def _direction(it: _Iterate, hess: FloatArray) -> FloatArray | None:
    step, *_ = np.linalg.lstsq(hess, -it.ascent, rcond=1e-10)
    step -= step.mean()
    if not np.all(np.isfinite(step)) or float(it.ascent @ step) <= 0:
        return None
    return step


def _line_search(
    it: _Iterate, step: FloatArray, r: FloatArray, spec: QuadratureSpec, inner: int
) -> _Iterate | None:
    slope = float(it.ascent @ step)
    alpha = 1.0
    for _ in range(_MAX_HALVINGS):
        trial = _evaluate(it.u + alpha * step, r, spec, inner)
        if trial.gap < it.gap or trial.objective >= it.objective + _ARMIJO * alpha * slope:
            return trial
        alpha *= 0.5
    return None


def _maximize(
    r: FloatArray,
    spec: QuadratureSpec,
    tol: float,
    max_iter: int,
    z_start: FloatArray,
    hess: FloatArray | None,
) -> tuple[_Iterate, int, FloatArray | None]:
    # Closed coordinate fixed per solve so F stays smooth across z_i = z_j
    inner = int(np.argmax(r))
    it = _evaluate(np.log(z_start), r, spec, inner)
    iterations = 0
    while it.gap > tol and iterations < max_iter:
        iterations += 1
        fresh = hess is None
        if fresh:
            hess = _newton_matrix(it, r, spec, inner)
        step = _direction(it, hess)
        trial = _line_search(it, step, r, spec, inner) if step is not None else None
        if trial is None and not fresh:
            hess = _newton_matrix(it, r, spec, inner)
            step = _direction(it, hess)
            trial = _line_search(it, step, r, spec, inner) if step is not None else None
        if trial is None:
            # gradient ascent in log coordinates as a last resort
            norm = float(np.linalg.norm(it.ascent))
            if norm > 0:
                trial = _line_search(it, 0.1 * it.ascent / norm, r, spec, inner)
        if trial is None:
            logger.warning(
                "Dual solver stalled at residual %.3e after %d steps", it.gap, iterations
            )
            break
        if not fresh and trial.gap > 0.5 * it.gap:
            hess = None
        it = trial
    return it, iterations, hess


def _assemble(
    sys: OscillatorSystem,
    x: FloatArray,
    r: FloatArray,
    z: FloatArray,
) -> FloatArray:
    """Envelope gradient: d rho/dx_i = z_i w_i^2 x_i / r_i, d rho/dy_i = z_i y_i / r_i."""
    xy = pairs(x)
    scale = np.zeros_like(r)
    live = z > 0
    scale[live] = z[live] / r[live]
    grad = np.empty_like(xy)
    grad[:, 0] = scale * sys.omega**2 * xy[:, 0]
    grad[:, 1] = scale * xy[:, 1]
    return grad.reshape(-1)


def _solve(
    sys: OscillatorSystem,
    s: ArrayLike,
    spec: QuadratureSpec,
    tol: float,
    max_iter: int,
    z_start: ArrayLike | None = None,
    hess: FloatArray | None = None,
) -> tuple[DualSolution, FloatArray | None]:
    x = sys.check(s)
    r = block_amplitudes(sys, x)
    r_max = float(r.max())
    if r_max == 0:
        raise DegenerateStateError("rho has no gradient at x = 0")

    active = r > FREEZE_RATIO * r_max
    degenerate = tuple(int(i) for i in np.flatnonzero(~active))
    r_act = r[active]
    z = np.zeros(sys.n)

    if r_act.size == 1:
        z[active] = 1.0 / TWO_OVER_PI
        sol = DualSolution(
            rho=float(r_act[0]) / TWO_OVER_PI,
            z_opt=z,
            grad_rho=_assemble(sys, x, r, z),
            kkt_residual=0.0,
            iterations=0,
            degenerate=degenerate,
        )
        return sol, None

    start = r_act.copy()
    if z_start is not None:
        guess = np.asarray(z_start, dtype=np.float64).reshape(-1)[active]
        if np.all(guess > 0) and np.all(np.isfinite(guess)):
            start = guess
        else:
            hess = None
    if hess is not None and hess.shape != (r_act.size, r_act.size):
        hess = None

    it, iterations, hess = _maximize(r_act, spec, tol, max_iter, start, hess)
    if not math.isfinite(it.rho):
        raise DualSolverError(
            f"Dual solver produced a non-finite rho after {iterations} iterations",
            residual=it.gap,
            iterations=iterations,
        )
    z[active] = np.exp(it.u) / it.value
    converged = it.gap <= tol
    if not converged:
        logger.warning(
            "Dual solver did not converge: residual %.3e > %.1e after %d iterations",
            it.gap,
            tol,
            iterations,
        )
    sol = DualSolution(
        rho=it.rho,
        z_opt=z,
        grad_rho=_assemble(sys, x, r, z),
        kkt_residual=it.gap,
        iterations=iterations,
        converged=converged,
        degenerate=degenerate,
    )
    return sol, hess


def solve_dual(
    sys: OscillatorSystem,
    s: ArrayLike,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    initial: ArrayLike | None = None,
) -> DualSolution:
    """Compute rho(x), the maximizer z_opt and d rho/dx.

    Args:
        sys: The oscillator system
        s: State, not zero
        tol: Target fixed-point residual ||r/rho - grad Hs(z)||
        max_iter: Newton iteration budget
        spec: Quadrature used for Hs
        initial: Starting z (defaults to z proportional to r)

    Returns:
        DualSolution; ``converged`` is False when the budget ran out or the
        iteration stalled, in which case the best iterate is returned.

    Raises:
        DegenerateStateError: If s = 0
        DualSolverError: If the iteration ends on a non-finite rho
    """
    sol, _ = _solve(sys, s, spec, tol, max_iter, z_start=initial)
    return sol


def grad_rho(
    sys: OscillatorSystem,
    s: ArrayLike,
    tol: float = DEFAULT_TOL,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> FloatArray:
    """Gradient d rho/dx; zero-homogeneous, with <x, grad> = rho(x)."""
    return solve_dual(sys, s, tol=tol, spec=spec).grad_rho


def momentum_from_solution(
    sys: OscillatorSystem, s: ArrayLike, z: ArrayLike
) -> FloatArray:
    """Align each momentum block with its state block at reduced length z_i."""
    x = sys.check(s)
    r = block_amplitudes(sys, x)
    return _assemble(sys, x, r, np.asarray(z, dtype=np.float64))


def duality_residuals(
    sys: OscillatorSystem,
    s: ArrayLike,
    sol: DualSolution,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> DualityResiduals:
    """Gaps of the Legendre-type relations at a returned solution.

    p_opt is rebuilt from z_opt by per-block alignment and scaled so that
    H(p_opt) = 1.
    """
    x = sys.check(s)
    p = momentum_from_solution(sys, x, sol.z_opt)
    h_p = H_of_p(sys, p, spec)
    if h_p.value > 0:
        p = p / h_p.value
        h_p = H_of_p(sys, p, spec)

    pairing = abs(float(x @ p) - sol.rho * h_p.value)
    fixedpoint = float(np.linalg.norm(x / sol.rho - h_p.gradient))
    euler = abs(float(x @ sol.grad_rho) - sol.rho)
    return DualityResiduals(pairing_gap=pairing, fixedpoint_gap=fixedpoint, euler_gap=euler)


class DualCache:
    """Per-trajectory warm starts for the dual solver.

    Keeps the last maximizer and Newton matrix. With ``reuse_delta`` > 0 a
    state within that relative distance of the previous one reuses z_opt
    unchanged (rho and its gradient are re-assembled at the new state).
    Not safe to share between concurrently integrated trajectories.
    """

    def __init__(
        self,
        sys: OscillatorSystem,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
        tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER,
        reuse_delta: float = 0.0,
    ) -> None:
        self._sys = sys
        self._spec = spec
        self._tol = tol
        self._max_iter = max_iter
        self._reuse_delta = reuse_delta
        self._state: FloatArray | None = None
        self._solution: DualSolution | None = None
        self._hess: FloatArray | None = None
        self.solves = 0
        self.reuses = 0

    def reset(self) -> None:
        """Drop the warm-start state (cold restart)."""
        self._state = None
        self._solution = None
        self._hess = None

    def solve(self, s: ArrayLike) -> DualSolution:
        """Solve at ``s``, warm-started from the previous call."""
        x = self._sys.check(s)
        prev, prev_x = self._solution, self._state
        if prev is not None and prev_x is not None and self._reuse_delta > 0:
            moved = float(np.linalg.norm(x - prev_x))
            if moved <= self._reuse_delta * float(np.linalg.norm(prev_x)):
                r = block_amplitudes(self._sys, x)
                self.reuses += 1
                return DualSolution(
                    rho=float(r @ prev.z_opt),
                    z_opt=prev.z_opt,
                    grad_rho=_assemble(self._sys, x, r, prev.z_opt),
                    kkt_residual=prev.kkt_residual,
                    iterations=0,
                    converged=prev.converged,
                    degenerate=prev.degenerate,
                )

        warm = prev.z_opt if prev is not None and not prev.degenerate else None
        sol, hess = _solve(
            self._sys,
            x,
            self._spec,
            self._tol,
            self._max_iter,
            z_start=warm,
            hess=self._hess if warm is not None else None,
        )
        self.solves += 1
        if sol.degenerate:
            self.reset()
        else:
            self._state, self._solution, self._hess = x, sol, hess
        return sol
