"""Tests for the dual-norm solver, its gradient and the warm-start cache."""

import math

import numpy as np
import pytest

from genfric.dualnorm import (
    DualCache,
    DualSolution,
    block_amplitudes,
    duality_residuals,
    grad_rho,
    momentum_from_solution,
    solve_dual,
)
from genfric.errors import DegenerateStateError
from genfric.model import OscillatorSystem, costate_flow, flow
from genfric.support import QuadratureSpec, h_value_and_grad
from tests.conftest import random_state

HALF_PI = math.pi / 2.0


class TestBlockAmplitudes:
    """Test per-oscillator amplitudes."""

    def test_examples(self):
        """(1,0) -> 1 at w=1; (1,0) -> 2 at w=2; (0,3,0,4) -> (3,4)."""
        np.testing.assert_allclose(block_amplitudes(OscillatorSystem((1.0,)), [1, 0]), [1.0])
        np.testing.assert_allclose(block_amplitudes(OscillatorSystem((2.0,)), [1, 0]), [2.0])
        np.testing.assert_allclose(
            block_amplitudes(OscillatorSystem((1.0, 1.0)), [0, 3, 0, 4]), [3.0, 4.0]
        )


class TestSingleOscillator:
    """rho = (pi/2) r in closed form for N=1."""

    def test_position_state(self, one_osc):
        """s=(1,0) -> rho = pi/2, grad = (pi/2, 0)."""
        sol = solve_dual(one_osc, [1.0, 0.0])
        assert sol.rho == pytest.approx(HALF_PI)
        np.testing.assert_allclose(sol.grad_rho, [HALF_PI, 0.0], atol=1e-15)
        assert sol.converged
        assert sol.iterations == 0

    def test_negative_velocity(self, one_osc):
        """s=(0,-2) -> rho = pi, grad = (0, -pi/2)."""
        sol = solve_dual(one_osc, [0.0, -2.0])
        assert sol.rho == pytest.approx(math.pi)
        np.testing.assert_allclose(sol.grad_rho, [0.0, -HALF_PI], atol=1e-15)

    def test_grad_rho(self, one_osc):
        """s=(0,1) -> (0, pi/2)."""
        np.testing.assert_allclose(grad_rho(one_osc, [0.0, 1.0]), [0.0, HALF_PI], atol=1e-15)

    def test_residuals_vanish(self, one_osc):
        """The exact solution has all gaps below 1e-12."""
        s = np.array([0.3, -1.7])
        res = duality_residuals(one_osc, s, solve_dual(one_osc, s))
        assert max(res) <= 1e-12

    def test_zero_state_degenerate(self, one_osc):
        """rho has no gradient at the origin."""
        with pytest.raises(DegenerateStateError):
            solve_dual(one_osc, [0.0, 0.0])


class TestTwoOscillators:
    """Newton solve on the reduced problem for N >= 2."""

    def test_against_brute_force(self):
        """w=(1,2), s=(1,0,0,1) agrees with a dense search over directions."""
        sys = OscillatorSystem((1.0, 2.0))
        s = np.array([1.0, 0.0, 0.0, 1.0])
        r = block_amplitudes(sys, s)
        spec = QuadratureSpec()
        best = 0.0
        for theta in np.linspace(0.0, HALF_PI, 2001):
            z = np.array([math.cos(theta), math.sin(theta)])
            value, _ = h_value_and_grad(z, spec)
            best = max(best, float(r @ z) / value)
        sol = solve_dual(sys, s)
        assert sol.converged
        assert sol.rho == pytest.approx(best, rel=1e-6)
        assert sol.rho >= best - 1e-12

    @pytest.mark.parametrize("offset", [0.0, 1e-8, 1e-6, 1e-4])
    def test_equal_amplitudes_converge(self, offset):
        """w=(1,2), s=(1,0,0,1+d): r_1 ~ r_2 still reaches the tolerance."""
        sys = OscillatorSystem((1.0, 2.0))
        s = np.array([1.0, 0.0, 0.0, 1.0 + offset])
        sol = solve_dual(sys, s)
        assert sol.converged
        assert sol.kkt_residual <= 1e-8
        assert sol.z_opt[1] >= sol.z_opt[0] - 1e-6

    def test_amplitude_ordering_swaps_continuously(self):
        """rho is continuous as r_1 - r_2 changes sign."""
        sys = OscillatorSystem((1.0, 2.0))
        below = solve_dual(sys, [1.0, 0.0, 0.0, 1.0 - 1e-7])
        above = solve_dual(sys, [1.0, 0.0, 0.0, 1.0 + 1e-7])
        assert below.converged and above.converged
        assert above.rho - below.rho == pytest.approx(0.0, abs=1e-6)

    def test_constraint_active(self, two_osc, rng):
        """z_opt lies on the unit sphere of Hs."""
        sol = solve_dual(two_osc, random_state(two_osc, rng))
        value, _ = h_value_and_grad(sol.z_opt, QuadratureSpec())
        assert value == pytest.approx(1.0, abs=1e-10)

    def test_residuals_within_tolerance(self, two_osc, rng):
        """Converged solutions satisfy every relation to 1e-6 rho."""
        for _ in range(5):
            s = random_state(two_osc, rng)
            sol = solve_dual(two_osc, s)
            res = duality_residuals(two_osc, s, sol)
            assert sol.converged
            assert max(res) <= 1e-6 * sol.rho

    def test_perturbed_solution_detected(self, two_osc, rng):
        """Shifting z_opt by 0.1 opens the fixed-point gap."""
        s = random_state(two_osc, rng)
        sol = solve_dual(two_osc, s)
        bad = DualSolution(
            rho=sol.rho,
            z_opt=sol.z_opt + 0.1,
            grad_rho=sol.grad_rho,
            kkt_residual=sol.kkt_residual,
            iterations=sol.iterations,
        )
        assert duality_residuals(two_osc, s, bad).fixedpoint_gap > 1e-8

    def test_restart_agreement(self, three_osc, rng):
        """Cold starts from different guesses reach the same maximizer."""
        spec = QuadratureSpec(nodes_per_axis=24)
        s = random_state(three_osc, rng)
        a = solve_dual(three_osc, s, spec=spec)
        b = solve_dual(three_osc, s, spec=spec, initial=[1.0, 5.0, 0.2])
        np.testing.assert_allclose(b.z_opt, a.z_opt, rtol=1e-6)
        assert b.rho == pytest.approx(a.rho, rel=1e-10)

    def test_gradient_matches_finite_differences(self, two_osc, rng):
        """d rho/dx agrees with central differences of rho to 1e-5 relative."""
        s = random_state(two_osc, rng)
        step = 1e-6
        fd = np.array(
            [
                (solve_dual(two_osc, s + step * e).rho - solve_dual(two_osc, s - step * e).rho)
                / (2 * step)
                for e in np.eye(4)
            ]
        )
        scale = np.linalg.norm(fd)
        np.testing.assert_allclose(grad_rho(two_osc, s), fd, atol=1e-5 * scale)

    def test_zero_homogeneous_gradient(self, two_osc, rng):
        """grad rho(lambda s) = grad rho(s)."""
        s = random_state(two_osc, rng)
        np.testing.assert_allclose(grad_rho(two_osc, 4.0 * s), grad_rho(two_osc, s), rtol=1e-7)

    def test_euler_identity(self, two_osc, rng):
        """<x, grad rho> = rho."""
        s = random_state(two_osc, rng)
        sol = solve_dual(two_osc, s)
        assert s @ sol.grad_rho == pytest.approx(sol.rho, rel=1e-12)

    def test_invariant_under_free_motion(self, two_osc, rng):
        """rho(e^{At} x) = rho(x)."""
        s = random_state(two_osc, rng)
        rho = solve_dual(two_osc, s).rho
        for t in (0.7, 3.1, 12.0):
            assert solve_dual(two_osc, flow(two_osc, s, t)).rho == pytest.approx(rho, rel=1e-9)

    def test_hamiltonian_vanishes(self, two_osc, rng):
        """<A x, grad rho(x)> = 0 to solver tolerance."""
        s = random_state(two_osc, rng)
        sol = solve_dual(two_osc, s)
        assert abs(float((two_osc.A @ s) @ sol.grad_rho)) <= 1e-6 * sol.rho * max(
            two_osc.omegas
        )

    def test_frozen_block(self, two_osc):
        """A block at rest is frozen and reported degenerate."""
        sol = solve_dual(two_osc, [0.0, 1.0, 0.0, 0.0])
        assert sol.degenerate == (1,)
        assert sol.z_opt[1] == 0.0
        assert sol.rho == pytest.approx(HALF_PI)

    def test_momentum_alignment(self, two_osc, rng):
        """The rebuilt momentum pairs with x to rho H(p) per block."""
        s = random_state(two_osc, rng)
        sol = solve_dual(two_osc, s)
        p = momentum_from_solution(two_osc, s, sol.z_opt)
        assert s @ p == pytest.approx(sol.rho, rel=1e-9)
        rotated = costate_flow(two_osc, p, -2.0)
        assert flow(two_osc, s, 2.0) @ rotated == pytest.approx(s @ p)


class TestDualCache:
    """Test warm starts along a path of nearby states."""

    def test_warm_start_matches_cold(self, two_osc, rng):
        """A cached solve returns the cold-start answer."""
        cache = DualCache(two_osc)
        s = random_state(two_osc, rng)
        for t in np.linspace(0.0, 1.0, 6):
            x = flow(two_osc, s, t) * (1.0 - 0.05 * t)
            warm = cache.solve(x)
            cold = solve_dual(two_osc, x)
            assert warm.rho == pytest.approx(cold.rho, rel=1e-9)
        assert cache.solves == 6
        assert cache.reuses == 0

    def test_warm_start_saves_iterations(self, two_osc, rng):
        """Tiny moves need fewer Newton steps than a cold start."""
        cache = DualCache(two_osc)
        s = random_state(two_osc, rng)
        cache.solve(s)
        warm = cache.solve(s * (1.0 + 1e-6) + 1e-6)
        cold = solve_dual(two_osc, s * (1.0 + 1e-6) + 1e-6)
        assert warm.iterations <= cold.iterations

    def test_reuse_delta(self, two_osc, rng):
        """States within reuse_delta keep z_opt without a new solve."""
        cache = DualCache(two_osc, reuse_delta=1e-3)
        s = random_state(two_osc, rng)
        first = cache.solve(s)
        second = cache.solve(s * (1.0 + 1e-5))
        assert cache.reuses == 1
        assert second.iterations == 0
        np.testing.assert_array_equal(second.z_opt, first.z_opt)
        assert second.rho == pytest.approx(first.rho * (1.0 + 1e-5))

    def test_reset(self, two_osc, rng):
        """reset drops the warm start."""
        cache = DualCache(two_osc, reuse_delta=1.0)
        s = random_state(two_osc, rng)
        cache.solve(s)
        cache.reset()
        cache.solve(s)
        assert cache.reuses == 0
        assert cache.solves == 2
