"""Unit tests for the oscillator model, coordinate maps and resonance search."""

import math

import numpy as np
import pytest

from genfric.errors import DimensionError, SearchSpaceTooLargeError
from genfric.model import (
    OscillatorSystem,
    costate_flow,
    default_resonance_tolerance,
    detect_resonance,
    drift,
    energy,
    flow,
    z_map,
)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


class TestOscillatorSystem:
    """Test OscillatorSystem construction and derived matrices."""

    def test_block_matrices(self):
        """A is block diagonal [[0, 1], [-w^2, 0]]; B stacks (0, 1)."""
        sys = OscillatorSystem((1.0, 3.0))
        expected = np.array(
            [
                [0.0, 1.0, 0.0, 0.0],
                [-1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
                [0.0, 0.0, -9.0, 0.0],
            ]
        )
        np.testing.assert_array_equal(sys.A, expected)
        np.testing.assert_array_equal(sys.B, [0.0, 1.0, 0.0, 1.0])
        assert sys.n == 2
        assert sys.dim == 4

    def test_a_norm_is_spectral_norm(self):
        """a_norm matches numpy's 2-norm of A."""
        sys = OscillatorSystem((0.5, 1.7))
        assert sys.a_norm == pytest.approx(np.linalg.norm(sys.A, 2))

    @pytest.mark.parametrize("omegas", [(), (0.0,), (-1.0,), (1.0, math.inf), (math.nan,)])
    def test_rejects_bad_frequencies(self, omegas):
        """Empty, nonpositive or non-finite frequencies are rejected."""
        with pytest.raises(ValueError):
            OscillatorSystem(omegas)

    def test_check_rejects_wrong_length(self, two_osc):
        """State vectors must have length 2N."""
        with pytest.raises(DimensionError, match="expected 4"):
            two_osc.check([1.0, 2.0])

    def test_check_rejects_non_finite(self, one_osc):
        """Non-finite entries are rejected."""
        with pytest.raises(DimensionError):
            one_osc.check([1.0, math.nan])

    def test_scaled(self):
        """scaled multiplies every frequency."""
        assert OscillatorSystem((1.0, 2.0)).scaled(3.0).omegas == (3.0, 6.0)


class TestDrift:
    """Test the uncontrolled velocity."""

    def test_unit_frequency(self, one_osc):
        """w=1, s=(1,0) -> (0,-1)."""
        np.testing.assert_array_equal(drift(one_osc, [1.0, 0.0]), [0.0, -1.0])

    def test_frequency_two(self):
        """w=2, s=(0,1) -> (1,0)."""
        np.testing.assert_array_equal(drift(OscillatorSystem((2.0,)), [0.0, 1.0]), [1.0, 0.0])

    def test_two_blocks(self):
        """w=(1,3), s=(1,0,0,1) -> (0,-1,1,0)."""
        sys = OscillatorSystem((1.0, 3.0))
        np.testing.assert_array_equal(drift(sys, [1.0, 0.0, 0.0, 1.0]), [0.0, -1.0, 1.0, 0.0])

    def test_matches_matrix_product(self, two_osc, rng):
        """drift(s) equals A @ s."""
        s = rng.normal(size=4)
        np.testing.assert_allclose(drift(two_osc, s), two_osc.A @ s)

    def test_dimension_mismatch(self, one_osc):
        """Wrong length raises DimensionError."""
        with pytest.raises(DimensionError):
            drift(one_osc, [1.0, 2.0, 3.0])


class TestZMap:
    """Test reduced momentum coordinates."""

    def test_velocity_dual_only(self):
        """w=2, p=(0,1) -> z=(1)."""
        np.testing.assert_allclose(z_map(OscillatorSystem((2.0,)), [0.0, 1.0]), [1.0])

    def test_position_dual_only(self):
        """w=3, p=(3,0) -> z=(1)."""
        np.testing.assert_allclose(z_map(OscillatorSystem((3.0,)), [3.0, 0.0]), [1.0])

    def test_two_blocks(self):
        """w=(1,1), p=(3,0,0,4) -> z=(3,4)."""
        np.testing.assert_allclose(z_map(OscillatorSystem((1.0, 1.0)), [3, 0, 0, 4]), [3, 4])

    def test_positive_homogeneity(self, two_osc, rng):
        """z(lambda p) = lambda z(p) for lambda >= 0."""
        for _ in range(10):
            p = rng.normal(size=4)
            lam = rng.uniform(0.0, 5.0)
            np.testing.assert_allclose(z_map(two_osc, lam * p), lam * z_map(two_osc, p))

    def test_invariant_under_costate_rotation(self, three_osc, rng):
        """z(e^{A*t} p) = z(p) to 1e-12."""
        for _ in range(20):
            p = rng.normal(size=6)
            t = rng.uniform(-50.0, 50.0)
            np.testing.assert_allclose(
                z_map(three_osc, costate_flow(three_osc, p, t)), z_map(three_osc, p), atol=1e-12
            )


class TestEnergy:
    """Test mechanical energy."""

    def test_values(self, one_osc):
        """Examples: 0.5, 0 and 2.5."""
        assert energy(one_osc, [1.0, 0.0]) == 0.5
        assert energy(one_osc, [0.0, 0.0]) == 0.0
        assert energy(OscillatorSystem((2.0,)), [1.0, 1.0]) == 2.5

    def test_conserved_by_free_motion(self, two_osc, rng):
        """The closed-form flow preserves energy."""
        s = rng.normal(size=4)
        for t in (0.1, 1.0, 7.3):
            assert energy(two_osc, flow(two_osc, s, t)) == pytest.approx(energy(two_osc, s))

    def test_conserved_by_rk4_drift(self, one_osc):
        """Classical RK4 on x' = Ax over [0, 1] preserves energy to integrator order."""
        s = np.array([1.0, 0.5])
        h = 0.01
        for _ in range(100):
            k1 = drift(one_osc, s)
            k2 = drift(one_osc, s + 0.5 * h * k1)
            k3 = drift(one_osc, s + 0.5 * h * k2)
            k4 = drift(one_osc, s + h * k3)
            s = s + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        assert energy(one_osc, s) == pytest.approx(0.625, abs=1e-9)


class TestFlows:
    """Test the closed-form block rotations."""

    def test_flow_matches_matrix_exponential(self, two_osc, rng):
        """flow agrees with a series expansion of e^{At}."""
        s = rng.normal(size=4)
        t = 0.37
        expm = np.eye(4)
        term = np.eye(4)
        for k in range(1, 30):
            term = term @ (two_osc.A * t) / k
            expm = expm + term
        np.testing.assert_allclose(flow(two_osc, s, t), expm @ s, atol=1e-12)

    def test_flow_group_property(self, three_osc, rng):
        """flow(flow(s, a), b) = flow(s, a + b)."""
        s = rng.normal(size=6)
        np.testing.assert_allclose(
            flow(three_osc, flow(three_osc, s, 1.2), 0.8), flow(three_osc, s, 2.0), atol=1e-12
        )

    def test_costate_flow_preserves_pairing(self, two_osc, rng):
        """<e^{At} x, e^{-A*t} p> = <x, p>."""
        s, p = rng.normal(size=4), rng.normal(size=4)
        t = 2.5
        paired = flow(two_osc, s, t) @ costate_flow(two_osc, p, -t)
        assert paired == pytest.approx(s @ p)


class TestResonance:
    """Test the integer-relation search."""

    def test_one_two_is_resonant(self):
        """w=(1,2), M=3 -> witness (2,-1)."""
        report = detect_resonance(OscillatorSystem((1.0, 2.0)), 3)
        assert report.resonant
        assert report.witnesses[0] == (2, -1)
        assert report.minimal == [(2, -1)]

    def test_one_two_three_minimal_witnesses(self, three_osc):
        """w=(1,2,3) relations include (1,1,-1) and (2,-1,0)."""
        report = detect_resonance(three_osc, 2)
        assert report.resonant
        assert (1, 1, -1) in report.minimal
        assert (2, -1, 0) in report.minimal
        assert report.witnesses[0] == (1, 1, -1)

    def test_single_frequency_never_resonant(self, one_osc):
        """m * w = 0 forces m = 0."""
        assert not detect_resonance(one_osc, 10).resonant

    def test_golden_ratio_clean(self):
        """w=(1, golden ratio), M=20 -> no witness at 1e-9."""
        report = detect_resonance(OscillatorSystem((1.0, GOLDEN)), 20, tolerance=1e-9)
        assert not report.resonant
        assert report.witnesses == []

    def test_witness_invariants(self, three_osc):
        """Every witness is nonzero, bounded, sign-normalized and within tolerance."""
        report = detect_resonance(three_osc, 3)
        for m in report.witnesses:
            assert any(m)
            assert max(map(abs, m)) <= 3
            assert next(v for v in m if v != 0) > 0
            assert abs(np.dot(m, three_osc.omegas)) <= report.tolerance

    def test_scale_invariance(self):
        """Scaling every frequency keeps the witness set."""
        base = OscillatorSystem((1.0, 2.0, 3.0))
        scaled = detect_resonance(base.scaled(7.5), 3)
        assert detect_resonance(base, 3).witnesses == scaled.witnesses

    def test_default_tolerance(self, three_osc):
        """Default tolerance is 1e-9 * max|w| * M."""
        assert default_resonance_tolerance(three_osc, 4) == pytest.approx(1.2e-8)

    def test_rejects_bad_arguments(self, one_osc):
        """M >= 1 and a positive tolerance are required."""
        with pytest.raises(ValueError):
            detect_resonance(one_osc, 0)
        with pytest.raises(ValueError):
            detect_resonance(one_osc, 3, tolerance=0.0)

    def test_search_space_guard(self):
        """Too large a lattice is refused."""
        sys = OscillatorSystem(tuple(float(i + 1) for i in range(6)))
        with pytest.raises(SearchSpaceTooLargeError):
            detect_resonance(sys, 50, max_search_size=1000)
