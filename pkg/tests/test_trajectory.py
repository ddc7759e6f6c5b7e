import math
from fractions import Fraction

import numpy as np
import pytest

from twomass.errors import ValidationError
from twomass.trajectory import (
    SMOOTH_STEP_COEFFICIENTS,
    TrajectorySpec,
    sigma,
    sigma_samples,
    y_ref_at,
    y_ref_derivative,
)


def sigma_rational(u: Fraction) -> Fraction:
    """Exact-rational oracle for the timing law (integer coefficients)."""
    acc = Fraction(0)
    for c in SMOOTH_STEP_COEFFICIENTS:
        acc = acc * u + Fraction(int(c))
    return acc * u**8


class TestSigma:
    def test_endpoints(self, reference):
        assert sigma(reference, reference.t0) == 0.0
        assert abs(sigma(reference, reference.tf) - 1.0) <= 1e-12

    def test_rational_oracle_values(self, reference):
        # frozen from the exact-rational oracle:
        #   sigma(1/4) = 2321945/134217728, sigma(1/2) = 1/2,
        #   sigma(3/4) = 131895783/134217728
        cases = {
            0.25: (Fraction(2321945, 134217728), 0.017299838364124298),
            0.5: (Fraction(1, 2), 0.5),
            0.75: (Fraction(131895783, 134217728), 0.9827001616358757),
        }
        for frac_t, (exact, frozen) in cases.items():
            assert sigma_rational(Fraction(frac_t)) == exact
            t = reference.t0 + frac_t * (reference.tf - reference.t0)
            assert abs(sigma(reference, t) - float(exact)) <= 1e-14
            assert float(exact) == frozen

    def test_monotone_on_dense_grid(self, reference):
        grid = np.linspace(reference.t0, reference.tf, 10_000)
        values = np.array([sigma(reference, t) for t in grid])
        assert np.all(np.diff(values) >= 0.0)

    def test_range(self, reference):
        grid = np.linspace(reference.t0, reference.tf, 2_000)
        values = np.array([sigma(reference, t) for t in grid])
        assert values.min() >= -1e-12 and values.max() <= 1.0 + 1e-12

    def test_out_of_window_is_contract_violation(self, reference):
        with pytest.raises(ValueError):
            sigma(reference, reference.tf + 0.1)

    def test_shifted_window(self):
        spec = TrajectorySpec(y0=0.0, yf=1.0, t0=2.0, tf=4.0)
        assert sigma(spec, 2.0) == 0.0
        assert abs(sigma(spec, 3.0) - 0.5) <= 1e-14  # midpoint symmetry
        assert abs(sigma(spec, 4.0) - 1.0) <= 1e-12

    def test_vectorized_matches_scalar_bitwise(self, reference):
        grid = np.linspace(reference.t0, reference.tf, 257)
        samples = sigma_samples(reference, grid)
        assert all(samples[i] == sigma(reference, grid[i]) for i in range(len(grid)))
        assert sigma_samples(reference, np.array([])).size == 0
        with pytest.raises(ValueError):
            sigma_samples(reference, np.array([reference.tf + 1.0]))


class TestYRef:
    def test_branches(self, reference):
        assert y_ref_at(reference, -1.0) == 0.0
        assert y_ref_at(reference, 0.0) == 0.0
        assert y_ref_at(reference, 15.0) == 4.0 * math.pi  # two revolutions per second
        assert abs(y_ref_at(reference, 15.0) - 12.566370614359172) == 0.0

    def test_degenerate_rest_reference(self):
        spec = TrajectorySpec(y0=3.0, yf=3.0, t0=0.0, tf=10.0)
        for t in (0.0, 0.5, 5.0, 10.0, 20.0):
            assert y_ref_at(spec, t) == 3.0
            assert y_ref_derivative(spec, t) == 0.0

    def test_continuity_at_seams(self, reference):
        for seam in (reference.t0, reference.tf):
            inside = y_ref_at(reference, seam)
            outside = y_ref_at(reference, seam - 1e-12), y_ref_at(reference, seam + 1e-12)
            assert abs(inside - outside[0]) <= 1e-9
            assert abs(inside - outside[1]) <= 1e-9


class TestDerivative:
    def test_zero_outside_and_at_seams(self, reference):
        assert y_ref_derivative(reference, -0.5) == 0.0
        assert y_ref_derivative(reference, 12.0) == 0.0
        assert y_ref_derivative(reference, 0.0) == 0.0  # eight-fold zero at start
        assert abs(y_ref_derivative(reference, 10.0)) <= 1e-12

    def test_smooth_start_and_stop(self, reference):
        # orders 1..3 of centered differences at the seams stay tiny
        h = 1e-3
        for seam in (reference.t0, reference.tf):
            y = lambda t: y_ref_at(reference, t)
            d1 = (y(seam + h) - y(seam - h)) / (2 * h)
            d2 = (y(seam + h) - 2 * y(seam) + y(seam - h)) / h**2
            d3 = (y(seam + 2 * h) - 2 * y(seam + h) + 2 * y(seam - h) - y(seam - 2 * h)) / (
                2 * h**3
            )
            for value in (d1, d2, d3):
                assert abs(value) <= 1e-6

    def test_matches_central_differences(self, reference):
        h = 1e-4
        for t in np.linspace(0.5, 9.5, 101):
            fd = (y_ref_at(reference, t + h) - y_ref_at(reference, t - h)) / (2 * h)
            exact = y_ref_derivative(reference, t)
            assert abs(fd - exact) <= 1e-6 * max(abs(exact), 1e-3)


class TestSpecValidation:
    def test_window_must_be_ordered(self):
        with pytest.raises(ValidationError):
            TrajectorySpec(y0=0.0, yf=1.0, t0=5.0, tf=5.0)

    def test_coefficients_must_reach_one(self):
        with pytest.raises(ValidationError):
            TrajectorySpec(y0=0.0, yf=1.0, t0=0.0, tf=1.0, coefficients=(0.0,) * 8)

    def test_coefficient_override_for_testing(self):
        # a plain degree-8 ramp: sigma = u^8
        spec = TrajectorySpec(
            y0=0.0, yf=2.0, t0=0.0, tf=1.0,
            coefficients=(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0),
        )
        assert abs(sigma(spec, 0.5) - 0.5**8) <= 1e-15
