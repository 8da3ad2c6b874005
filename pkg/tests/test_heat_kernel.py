import math

import numpy as np
import pytest
from scipy.integrate import quad

from hypsoliton.geometry import sphere_area
from hypsoliton.heat_kernel import (
    HeatKernelDomainError,
    HeatKernelEval,
    evaluate,
    heat_kernel,
    monotonicity_check,
    p1,
    recursion_consistency,
)

P1_AT_2_1 = 0.10377687435514867583506706236

# 25-digit values of 4 int_0^inf p_{d+1}(sigma + v^2) dv with p_3, p_5 from
# the closed forms, computed with mpmath
EVEN = {
    (2, 0.5, 0.7): 0.09659735711448659440359657,
    (2, 2.0, 0.05): 2.42788437919403189425753e-9,
    (2, 5.0, 3.0): 0.0007689781727796133852572476,
    (4, 0.5, 0.7): 0.0128675131313810192916503,
    (4, 2.0, 0.3): 0.001088120227816534073305268,
    (4, 5.0, 3.0): 0.000002011668217914485167638368,
}


def p3_reference(rho, t):
    return rho / (4 * math.pi * t * math.sinh(rho)) * (4 * math.pi * t) ** -0.5 * math.exp(-(rho**2) / (4 * t))


class TestOneDimensional:
    def test_peak_value(self):
        assert p1(0.0, 1 / (4 * math.pi)) == pytest.approx(1.0, rel=1e-15)

    def test_reference_value(self):
        assert p1(2.0, 1.0) == pytest.approx(P1_AT_2_1, rel=1e-14)

    def test_unit_integral(self):
        total = 2 * quad(lambda r: p1(r, 0.3), 0, np.inf, epsabs=0, epsrel=1e-13)[0]
        assert total == pytest.approx(1.0, rel=1e-12)

    def test_matches_general_entry(self):
        rho = np.linspace(0, 4, 9)
        assert np.allclose(heat_kernel(1, rho, 0.4), p1(rho, 0.4), rtol=1e-15)


class TestOddDimensions:
    def test_three_dimensional_closed_form(self):
        for rho in (1e-3, 0.3, 1.0, 6.0):
            assert heat_kernel(3, rho, 0.7) == pytest.approx(p3_reference(rho, 0.7), rel=1e-13)

    def test_three_dimensional_against_differentiated_p1(self):
        # -1/(2 pi sinh rho) d/drho p_1 by a fourth-order stencil
        h, t = 1e-4, 0.5
        for rho in (0.5, 1.5, 3.0):
            x = rho + h * np.array([-2, -1, 1, 2])
            v = p1(x, t)
            dp = (v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * h)
            assert heat_kernel(3, rho, t) == pytest.approx(-dp / (2 * math.pi * math.sinh(rho)), rel=1e-8)

    def test_continuous_across_series_switch(self):
        rho = np.array([0.049999, 0.05, 0.050001])
        v = heat_kernel(5, rho, 0.4)
        assert abs(v[0] - v[1]) < 1e-6 * v[1] and abs(v[2] - v[1]) < 1e-6 * v[1]
        assert np.all(np.diff(v) < 0)

    @pytest.mark.parametrize("d", [2, 3, 4, 5])
    def test_total_mass_without_spectral_factor(self, d):
        # the e^{-(d-1)^2 t/4} factor is left out, so the kernel integrates to its inverse
        t = 0.4
        total = quad(lambda r: heat_kernel(d, r, t) * math.sinh(r) ** (d - 1), 0, 30, limit=200, epsabs=0, epsrel=1e-11)[0]
        assert sphere_area(d) * total == pytest.approx(math.exp((d - 1) ** 2 * t / 4), rel=1e-8)


class TestEvenDimensions:
    @pytest.mark.parametrize("key", sorted(EVEN))
    def test_against_high_precision_quadrature(self, key):
        d, rho, t = key
        assert heat_kernel(d, rho, t) == pytest.approx(EVEN[key], rel=1e-10)

    def test_recursion_from_odd(self):
        for d in (1, 3, 5):
            for rho in (0.2, 1.0, 2.5):
                assert recursion_consistency(d, rho, 0.6) < 1e-9


@pytest.mark.parametrize("d", range(1, 8))
def test_monotone_and_positive(d):
    out = monotonicity_check(d, 0.5, np.linspace(0, 10, 201))
    assert out["decreasing"] and out["nonnegative"]
    assert out["values"].shape == (201,)


class TestDomain:
    def test_bad_time(self):
        with pytest.raises(HeatKernelDomainError):
            heat_kernel(3, 1.0, 0.0)

    def test_bad_dimension(self):
        for d in (0, 8):
            with pytest.raises(HeatKernelDomainError):
                heat_kernel(d, 1.0, 1.0)

    def test_negative_rho(self):
        with pytest.raises(HeatKernelDomainError):
            heat_kernel(3, -0.1, 1.0)

    def test_unsorted_grid(self):
        with pytest.raises(ValueError):
            monotonicity_check(3, 1.0, [0.0, 2.0, 1.0])

    def test_evaluation_record(self):
        ev = evaluate(3, 2.0, 0.5)
        assert isinstance(ev, HeatKernelEval)
        assert ev.sigma == pytest.approx(math.cosh(1.0) ** 2)
        assert ev.value == pytest.approx(p3_reference(2.0, 0.5), rel=1e-13)
        with pytest.raises(ValueError):
            HeatKernelEval(3, 1.0, 0.0, 0.5, 1.0)
