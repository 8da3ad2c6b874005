import math

import numpy as np
import pytest
from scipy.integrate import quad

from hypsoliton import RadialField, RadialGrid, Space
from hypsoliton.geometry import sphere_area
from hypsoliton.rearrangement import (
    LevelFunction,
    ball_volume,
    kinetic_compare,
    kinetic_energy,
    lp_norm,
    random_bump_mixture,
    superlevel_measures,
    symmetrize,
)


def hyp(grid, values):
    return RadialField(grid, np.asarray(values, dtype=float), Space.HYPERBOLIC)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_ball_volume_against_quadrature(d):
    for r in (1e-3, 0.2, 1.0, 4.0, 9.0):
        ref = sphere_area(d) * quad(lambda s: math.sinh(s) ** (d - 1), 0, r, epsabs=0, epsrel=1e-13)[0]
        assert ball_volume(r, d) == pytest.approx(ref, rel=1e-12)


def test_ball_volume_increasing_from_zero():
    r = np.linspace(0, 5, 501)
    for d in (2, 3, 6):
        v = ball_volume(r, d)
        assert v[0] == 0.0 and np.all(np.diff(v) > 0)


def test_level_function_against_sampling():
    # f(v) piecewise linear on [0, 1], [1, 3], [3, 4]
    lf = LevelFunction(np.array([0.0, 1.0, 3.0, 4.0]), np.array([2.0, 0.5, 1.5]), np.array([0.5, 1.5, 0.0]))
    v = np.linspace(0, 4, 4_000_001)[:-1] + 0.5e-6
    f = np.interp(v, [0, 1, 1, 3, 3, 4], [2.0, 0.5, 0.5, 1.5, 1.5, 0.0])
    for t in (0.0, 0.25, 0.5, 0.9, 1.5, 1.75, 2.0, 3.0):
        assert lf(np.array([t]))[0] == pytest.approx(np.count_nonzero(f > t) * 1e-6, abs=1e-5)


def test_level_function_flat_piece():
    lf = LevelFunction(np.array([0.0, 2.0, 3.0]), np.array([1.0, 1.0]), np.array([1.0, 0.0]))
    assert lf(np.array([1.0]), strict=True)[0] == 0.0
    assert lf(np.array([1.0]), strict=False)[0] == pytest.approx(2.0)
    assert lf(np.array([0.5]))[0] == pytest.approx(2.5)


class TestSymmetrize:
    def test_decreasing_input_unchanged(self):
        g = RadialGrid(10.0, 2000)
        f = hyp(g, np.exp(-(g.nodes**2)))
        star = symmetrize(f, 3).f_star
        assert np.max(np.abs(star.values - f.values)) < 1e-14
        before, after = kinetic_compare(f, 3)
        assert after == pytest.approx(before, rel=1e-12)

    def test_shifted_gaussian(self):
        g = RadialGrid.with_spacing(10.0, 1e-3)
        f = hyp(g, np.exp(-((g.nodes - 2.0) ** 2)))
        star = symmetrize(f, 3).f_star.values
        # the two equal cells straddling r = 2 give a flat top; below it the profile strictly decreases
        assert np.all(np.diff(star) <= 0)
        live = (star > 1e-12) & (star < star[0])
        assert np.all(np.diff(star[live]) < 0)
        assert star[0] <= f.values.max() and star[0] > f.values.max() - 1e-6
        for p in (1.0, 2.0, 4.0):
            assert lp_norm(hyp(g, star), p, 3) == pytest.approx(lp_norm(f, p, 3), rel=1e-5)
        assert kinetic_energy(hyp(g, star), 3) < kinetic_energy(f, 3)

    def test_plateau(self):
        # a flat top becomes a flat top of the same volume centred at the origin
        g = RadialGrid.with_spacing(8.0, 1e-3)
        r = g.nodes
        f = hyp(g, np.clip(1.5 - np.abs(r - 2.5), 0.0, 1.0))
        star = symmetrize(f, 2).f_star.values
        top = ball_volume(3.0, 2) - ball_volume(2.0, 2)
        r_star = 2.0 * math.asinh(math.sqrt(top / (4 * math.pi)))
        inside = r < r_star - 2 * g.h
        outside = r > r_star + 2 * g.h
        assert np.allclose(star[inside], 1.0, atol=1e-12)
        assert np.all(star[outside] < 1.0)

    def test_two_bumps_norms(self):
        g = RadialGrid.with_spacing(10.0, 5e-4)
        r = g.nodes
        f = hyp(g, np.exp(-(((r - 1.0) / 0.4) ** 2)) + 0.7 * np.exp(-(((r - 4.0) / 0.8) ** 2)))
        star = hyp(g, symmetrize(f, 2).f_star.values)
        for p in (1.0, 2.0, 3.0):
            assert lp_norm(star, p, 2) == pytest.approx(lp_norm(f, p, 2), rel=1e-5)

    def test_equimeasurable(self):
        g = RadialGrid.with_spacing(8.0, 1e-3)
        f = random_bump_mixture(g, np.random.default_rng(11), n_bumps=3)
        star = symmetrize(f, 3).f_star
        levels = np.linspace(0.05, 0.95, 10) * f.values.max()
        a = superlevel_measures(f, 3, levels)
        b = superlevel_measures(star, 3, levels)
        assert np.allclose(a, b, rtol=1e-4)

    def test_idempotent(self):
        g = RadialGrid.with_spacing(8.0, 1e-3)
        f = random_bump_mixture(g, np.random.default_rng(5))
        once = symmetrize(f, 4).f_star
        twice = symmetrize(once, 4).f_star
        assert np.max(np.abs(twice.values - once.values)) < 1e-12 * np.max(once.values)

    @pytest.mark.parametrize("seed", range(8))
    def test_kinetic_energy_does_not_increase(self, seed):
        g = RadialGrid.with_spacing(8.0, 2e-3)
        f = random_bump_mixture(g, np.random.default_rng(seed))
        before, after = kinetic_compare(f, 2 + seed % 3)
        assert after <= before * (1 + 1e-12)

    def test_sign_is_dropped(self):
        g = RadialGrid(5.0, 500)
        f = np.exp(-((g.nodes - 1.0) ** 2))
        a = symmetrize(hyp(g, f), 3).f_star.values
        b = symmetrize(hyp(g, -f), 3).f_star.values
        assert np.array_equal(a, b)

    def test_zero_input(self):
        g = RadialGrid(5.0, 100)
        assert np.all(symmetrize(hyp(g, np.zeros(100)), 3).f_star.values == 0)

    def test_rejects_euclidean_tag(self):
        g = RadialGrid(5.0, 100)
        with pytest.raises(ValueError):
            symmetrize(RadialField(g, np.ones(100), Space.EUCLIDEAN), 3)
