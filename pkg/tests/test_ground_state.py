import math

import numpy as np
import pytest

from hypsoliton import (
    ModelError,
    ModelParams,
    NonlinearitySpec,
    RadialGrid,
    SolverError,
    default_r_max,
    gradient_flow_minimize,
    shooting_solve,
)
from hypsoliton.geometry import Space, quadrature_weights
from hypsoliton.ground_state import (
    assemble_operator,
    decay_diagnostics,
    defect_norm,
    init_sensitivity,
    mass,
    ode_residual,
    residual,
    stationary_defect,
)
from hypsoliton.rearrangement import symmetrize


class TestOperator:
    def test_self_adjoint_in_cell_volume_inner_product(self):
        for d in (2, 3, 5):
            op = assemble_operator(RadialGrid(10.0, 200), ModelParams(d, 1.0, 0.5))
            assert op.symmetry_defect() < 1e-14

    def test_spectrum_bounded_below_by_mu_in_three_dimensions(self):
        params = ModelParams(3, 1.0, 0.0)
        op = assemble_operator(RadialGrid(20.0, 2000), params)
        vals, _ = op.lowest_eigenpairs(3)
        assert vals[0] >= params.mu
        # Dirichlet box: mu + (pi / r_max)^2
        assert vals[0] == pytest.approx(1.0 + (math.pi / 20.0) ** 2, rel=1e-5)

    def test_second_order_on_gaussian(self):
        errs = []
        for n in (400, 800, 1600):
            g = RadialGrid(6.0, n)
            op = assemble_operator(g, ModelParams(3, 1.0, 0.0), "none")
            r = g.nodes
            u = np.exp(-(r**2))
            exact = (6.0 - 4.0 * r**2) * u
            errs.append(defect_norm(op.apply(u) - exact, op))
        assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5

    def test_apply_matches_dense(self):
        g = RadialGrid(4.0, 60)
        op = assemble_operator(g, ModelParams(4, 1.0, 0.3))
        u = np.cos(g.nodes)
        assert np.allclose(op.dense() @ u, op.apply(u), rtol=1e-12, atol=1e-12)

    def test_unknown_potential(self):
        with pytest.raises(ValueError):
            assemble_operator(RadialGrid(4.0, 60), ModelParams(3, 1.0, 0.0), "bogus")


class TestGradientFlow:
    def test_converged_three_dimensional_state(self, soliton_3d):
        sol = soliton_3d
        assert sol.converged and sol.residual < 1e-8
        assert residual(sol) == pytest.approx(sol.residual, rel=1e-8)
        assert sol.lam_out == pytest.approx(1.0, abs=1e-8)
        u = sol.u.values
        assert np.all(u > 0)
        peak = int(np.argmax(u))
        assert peak == 0 and np.all(np.diff(u) < 0)

    def test_warm_restart(self, soliton_3d):
        again = gradient_flow_minimize(soliton_3d.params, grid=soliton_3d.grid, init=soliton_3d.u)
        assert again.iterations <= 2
        assert np.max(np.abs(again.u.values - soliton_3d.u.values)) < 1e-8

    def test_perturbation_is_detected(self, soliton_3d):
        sol = soliton_3d
        op = assemble_operator(sol.grid, sol.params, "shifted")
        bumped = stationary_defect(1.01 * sol.u.values, sol.lam_out, op, sol.spec)
        assert defect_norm(bumped, op) > 1e4 * sol.residual

    def test_linear_eigenfunction_is_stationary_for_zero_nonlinearity(self):
        params = ModelParams(2, 1.0, 0.0)
        op = assemble_operator(RadialGrid(15.0, 1500), params, "shifted")
        vals, vecs = op.lowest_eigenpairs(1)
        v = vecs[:, 0]
        spec = NonlinearitySpec.power(1.0).zeroed()
        assert defect_norm(stationary_defect(v, -vals[0], op, spec), op) < 1e-10 * defect_norm(v, op)

    def test_negative_lambda_two_dimensions(self):
        params = ModelParams(2, 1.0, -0.2)
        grid = RadialGrid.with_spacing(default_r_max(params.mu), 0.02)
        sol = gradient_flow_minimize(params, grid=grid)
        assert sol.residual < 1e-8
        assert sol.decay_rate == pytest.approx(math.sqrt(params.mu), rel=0.02)

    def test_iteration_budget(self):
        params = ModelParams(3, 2.0, 1.0)
        with pytest.raises(SolverError) as info:
            gradient_flow_minimize(params, grid=RadialGrid(20.0, 1000), max_iters=3)
        assert info.value.iterations == 3 and info.value.last_residual > 0

    def test_defocusing_rejected(self):
        params = ModelParams(3, 2.0, 1.0)
        with pytest.raises(ModelError):
            gradient_flow_minimize(params, NonlinearitySpec.power(2.0).negated(), RadialGrid(20.0, 500))

    def test_grid_convergence_of_amplitude(self):
        params = ModelParams(3, 2.0, 1.0)
        amps = [gradient_flow_minimize(params, grid=RadialGrid.with_spacing(20.0, h)).u.values[0] for h in (0.04, 0.02, 0.01)]
        assert abs(amps[0] - amps[1]) / abs(amps[1] - amps[2]) > 3.5

    def test_initial_guess_insensitive(self):
        params = ModelParams(3, 2.0, 1.0)
        out = init_sensitivity(params, None, RadialGrid(20.0, 2000))
        assert not out["flagged"]


class TestFixedMass:
    def test_mass_and_monotone_energy(self):
        params = ModelParams(2, 0.5, 0.0)
        grid = RadialGrid(30.0, 3000)
        sol = gradient_flow_minimize(params, grid=grid, mass_target=5.0)
        assert sol.mode == "fixed_mass"
        assert sol.mass == pytest.approx(5.0, rel=1e-10)
        assert np.all(np.abs(np.array(sol.mass_history) - 5.0) < 1e-9)
        assert np.all(np.diff(sol.energy_history) <= 1e-12 * np.abs(sol.energy_history[1:]))
        assert sol.residual < 1e-8

    def test_agrees_with_fixed_lambda(self):
        params = ModelParams(2, 0.5, 0.0)
        grid = RadialGrid(30.0, 3000)
        fm = gradient_flow_minimize(params, grid=grid, mass_target=5.0)
        fl = gradient_flow_minimize(params.with_lambda(fm.lam_out), grid=grid)
        assert fl.mass == pytest.approx(5.0, rel=1e-6)
        assert np.max(np.abs(fl.u.values - fm.u.values)) < 1e-6

    def test_supercritical_mass_rejected(self):
        with pytest.raises(ModelError):
            gradient_flow_minimize(ModelParams(2, 2.5, 1.0), grid=RadialGrid(20.0, 200), mass_target=1.0)
        with pytest.raises(ModelError):
            gradient_flow_minimize(ModelParams(2, 1.0, 1.0), grid=RadialGrid(20.0, 200), mass_target=-1.0)


class TestShooting:
    def test_matches_gradient_flow(self, soliton_3d):
        shot = shooting_solve(soliton_3d.params, grid=soliton_3d.grid)
        u, v = soliton_3d.u.values, shot.field.values
        assert np.max(np.abs(u - v)) / np.max(u) < 1e-4
        assert shot.reliable_radius > 8.0

    def test_ode_residual_fourth_order(self):
        params = ModelParams(3, 2.0, 1.0)
        res = []
        for n in (2000, 4000):
            grid = RadialGrid(20.0, n)
            shot = shooting_solve(params, grid=grid)
            res.append(ode_residual(shot.field.values, grid, params, stop=7.5))
        assert res[1] < 1e-5 and res[0] / res[1] > 10

    def test_decay(self):
        params = ModelParams(2, 1.0, 1.0)
        shot = shooting_solve(params, grid=RadialGrid(20.0, 4000))
        fit = decay_diagnostics(shot.field, params, window=(0.3, 0.6))
        assert fit.rate == pytest.approx(fit.expected, rel=0.02)

    def test_rejects_non_power(self):
        with pytest.raises(ModelError):
            shooting_solve(ModelParams(2, 5.0, 1.0), NonlinearitySpec("saturated", 5.0, q=1.0))


def test_decay_rate_of_flow_solution(soliton_2d):
    fit = decay_diagnostics(soliton_2d)
    assert fit.rate == pytest.approx(math.sqrt(soliton_2d.params.mu), rel=0.01)
    s = soliton_2d.summary()
    assert s["decay_rate_expected"] == pytest.approx(math.sqrt(soliton_2d.params.mu))
    assert s["hamiltonian_energy"] == 2 * s["energy"]


def test_hyperbolic_profile_is_its_own_rearrangement(soliton_2d):
    R = soliton_2d.hyperbolic_profile()
    star = symmetrize(R, 2).f_star
    assert np.max(np.abs(star.values - R.values)) < 1e-12 * np.max(R.values)


def test_mass_matches_hyperbolic_norm(soliton_2d):
    R = soliton_2d.hyperbolic_profile()
    w = quadrature_weights(soliton_2d.grid, 2, Space.HYPERBOLIC)
    op = assemble_operator(soliton_2d.grid, soliton_2d.params)
    assert mass(soliton_2d.u.values, op) == pytest.approx(float(np.sum(w * R.values**2)), rel=1e-10)
