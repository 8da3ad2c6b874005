"""Property suite behind ``hypsoliton verify``.

Every check returns a measured value and the bound it is held to.  Values are
reported with seven significant digits so repeated runs give identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import evolution, heat_kernel, rearrangement
from .geometry import (
    ModelParams,
    RadialField,
    RadialGrid,
    Space,
    conjugate,
    default_r_max,
    effective_potential,
    eval_phi,
    eval_potential,
    eval_v_tilde,
    quadrature_weights,
)
from .ground_state import decay_diagnostics, gradient_flow_minimize, shooting_solve
from .nonlinearity import NonlinearitySpec
from .stability import Verdict, classify_stability, linearize, sweep

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "value": _fmt(self.value), "bound": _fmt(self.bound), "passed": self.passed}


def _fmt(x: float) -> str:
    return "nan" if x is None or not math.isfinite(x) else f"{x:.6e}"


def _below(name, value, bound):
    return Check(name, float(value), float(bound), bool(value < bound))


def geometry_checks() -> list:
    out = []
    worst = 0.0
    for d in (2, 3, 4, 5):
        g = RadialGrid(20.0, 2000)
        r = g.nodes
        lhs = eval_phi(r, d) ** 2 * np.sinh(r) ** (d - 1)
        worst = max(worst, float(np.max(np.abs(lhs / r ** (d - 1) - 1.0))))
    out.append(_below("phi^2 sinh^(d-1) r = r^(d-1)", worst, 1e-12))

    g = RadialGrid(20.0, 2000)
    f = RadialField(g, np.exp(-g.nodes**2) * (1 + g.nodes), Space.EUCLIDEAN)
    gap = 0.0
    for d in (2, 3, 4):
        a = np.sum(quadrature_weights(g, d, Space.EUCLIDEAN) * f.values**2)
        b = np.sum(quadrature_weights(g, d, Space.HYPERBOLIC) * conjugate(f, "to_hyperbolic", d).values ** 2)
        gap = max(gap, abs(a - b) / a)
    out.append(_below("conjugation preserves L2", gap, 1e-10))

    v3 = float(np.max(np.abs(eval_potential(g.nodes, ModelParams(3, 1.0, 0.0)))))
    out.append(Check("V_3 vanishes", v3, 0.0, v3 == 0.0))
    out.append(_below("Vtilde(0) = 1/3", abs(float(eval_v_tilde(0.0)) - 1.0 / 3.0), 1e-10))
    vt = eval_v_tilde(g.nodes)
    out.append(Check("Vtilde positive and decreasing", float(np.max(np.diff(vt))), 0.0, bool(np.all(vt > 0) and np.all(np.diff(vt) < 0))))

    excess = 0.0
    for d, lo, hi in ((2, 0.25, 1.0 / 3.0), (4, 2.0, 2.25), (5, 10.0 / 3.0, 4.0)):
        c2 = np.asarray(effective_potential(g.nodes, ModelParams(d, 0.5, 0.0)))
        excess = max(excess, float(np.max(c2 - hi)), float(np.max(lo - c2)))
    out.append(Check("effective potential bounds", excess, 1e-12, bool(excess <= 1e-12)))
    return out


GROUND_STATE_CASES = ((2, 1.0, 0.5), (3, 2.0, 1.0), (4, 1.0, -0.45))


def ground_state_checks() -> list:
    res = shoot = decay = 0.0
    shape_ok = True
    for d, p, lam in GROUND_STATE_CASES:
        params = ModelParams(d, p, lam)
        grid = RadialGrid.with_spacing(default_r_max(params.mu), 1e-3)
        sol = gradient_flow_minimize(params, grid=grid)
        u = sol.u.values
        shape_ok &= bool(np.all(u > 0) and np.all(np.diff(sol.hyperbolic_profile().values) <= 0))
        res = max(res, sol.residual)
        ref = shooting_solve(params, grid=grid).field.values
        shoot = max(shoot, float(np.max(np.abs(u - ref)) / np.max(ref)))
        fit = decay_diagnostics(sol)
        decay = max(decay, abs(fit.rate / fit.expected - 1.0))
    return [
        _below("ground state residual", res, 1e-8),
        Check("ground state positive and nonincreasing", 0.0, 0.0, shape_ok),
        _below("gradient flow vs shooting", shoot, 1e-5),
        _below("tail decay rate vs sqrt(mu)", decay, 0.02),
    ]


def stability_checks() -> list:
    lams = np.round(np.arange(0.5, 2.0 + 1e-9, 0.1), 10)
    curve = sweep(ModelParams(3, 2.0, 1.0), None, lams)
    vk = float(np.nanmax(curve.vk_defect[curve.interior()]))
    out = [_below("VK defect, d=3 p=2", vk, 1e-3)]
    curve = sweep(ModelParams(2, 1.0, 1.0), None, lams)
    verdicts = classify_stability(curve)
    stable = all(verdicts[i] is Verdict.STABLE for i in curve.interior())
    out.append(Check("stable branch, d=2 p=1", float(np.nanmin(curve.second_derivative[curve.interior()])), 0.0, stable))

    params = ModelParams(2, 1.0, 1.0)
    sol = gradient_flow_minimize(params, grid=RadialGrid(20.0, 400))
    rep = linearize(sol)
    out.append(Check("L_- u within 10x residual", rep.zero_mode_defect, 10 * sol.residual, bool(rep.zero_mode_defect <= 10 * sol.residual)))
    out.append(_below("lowest L_+ eigenvalue", float(rep.l_plus_eigs[0]), 0.0))
    out.append(_below("H spectrum reflection defect", rep.reflection_defect(), 1e-8))
    return out


def evolution_checks() -> list:
    params = ModelParams(2, 1.0, 1.0)
    grid = RadialGrid.with_spacing(default_r_max(params.mu), 5e-3)
    sol = gradient_flow_minimize(params, grid=grid)
    spec = NonlinearitySpec.power(1.0)
    state = evolution.evolve(sol.u.values, grid, params, spec, 0.01, 1.0, record_every=10)
    q = np.array([h.q for h in state.history])
    e = np.array([h.e for h in state.history])
    return [
        _below("mass drift per unit time", float(np.max(np.abs(q - q[0])) / abs(q[0])), 1e-8),
        _below("energy drift per unit time", float(np.max(np.abs(e - e[0])) / abs(e[0])), 1e-6),
    ]


def heat_kernel_checks() -> list:
    rho = np.linspace(0.0, 10.0, 401)
    bad = 0
    for d in range(1, 6):
        for t in (0.1, 1.0, 10.0):
            chk = heat_kernel.monotonicity_check(d, t, rho)
            # far tails underflow to exact zeros at small t
            vals = chk["values"]
            live = vals > 1e-280
            ok = chk["nonnegative"] and bool(np.all(np.diff(vals[live]) < 0))
            bad += not ok
    gap = max(heat_kernel.recursion_consistency(d, rho_, t) for d in (1, 3) for rho_ in (0.5, 2.0) for t in (0.1, 1.0))
    return [
        Check("heat kernel decreasing and nonnegative", float(bad), 0.0, bad == 0),
        _below("heat kernel recursion consistency", gap, 1e-6),
    ]


def rearrangement_checks(seed: int = 0, cases: int = 100) -> list:
    rng = np.random.default_rng(seed)
    grid = RadialGrid.with_spacing(10.0, 5e-4)
    norm_gap = idem = 0.0
    violations = 0
    for k in range(cases):
        d = 2 + k % 2
        f = rearrangement.random_bump_mixture(grid, rng)
        res = rearrangement.symmetrize(f, d)
        for p in (1, 2, 4):
            a = rearrangement.lp_norm(f, p, d)
            norm_gap = max(norm_gap, abs(rearrangement.lp_norm(res.f_star, p, d) / a - 1.0))
        before, after = rearrangement.kinetic_compare(f, d)
        violations += after > before + 1e-10 + 1e-8 * before
        again = rearrangement.symmetrize(res.f_star, d).f_star.values
        idem = max(idem, float(np.max(np.abs(again - res.f_star.values))))
    return [
        _below("Lp norms preserved by rearrangement", norm_gap, 1e-6),
        Check("kinetic energy increases under rearrangement", float(violations), 0.0, violations == 0),
        _below("rearrangement idempotent", idem, 1e-8),
    ]


def run_suite(seed: int = 0, cases: int = 100) -> dict:
    checks = (
        geometry_checks()
        + ground_state_checks()
        + stability_checks()
        + evolution_checks()
        + heat_kernel_checks()
        + rearrangement_checks(seed, cases)
    )
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "cases": cases,
        "passed": all(c.passed for c in checks),
        "checks": [c.to_dict() for c in checks],
    }
