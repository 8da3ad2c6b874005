"""Radial time evolution of the conjugated Schroedinger equation

    i u_t = (A + V_d + (d-1)^2/4) u - ftilde(r, u),

whose solitons are ``u = e^{i lambda t} u_lambda``.  Strang splitting alternates
an exact pointwise phase rotation (potential plus nonlinearity, which leaves
``|u|`` fixed) with a Crank-Nicolson step for ``A`` that is unitary for the
weighted inner product.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .geometry import ModelParams, RadialField, RadialGrid, Space, sphere_area
from .ground_state import DiscreteRadialOperator, GroundStateSolution, assemble_operator
from .nonlinearity import NonlinearitySpec, coefficient, eval_F_conjugated


class BoundaryContamination(RuntimeError):
    """Radiation reached the outer wall; the run no longer models the whole space."""


@dataclass(frozen=True)
class HistoryRow:
    t: float
    q: float
    e: float
    grad_norm: float
    orbital_distance: float = math.nan


@dataclass
class EvolutionState:
    t: float
    u: RadialField
    q_now: float
    e_now: float
    grad_norm: float
    history: list = field(default_factory=list)

    def record(self, orbital_distance: float = math.nan) -> None:
        if self.history and not self.t > self.history[-1].t:
            raise ValueError("history times must increase")
        self.history.append(HistoryRow(self.t, self.q_now, self.e_now, self.grad_norm, orbital_distance))


# ---------------------------------------------------------------------------
# propagator


class Propagator:
    """Caches the operator and the Crank-Nicolson band matrices for one grid."""

    def __init__(self, grid: RadialGrid, params: ModelParams, spec: NonlinearitySpec):
        self.grid = grid
        self.params = params
        self.spec = spec
        self.op: DiscreteRadialOperator = assemble_operator(grid, params, "shifted")
        self._bands = {}

    def _cn_bands(self, dt: float):
        if dt not in self._bands:
            self._bands.clear()
            self._bands[dt] = self.op.banded_general(1.0 + 0j, 0.5j * dt, extra=-self.op.potential)
        return self._bands[dt]

    def rotate(self, u, dt: float):
        g = np.asarray(coefficient(self.spec, self.grid.nodes, np.abs(u), self.params.d))
        return u * np.exp(-1j * dt * (self.op.potential - g))

    def kinetic(self, u, dt: float):
        op = self.op
        flux = op.s_off * np.diff(u)
        su = op._row_sums * u
        su[:-1] += flux
        su[1:] -= flux
        rhs = op.w * u - 0.5j * dt * su
        return solve_banded((1, 1), self._cn_bands(dt), rhs, check_finite=False)

    def step(self, u, dt: float):
        u = self.rotate(u, 0.5 * dt)
        u = self.kinetic(u, dt)
        return self.rotate(u, 0.5 * dt)

    # conserved quantities, hyperbolic measure through the conjugation isometry
    def mass(self, u) -> float:
        return sphere_area(self.params.d) * float(np.sum(self.op.w * np.abs(u) ** 2))

    def grad_sq(self, u) -> float:
        """int |grad U|^2 over hyperbolic space for U = phi u."""
        return sphere_area(self.params.d) * self.op.quadratic_form(u)

    def energy(self, u) -> float:
        """Conserved energy int |grad U|^2 - 2 F_H(U)."""
        F = eval_F_conjugated(self.spec, self.grid.nodes, np.abs(u), self.params.d)
        return self.grad_sq(u) - 2.0 * sphere_area(self.params.d) * float(np.sum(self.op.w * F))

    def h1_inner(self, a, b) -> complex:
        """<a, b> in H^1 of hyperbolic space (conjugated fields, a conjugate-linear)."""
        op = self.op
        flux = op.s_off * np.diff(b)
        sb = op._row_sums * b
        sb[:-1] += flux
        sb[1:] -= flux
        sb = sb + op.w * (op.potential + 1.0) * b
        return sphere_area(self.params.d) * complex(np.sum(np.conj(a) * sb))

    def state(self, t: float, u) -> EvolutionState:
        return EvolutionState(
            t=t,
            u=RadialField(self.grid, u, Space.EUCLIDEAN),
            q_now=self.mass(u),
            e_now=self.energy(u),
            grad_norm=math.sqrt(max(self.grad_sq(u), 0.0)),
        )

    def boundary_ratio(self, u) -> float:
        a = np.abs(u)
        return float(a[-1] / np.max(a)) if np.max(a) > 0 else 0.0


def step(state: EvolutionState, dt: float, params: ModelParams, spec: NonlinearitySpec, propagator: Propagator | None = None) -> EvolutionState:
    """One Strang step of length dt; returns a new state with the same history list."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    prop = Propagator(state.u.grid, params, spec) if propagator is None else propagator
    u = prop.step(np.asarray(state.u.values, dtype=complex), dt)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError(f"non-finite field after step at t={state.t + dt}")
    new = prop.state(state.t + dt, u)
    new.history = state.history
    return new


def conserved_quantities(state: EvolutionState, params: ModelParams, spec: NonlinearitySpec):
    prop = Propagator(state.u.grid, params, spec)
    u = np.asarray(state.u.values, dtype=complex)
    return prop.mass(u), prop.energy(u)


def evolve(
    u0,
    grid: RadialGrid,
    params: ModelParams,
    spec: NonlinearitySpec,
    dt: float,
    t_end: float,
    record_every: int = 1,
    boundary_tol: float | None = 1e-8,
    observer=None,
) -> EvolutionState:
    """Evolve to t_end with fixed dt, recording the history every few steps.

    ``observer(u)`` may return an orbital distance stored alongside each record.
    Raises :class:`BoundaryContamination` if ``|u(r_max)| / max |u|`` exceeds
    ``boundary_tol``.
    """
    prop = Propagator(grid, params, spec)
    u = np.asarray(u0.values if isinstance(u0, RadialField) else u0, dtype=complex)
    nsteps = int(round(t_end / dt))
    if nsteps < 1 or abs(nsteps * dt - t_end) > 1e-9 * max(t_end, 1.0):
        raise ValueError("t_end must be a positive multiple of dt")
    state = prop.state(0.0, u)
    state.record(observer(u) if observer else math.nan)
    for k in range(1, nsteps + 1):
        u = prop.step(u, dt)
        if k % record_every == 0 or k == nsteps:
            if not np.all(np.isfinite(u)):
                raise FloatingPointError(f"non-finite field at t={k * dt}")
            st = prop.state(k * dt, u)
            st.history = state.history
            state = st
            state.record(observer(u) if observer else math.nan)
            if boundary_tol is not None and prop.boundary_ratio(u) > boundary_tol:
                raise BoundaryContamination(
                    f"boundary amplitude ratio {prop.boundary_ratio(u):.2e} exceeds {boundary_tol:g} at t={state.t:.4g}"
                )
    return state


def write_trace_csv(state: EvolutionState, path, metadata: dict | None = None) -> None:
    with Path(path).open("w", newline="") as fh:
        for k, v in (metadata or {}).items():
            fh.write(f"# {k}: {v}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "Q", "E", "grad_norm", "orbital_distance"])
        for row in state.history:
            writer.writerow([repr(float(row.t)), repr(row.q), repr(row.e), repr(row.grad_norm), repr(row.orbital_distance)])


# ---------------------------------------------------------------------------
# orbital stability


@dataclass
class OrbitalMetric:
    epsilon: float
    delta_in: float
    sup_distance: float
    times: np.ndarray
    distances: np.ndarray
    gamma_opt: np.ndarray
    state: EvolutionState | None = None

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta_in": self.delta_in,
            "sup_distance": self.sup_distance,
            "samples": len(self.times),
        }


def phase_distance(prop: Propagator, u, profile) -> tuple:
    """min over gamma of ||u - e^{i gamma} R||_{H^1}, with the minimizing gamma in [0, 2 pi)."""
    ip = prop.h1_inner(profile, u)
    gamma = float(np.angle(ip)) % (2.0 * math.pi) if abs(ip) > 0 else 0.0
    diff = u - np.exp(1j * gamma) * profile
    return math.sqrt(max(prop.h1_inner(diff, diff).real, 0.0)), gamma


def smooth_bump(grid: RadialGrid, width: float = 1.0) -> np.ndarray:
    return np.exp(-((grid.nodes / width) ** 2)) * (1.0 - 0.5 * grid.nodes**2 / width**2)


def orbital_experiment(
    sol: GroundStateSolution,
    epsilon: float,
    t_end: float = 10.0,
    dt: float = 0.01,
    record_every: int = 10,
    bump: np.ndarray | None = None,
    boundary_tol: float | None = 1e-8,
) -> OrbitalMetric:
    """Perturb the soliton by epsilon times a unit H^1 bump and track the phase-minimized distance."""
    params = sol.params.with_lambda(sol.lam_out)
    if sol.spec.is_homogeneous and sol.spec.p >= params.p_crit_mass:
        raise ValueError(f"orbital experiment needs p < 4/d = {params.p_crit_mass}")
    prop = Propagator(sol.grid, params, sol.spec)
    profile = np.asarray(sol.u.values, dtype=complex)
    b = smooth_bump(sol.grid) if bump is None else np.asarray(bump, dtype=float)
    b = b / math.sqrt(prop.h1_inner(b, b).real)
    u0 = profile + epsilon * b
    gammas = []

    def observer(u):
        dist, g = phase_distance(prop, u, profile)
        gammas.append(g)
        return dist

    state = evolve(u0, sol.grid, params, sol.spec, dt, t_end, record_every, boundary_tol, observer)
    times = np.array([h.t for h in state.history])
    dists = np.array([h.orbital_distance for h in state.history])
    return OrbitalMetric(epsilon, float(dists[0]), float(np.max(dists)), times, dists, np.array(gammas), state)


# ---------------------------------------------------------------------------
# blow-up indicator


@dataclass
class BlowupCriterion:
    c_d: float
    energy0: float
    mass0: float
    observed_growth: float
    blowup_time: float | None
    t_reached: float
    variance0: float
    halted: str | None = None
    state: EvolutionState | None = None

    def __post_init__(self):
        if not self.c_d > 0:
            raise ValueError("c_d must be positive")

    @property
    def triggered_prediction(self) -> bool:
        return self.energy0 < self.c_d * self.mass0

    @property
    def numerical_blowup(self) -> bool:
        return self.blowup_time is not None

    def to_dict(self) -> dict:
        return {
            "c_d": self.c_d,
            "energy0": self.energy0,
            "mass0": self.mass0,
            "triggered_prediction": self.triggered_prediction,
            "observed_growth": self.observed_growth,
            "numerical_blowup": self.numerical_blowup,
            "blowup_time": self.blowup_time,
            "t_reached": self.t_reached,
            "variance0": self.variance0,
            "halted": self.halted,
        }


def default_c_d(d: int) -> float:
    """Threshold constant from inf ((d-1) coth r)^2 / 16 = (d-1)^2 / 16."""
    return (d - 1) ** 2 / 16.0


def radial_variance(prop: Propagator, u) -> float:
    """int |U|^2 dist(0, x)^2 over hyperbolic space."""
    r = prop.grid.nodes
    return sphere_area(prop.params.d) * float(np.sum(prop.op.w * np.abs(u) ** 2 * r**2))


def blowup_probe(
    initial,
    params: ModelParams,
    spec: NonlinearitySpec,
    t_max: float,
    dt0: float = 1e-3,
    growth_threshold: float = 1e3,
    c_d: float | None = None,
    boundary_tol: float | None = 1e-6,
    max_steps: int = 200_000,
) -> BlowupCriterion:
    """Evolve with dt halved every time the gradient norm grows by sqrt(2).

    Stops at ``growth_threshold`` times the initial gradient norm (numerical
    blow-up), at ``t_max``, or when the outer boundary is contaminated.  The
    outcome is data; no mathematical blow-up is claimed.
    """
    grid = initial.grid
    prop = Propagator(grid, params, spec)
    u = np.asarray(initial.values, dtype=complex)
    c_d = default_c_d(params.d) if c_d is None else c_d
    state = prop.state(0.0, u)
    state.record()
    g0 = state.grad_norm
    mass0, energy0 = state.q_now, state.e_now
    variance0 = radial_variance(prop, u)
    dt = dt0
    level = g0
    t = 0.0
    ratio = 1.0
    blowup_time = None
    halted = None
    steps = 0
    while t < t_max - 1e-12:
        h = min(dt, t_max - t)
        u = prop.step(u, h)
        t += h
        steps += 1
        if not np.all(np.isfinite(u)):
            halted = "non-finite field"
            break
        gn = math.sqrt(max(prop.grad_sq(u), 0.0))
        ratio = max(ratio, gn / g0)
        while gn > math.sqrt(2.0) * level:
            dt *= 0.5
            level *= math.sqrt(2.0)
        if steps % 50 == 0 or gn > growth_threshold * g0:
            st = prop.state(t, u)
            st.history = state.history
            state = st
            state.record()
        if gn > growth_threshold * g0:
            blowup_time = t
            break
        if boundary_tol is not None and prop.boundary_ratio(u) > boundary_tol:
            halted = "boundary contamination"
            break
        if steps >= max_steps:
            halted = "step budget exhausted"
            break
    if state.t < t:
        st = prop.state(t, u)
        st.history = state.history
        state = st
        state.record()
    return BlowupCriterion(c_d, energy0, mass0, ratio, blowup_time, t, variance0, halted, state)


def gaussian_data(grid: RadialGrid, amplitude: float, width: float = 1.0) -> RadialField:
    return RadialField(grid, (amplitude * np.exp(-((grid.nodes / width) ** 2))).astype(complex), Space.EUCLIDEAN)
