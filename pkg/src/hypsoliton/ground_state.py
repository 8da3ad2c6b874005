"""Radial ground states of the conjugated stationary problem.

The profile ``u`` solves

    -u'' - (d-1)/r u' + (mu_d + V_d(r)) u - ftilde(r, u) = 0,   u'(0) = 0,

and ``R = phi u`` is the hyperbolic ground state.  Two independent routes are
provided:

* :func:`gradient_flow_minimize` -- semi-implicit normalized gradient flow on the
  finite-volume discretization, either at fixed mass (minimizing the energy) or at
  fixed ``lambda`` (minimizing the action on the Nehari manifold).
* :func:`shooting_solve` -- bisection on ``u(0)`` for the radial ODE integrated by
  classical RK4, used as an oracle for the discrete solver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded, solveh_banded
from scipy.optimize import brentq

from .geometry import (
    ModelError,
    ModelParams,
    RadialField,
    RadialGrid,
    Space,
    effective_potential,
    eval_k_tilde,
    eval_phi,
    eval_potential,
    sphere_area,
)
from .nonlinearity import (
    NonlinearitySpec,
    coefficient,
    eval_df_conjugated,
    eval_F_conjugated,
    eval_f_conjugated,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A solve stopped without meeting its convergence criterion."""

    def __init__(self, message: str, last_residual: float = math.nan, iterations: int = 0):
        super().__init__(message)
        self.last_residual = last_residual
        self.iterations = iterations


class VanishingError(SolverError):
    """The iteration collapsed to the zero field."""


class BracketError(SolverError):
    """Shooting could not bracket the ground-state amplitude."""


# ---------------------------------------------------------------------------
# discrete operator


@dataclass(frozen=True)
class DiscreteRadialOperator:
    """``A + diag(potential)`` with ``A = -d^2/dr^2 - (d-1)/r d/dr``.

    Stored as ``W^{-1} S`` with ``W = diag(w)`` the radial cell volumes and ``S``
    symmetric tridiagonal, so the operator is self-adjoint for ``<u, v>_w``.
    The flux through ``r = 0`` vanishes (Neumann) and a reflected ghost value puts
    a homogeneous Dirichlet condition at ``r_max``.
    """

    grid: RadialGrid
    d: int
    w: np.ndarray
    s_diag: np.ndarray
    s_off: np.ndarray
    potential: np.ndarray

    def apply_kinetic(self, u):
        # flux form: differences first, so round-off does not scale like 1/h^2
        flux = self.s_off * np.diff(u)
        out = self._row_sums * u
        out[:-1] += flux
        out[1:] -= flux
        return out / self.w

    @property
    def _row_sums(self):
        row_sums = self.s_diag.copy()
        row_sums[:-1] += self.s_off
        row_sums[1:] += self.s_off
        return row_sums

    def apply(self, u, extra=None):
        pot = self.potential if extra is None else self.potential + extra
        return self.apply_kinetic(u) + pot * u

    def inner(self, u, v) -> float:
        return float(np.sum(self.w * np.conj(u) * v).real)

    def quadratic_form(self, u) -> float:
        """<u, (A + V) u>_w, summed over face differences to avoid cancellation."""
        jumps = np.abs(np.diff(u)) ** 2
        return float(
            -np.sum(self.s_off * jumps) + np.sum((self._row_sums + self.w * self.potential) * np.abs(u) ** 2)
        )

    def banded_symmetric(self, alpha: float, beta: float, extra=None) -> np.ndarray:
        """Upper banded storage of ``alpha W + beta (S + W V)``."""
        pot = self.potential if extra is None else self.potential + extra
        ab = np.zeros((2, self.grid.n), dtype=np.result_type(alpha, beta, float))
        ab[0, 1:] = beta * self.s_off
        ab[1] = alpha * self.w + beta * (self.s_diag + self.w * pot)
        return ab

    def banded_general(self, alpha, beta, extra=None) -> np.ndarray:
        pot = self.potential if extra is None else self.potential + extra
        ab = np.zeros((3, self.grid.n), dtype=np.result_type(alpha, beta, float))
        ab[0, 1:] = beta * self.s_off
        ab[1] = alpha * self.w + beta * (self.s_diag + self.w * pot)
        ab[2, :-1] = beta * self.s_off
        return ab

    def symmetrized(self, extra=None):
        """Diagonal and off-diagonal of ``W^{1/2} (A + V) W^{-1/2}``."""
        pot = self.potential if extra is None else self.potential + extra
        sw = np.sqrt(self.w)
        diag = self.s_diag / self.w + pot
        off = self.s_off / (sw[:-1] * sw[1:])
        return diag, off

    def dense(self, extra=None) -> np.ndarray:
        n = self.grid.n
        pot = self.potential if extra is None else self.potential + extra
        m = np.diag(self.s_diag / self.w + pot)
        idx = np.arange(n - 1)
        m[idx, idx + 1] = self.s_off / self.w[:-1]
        m[idx + 1, idx] = self.s_off / self.w[1:]
        return m

    def symmetry_defect(self) -> float:
        """Relative size of ``W A - (W A)^T`` (zero by construction up to round-off)."""
        m = self.w[:, None] * self.dense()
        return float(np.max(np.abs(m - m.T)) / np.max(np.abs(m)))

    def lowest_eigenpairs(self, k: int = 1, extra=None):
        """Lowest k eigenvalues and w-normalized eigenvectors."""
        diag, off = self.symmetrized(extra)
        vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
        vecs = vecs / np.sqrt(self.w)[:, None]
        return vals, vecs


def assemble_operator(grid: RadialGrid, params: ModelParams, potential: str = "effective") -> DiscreteRadialOperator:
    """Finite-volume radial operator with potential ``mu_d + V_d`` (or ``V_d + ((d-1)/2)^2``)."""
    d = params.d
    h = grid.h
    faces = grid.faces
    flux = faces ** (d - 1) / h
    flux[0] = 0.0
    s_diag = flux[:-1] + flux[1:]
    s_diag[-1] += flux[-1]  # reflected ghost at r_max
    s_off = -flux[1:-1]
    r = grid.nodes
    if potential == "effective":
        pot = np.asarray(effective_potential(r, params), dtype=float)
    elif potential == "shifted":
        pot = np.asarray(eval_potential(r, params), dtype=float) + params.spectral_shift
    elif potential == "none":
        pot = np.zeros(grid.n)
    else:
        raise ValueError(f"unknown potential option {potential!r}")
    return DiscreteRadialOperator(grid, d, grid.euclidean_cell_volumes(d), s_diag, s_off, pot)


# ---------------------------------------------------------------------------
# functionals on the discrete grid


def mass(u, op: DiscreteRadialOperator) -> float:
    return sphere_area(op.d) * float(np.sum(op.w * np.abs(u) ** 2))


def energy(u, op_shifted: DiscreteRadialOperator, spec: NonlinearitySpec) -> float:
    """Energy functional 1/2 int |u'|^2 + 1/2 (V_d + (d-1)^2/4) |u|^2 - F(r, u).

    ``op_shifted`` must carry the lambda-free potential ``V_d + ((d-1)/2)^2``.
    The conserved hyperbolic energy ``int |grad R|^2 - 2 F_H`` is twice this.
    """
    d = op_shifted.d
    F = eval_F_conjugated(spec, op_shifted.grid.nodes, np.abs(u), d)
    return sphere_area(d) * (0.5 * op_shifted.quadratic_form(u) - float(np.sum(op_shifted.w * F)))


def multiplier(u, op_shifted: DiscreteRadialOperator, spec: NonlinearitySpec) -> float:
    """Lagrange multiplier lambda making u closest to stationary: (<u,N(u)> - <u,Lu>) / <u,u>."""
    N = eval_f_conjugated(spec, op_shifted.grid.nodes, np.abs(u), op_shifted.d) * np.sign(u)
    return (op_shifted.inner(u, N) - op_shifted.quadratic_form(u)) / op_shifted.inner(u, u)


def stationary_defect(u, lam: float, op_shifted: DiscreteRadialOperator, spec: NonlinearitySpec):
    N = eval_f_conjugated(spec, op_shifted.grid.nodes, np.abs(u), op_shifted.d) * np.sign(u)
    return op_shifted.apply(u) + lam * u - N


def defect_norm(defect, op: DiscreteRadialOperator) -> float:
    return math.sqrt(sphere_area(op.d) * float(np.sum(op.w * np.abs(defect) ** 2)))


# ---------------------------------------------------------------------------
# solution container


@dataclass
class GroundStateSolution:
    params: ModelParams
    spec: NonlinearitySpec
    u: RadialField
    mass: float
    energy: float
    residual: float
    lam_out: float
    iterations: int
    converged: bool
    mode: str
    decay_rate: float = math.nan
    energy_history: list = field(default_factory=list, repr=False)
    mass_history: list = field(default_factory=list, repr=False)

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid

    @property
    def r(self) -> np.ndarray:
        return self.u.grid.nodes

    def hyperbolic_profile(self) -> RadialField:
        return RadialField(self.grid, self.u.values * eval_phi(self.r, self.params.d), Space.HYPERBOLIC)

    @property
    def hamiltonian_energy(self) -> float:
        """Conserved energy int |grad R|^2 - 2 F_H(R) over hyperbolic space."""
        return 2.0 * self.energy

    def summary(self) -> dict:
        return {
            "d": self.params.d,
            "p": self.params.p,
            "lambda": self.params.lam,
            "mu": self.params.mu,
            "mode": self.mode,
            "nonlinearity": self.spec.to_dict(),
            "r_max": self.grid.r_max,
            "n": self.grid.n,
            "mass": self.mass,
            "energy": self.energy,
            "hamiltonian_energy": self.hamiltonian_energy,
            "lambda_out": self.lam_out,
            "residual": self.residual,
            "decay_rate": self.decay_rate,
            "decay_rate_expected": math.sqrt(self.lam_out + self.params.spectral_shift)
            if self.lam_out + self.params.spectral_shift > 0
            else math.nan,
            "iterations": self.iterations,
            "converged": self.converged,
            "amplitude": float(self.u.values[0]),
        }


# ---------------------------------------------------------------------------
# normalized gradient flow


def _initial_guess(grid: RadialGrid, init) -> np.ndarray:
    if init is None:
        return np.exp(-0.5 * grid.nodes**2)
    vals = init.values if isinstance(init, RadialField) else np.asarray(init, dtype=float)
    if vals.shape != (grid.n,):
        raise ValueError("initial guess lives on a different grid")
    return np.abs(np.real(vals)).astype(float)


def _nehari_scale(u, op: DiscreteRadialOperator, spec: NonlinearitySpec) -> float:
    """Positive s with <su, L su> = <su, N(su)>."""
    r, d = op.grid.nodes, op.d
    quad = op.quadratic_form(u)
    if spec.is_homogeneous:
        nl = op.inner(u, eval_f_conjugated(spec, r, u, d))
        if not nl > 0:
            raise VanishingError("nonlinear term vanished; no Nehari rescaling exists")
        return (quad / nl) ** (1.0 / spec.p)

    def g(s):
        return s * quad - op.inner(u, eval_f_conjugated(spec, r, s * u, d))

    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise VanishingError("no Nehari scale below 1e12")
    lo = hi / 2.0
    while g(lo) < 0:
        lo /= 2.0
        if lo < 1e-12:
            raise VanishingError("no Nehari scale above 1e-12")
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def gradient_flow_minimize(
    params: ModelParams,
    spec: NonlinearitySpec | None = None,
    grid: RadialGrid | None = None,
    mass_target: float | None = None,
    init=None,
    tol: float = 5e-9,
    rtol: float = 1e-10,
    max_iters: int = 5000,
    dt0: float | None = None,
    dt_max: float = 1e4,
) -> GroundStateSolution:
    """Normalized gradient flow for the radial ground state.

    With ``mass_target`` the energy is minimized at fixed mass (the solution's
    ``lam_out`` is the Lagrange multiplier).  Without it the action
    ``E + lambda Q / 2`` is minimized on the Nehari manifold at the given lambda.

    Iteration stops once the weighted residual is below ``max(tol, rtol ||u||)``.
    Each step solves ``(I + dt L) u* = u + dt N(u)`` (fixed lambda) or
    ``(I + dt (L - ftilde(u)/u)) u* = u`` (fixed mass) with the tridiagonal
    linear part implicit, then renormalizes.  Steps that raise the functional are
    rejected and ``dt`` is halved; accepted steps double it up to ``dt_max``.
    """
    spec = NonlinearitySpec.power(params.p) if spec is None else spec
    spec.validate(params.d)
    grid = RadialGrid(params_default_rmax(params), 4000) if grid is None else grid
    fixed_mass = mass_target is not None
    if fixed_mass:
        if not mass_target > 0:
            raise ModelError("mass_target must be positive")
        if spec.is_homogeneous and spec.p >= params.p_crit_mass:
            raise ModelError(
                f"fixed-mass minimization is unbounded below for p={spec.p} >= 4/d={params.p_crit_mass}; "
                "use the fixed-lambda mode"
            )
    if spec.coupling <= 0:
        raise ModelError("ground states need a focusing nonlinearity (coupling > 0)")

    op_shift = assemble_operator(grid, params, "shifted")
    op_eff = assemble_operator(grid, params, "effective")
    r, d = grid.nodes, params.d
    area = sphere_area(d)

    u = _initial_guess(grid, init)
    if not np.any(u > 0):
        raise ValueError("initial guess must be positive somewhere")

    if fixed_mass:
        u *= math.sqrt(mass_target / mass(u, op_shift))

        def functional(v):
            return energy(v, op_shift, spec)

    else:
        # the action only decreases along the flow once u sits on the Nehari manifold
        u *= _nehari_scale(u, op_eff, spec)

        def functional(v):
            return energy(v, op_shift, spec) + 0.5 * params.lam * mass(v, op_shift)

    def current_residual(v):
        lam_v = multiplier(v, op_shift, spec)
        return defect_norm(stationary_defect(v, lam_v, op_shift, spec), op_shift), lam_v

    dt = 0.1 / float(np.max(np.abs(op_eff.potential))) if dt0 is None else dt0
    value = functional(u)
    res, lam_v = current_residual(u)
    history = [value]
    masses = [mass(u, op_shift)]
    it = 0
    u_scale = float(np.max(u))
    # the floor of the discrete residual grows with the amplitude of u
    def target():
        return max(tol, rtol * math.sqrt(masses[-1]))

    while res > target():
        if it >= max_iters:
            raise SolverError(
                f"gradient flow did not reach residual {target():.3g} in {max_iters} iterations (last {res:.3e})",
                res,
                it,
            )
        it += 1
        while True:
            if fixed_mass:
                # projected flow u_t = -(L - g(u) + lambda(u)) u; the multiplier shift turns
                # long steps into shifted inverse iteration
                g = coefficient(spec, r, u, d) - lam_v
                ab = op_shift.banded_general(1.0, dt, extra=-g)
                # increment form keeps the solve's round-off proportional to the step
                cand = u - solve_banded((1, 1), ab, dt * op_shift.w * op_shift.apply(u, extra=-g))
                if np.sum(cand) < 0:
                    cand = -cand
                ok = bool(np.all(cand > 0))
                if ok:
                    cand *= math.sqrt(mass_target / mass(cand, op_shift))
            else:
                N = eval_f_conjugated(spec, r, u, d)
                ab = op_eff.banded_symmetric(1.0, dt)
                cand = u + solveh_banded(ab, dt * op_eff.w * (N - op_eff.apply(u)))
                ok = bool(np.all(cand > 0))
                if ok:
                    cand *= _nehari_scale(cand, op_eff, spec)
            if ok:
                new_value = functional(cand)
                if new_value <= value + 1e-12 * abs(value):
                    break
            dt *= 0.5
            if dt < 1e-14:
                raise SolverError("time step underflow in gradient flow", res, it)
        u = cand
        value = new_value
        history.append(value)
        masses.append(mass(u, op_shift))
        dt = min(2.0 * dt, dt_max)
        if float(np.max(u)) < 1e-10 * u_scale:
            raise VanishingError("gradient flow collapsed to the zero field", res, it)
        res, lam_v = current_residual(u)

    sol = GroundStateSolution(
        params=params,
        spec=spec,
        u=RadialField(grid, u, Space.EUCLIDEAN),
        mass=mass(u, op_shift),
        energy=energy(u, op_shift, spec),
        residual=res,
        lam_out=lam_v,
        iterations=it,
        converged=True,
        mode="fixed_mass" if fixed_mass else "fixed_lambda",
        energy_history=history,
        mass_history=masses,
    )
    try:
        sol.decay_rate = decay_diagnostics(sol).rate
    except ValueError as exc:
        log.warning("decay fit unavailable: %s", exc)
    return sol


def params_default_rmax(params: ModelParams) -> float:
    from .geometry import default_r_max

    return default_r_max(params.mu)


def residual(sol: GroundStateSolution) -> float:
    """Weighted L^2 norm of the discrete stationary defect at ``sol.lam_out``."""
    op = assemble_operator(sol.grid, sol.params, "shifted")
    return defect_norm(stationary_defect(sol.u.values, sol.lam_out, op, sol.spec), op)


def init_sensitivity(params, spec, grid, widths=(1.0, 2.5), threshold: float = 1e-4, **kw) -> dict:
    """Solve from Gaussian initial guesses of several widths and compare the profiles."""
    profiles = []
    for width in widths:
        init = np.exp(-0.5 * (grid.nodes / width) ** 2)
        profiles.append(gradient_flow_minimize(params, spec, grid, init=init, **kw).u.values)
    ref = profiles[0]
    diff = max(float(np.max(np.abs(p - ref))) / float(np.max(np.abs(ref))) for p in profiles[1:])
    return {"widths": list(widths), "max_relative_difference": diff, "flagged": diff > threshold}


# ---------------------------------------------------------------------------
# shooting oracle


@numba.njit(cache=True)
def _rk4_shoot(a, r0, h, u0, v0, c2, kt, p, dm1, nsteps, track):
    """Integrate u'' = -(d-1)/r u' + c2 u - kt u^(p+1) from r0 in steps of h.

    ``c2`` and ``kt`` are sampled on the half-step lattice r0 + k h / 2.
    Returns (status, last index, u, v): status +1 crossed zero (amplitude too
    large), -1 turned upward (too small), 0 reached the end.
    """
    u_out = np.zeros(nsteps + 1)
    v_out = np.zeros(nsteps + 1)
    u = u0
    v = v0
    u_out[0] = u
    v_out[0] = v
    for k in range(nsteps):
        r = r0 + k * h
        i = 2 * k
        # stage 1
        k1u = v
        k1v = -dm1 / r * v + c2[i] * u - kt[i] * abs(u) ** p * u
        rm = r + 0.5 * h
        um = u + 0.5 * h * k1u
        vm = v + 0.5 * h * k1v
        k2u = vm
        k2v = -dm1 / rm * vm + c2[i + 1] * um - kt[i + 1] * abs(um) ** p * um
        um = u + 0.5 * h * k2u
        vm = v + 0.5 * h * k2v
        k3u = vm
        k3v = -dm1 / rm * vm + c2[i + 1] * um - kt[i + 1] * abs(um) ** p * um
        re = r + h
        ue = u + h * k3u
        ve = v + h * k3v
        k4u = ve
        k4v = -dm1 / re * ve + c2[i + 2] * ue - kt[i + 2] * abs(ue) ** p * ue
        u = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        v = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        u_out[k + 1] = u
        v_out[k + 1] = v
        if track:
            if u < 0.0:
                return 1, k + 1, u_out, v_out
            if v > 0.0:
                return -1, k + 1, u_out, v_out
    return 0, nsteps, u_out, v_out


@dataclass
class ShootingResult:
    field: RadialField
    amplitude: float
    bracket: tuple
    reliable_radius: float
    bisections: int


def _series_start(a, r0, params: ModelParams, p: float):
    """Taylor data u(r0), u'(r0) of the regular solution with u(0) = a."""
    d = params.d
    c0 = params.mu - potential_strength_over_three(d)
    # c2(r) = c0 + c2_2 r^2 + ..., Ktilde(r) = 1 - (d-1) p r^2 / 12 + ...
    c2_2 = (d - 1) * (d - 3) / 60.0
    b = (c0 * a - a ** (p + 1)) / (2 * d)
    c = (c2_2 * a + c0 * b - (p + 1) * a**p * b + (d - 1) * p * a ** (p + 1) / 12.0) / (4.0 * (d + 2))
    return a + b * r0**2 + c * r0**4, 2 * b * r0 + 4 * c * r0**3


def potential_strength_over_three(d: int) -> float:
    return (d - 1) * (d - 3) / 12.0


def shooting_solve(
    params: ModelParams,
    spec: NonlinearitySpec | None = None,
    grid: RadialGrid | None = None,
    bracket: tuple | None = None,
    separation_tol: float = 1e-6,
    max_bisections: int = 200,
) -> ShootingResult:
    """Ground state by bisection on u(0) for the radial ODE (power nonlinearity only).

    Trajectories that cross zero had too large an amplitude; trajectories that turn
    upward had too small an amplitude.  Once the bracket has collapsed to adjacent
    floating-point numbers the two bounding trajectories agree up to the radius
    where the growing mode takes over; past that radius the profile is continued by
    the far-field solution ``r^{(1-d)/2} exp(-sqrt(mu) r)`` of the linearized
    equation.
    """
    spec = NonlinearitySpec.power(params.p) if spec is None else spec
    if spec.kind != "power" or spec.coupling != 1.0:
        raise ModelError("the shooting oracle handles the focusing power nonlinearity only")
    grid = RadialGrid(params_default_rmax(params), 4000) if grid is None else grid
    h = grid.h
    r0 = 0.5 * h
    nsteps = grid.n - 1
    half = r0 + 0.5 * h * np.arange(2 * nsteps + 1)
    c2 = np.asarray(effective_potential(half, params), dtype=float)
    kt = np.asarray(eval_k_tilde(half, params, spec.p), dtype=float)
    p = float(spec.p)
    dm1 = float(params.d - 1)

    def run(a, track=True):
        u0, v0 = _series_start(a, r0, params, p)
        return _rk4_shoot(a, r0, h, u0, v0, c2, kt, p, dm1, nsteps, track)

    if bracket is None:
        # the amplitude scale is set by a^p ~ mu near the origin
        hi = max(params.mu, 1e-3) ** (1.0 / p)
        while run(hi)[0] != 1:
            hi *= 2.0
            if hi > 1e8:
                raise BracketError("no overshooting amplitude below 1e8; widen the bracket")
        lo = hi / 2.0
        while run(lo)[0] == 1:
            lo /= 2.0
            if lo < 1e-12:
                raise BracketError("no undershooting amplitude above 1e-12; widen the bracket")
    else:
        lo, hi = map(float, bracket)
        if run(lo)[0] == 1 or run(hi)[0] != 1:
            raise BracketError(f"bracket [{lo}, {hi}] does not enclose the ground-state amplitude; widen it")

    count = 0
    while count < max_bisections:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        status = run(mid)[0]
        if status == 1:
            hi = mid
        elif status == -1:
            lo = mid
        else:
            lo = hi = mid
            break
        count += 1

    _, _, u_lo, _ = run(lo, track=False)
    _, _, u_hi, _ = run(hi, track=False)
    u_mid = 0.5 * (u_lo + u_hi)
    spread = np.abs(u_hi - u_lo)
    bad = (spread > separation_tol * np.abs(u_mid)) | (u_mid <= 0) | ~np.isfinite(u_mid)
    cut = int(np.argmax(bad)) if np.any(bad) else grid.n
    cut = max(cut - 1, 1)
    u = u_mid.copy()
    r = grid.nodes
    if cut < grid.n:
        kappa = math.sqrt(params.mu)
        rc = r[cut]
        tail = r[cut:]
        u[cut:] = u_mid[cut] * (rc / tail) ** (0.5 * (params.d - 1)) * np.exp(-kappa * (tail - rc))
    return ShootingResult(
        field=RadialField(grid, u, Space.EUCLIDEAN),
        amplitude=0.5 * (lo + hi),
        bracket=(lo, hi),
        reliable_radius=float(r[cut]) if cut < grid.n else grid.r_max,
        bisections=count,
    )


def ode_residual(u, grid: RadialGrid, params: ModelParams, spec: NonlinearitySpec | None = None, stop=None):
    """Defect of the radial ODE measured with fourth-order central differences.

    Even reflection supplies the ghost values at the origin; the last two nodes
    (and everything past ``stop``) are excluded.  Returns the weighted L^2 norm.
    """
    spec = NonlinearitySpec.power(params.p) if spec is None else spec
    u = np.asarray(u, dtype=float)
    h = grid.h
    r = grid.nodes
    ext = np.concatenate((u[1::-1], u))
    i = np.arange(2, grid.n)
    um2, um1, u0, up1, up2 = ext[i - 2], ext[i - 1], ext[i], ext[i + 1], ext[np.minimum(i + 2, grid.n + 1)]
    sl = slice(0, grid.n - 2)
    d2 = (-um2 + 16 * um1 - 30 * u0 + 16 * up1 - up2) / (12 * h * h)
    d1 = (um2 - 8 * um1 + 8 * up1 - up2) / (12 * h)
    rr = r[sl]
    c2 = np.asarray(effective_potential(rr, params), dtype=float)
    f = eval_f_conjugated(spec, rr, np.abs(u0), params.d)
    defect = -d2 - (params.d - 1) / rr * d1 + c2 * u0 - f
    w = sphere_area(params.d) * grid.euclidean_cell_volumes(params.d)[sl]
    if stop is not None:
        keep = rr <= stop
        defect, w = defect[keep], w[keep]
    return math.sqrt(float(np.sum(w * defect**2)))


# ---------------------------------------------------------------------------
# decay


@dataclass(frozen=True)
class DecayFit:
    rate: float
    window: tuple
    c2_fit: float
    expected: float


def decay_diagnostics(sol_or_field, params: ModelParams | None = None, window=None, lam=None) -> DecayFit:
    """Exponential decay rate of the conjugated profile's tail.

    The far-field equation has the decaying solution ``r^{(1-d)/2} exp(-sqrt(mu) r)``,
    so the slope of ``log(u r^{(d-1)/2})`` is fitted by least squares on
    ``window * r_max``.  By default the window is [0.5, 0.8] of the radius up to
    which the tail stays above round-off.  The hyperbolic profile ``R = phi u`` decays faster, at
    ``sqrt(mu) + (d-1)/2``.
    """
    if isinstance(sol_or_field, GroundStateSolution):
        field_, params = sol_or_field.u, sol_or_field.params
        lam = sol_or_field.lam_out if lam is None else lam
    else:
        field_ = sol_or_field
        lam = params.lam if lam is None else lam
    grid = field_.grid
    r = grid.nodes
    u = np.abs(np.asarray(field_.values, dtype=float))
    floor = 1e3 * np.finfo(float).eps * float(np.max(u))
    if window is None:
        # fractions of the radius where the tail is still above round-off
        above = np.nonzero(u > floor)[0]
        reach = min(grid.r_max, float(r[above[-1]])) if above.size else grid.r_max
        lo, hi = 0.5 * reach, 0.8 * reach
    else:
        lo, hi = window[0] * grid.r_max, window[1] * grid.r_max
    mask = (r >= lo) & (r <= hi) & (u > floor)
    if np.count_nonzero(mask) < 8:
        raise ValueError("tail below round-off inside the fit window; shrink the window")
    y = np.log(u[mask]) + 0.5 * (params.d - 1) * np.log(r[mask])
    slope, _ = np.polyfit(r[mask], y, 1)
    rate = -float(slope)
    mu = lam + params.spectral_shift
    return DecayFit(rate, (float(lo), float(hi)), rate**2, math.sqrt(mu) if mu > 0 else math.nan)
