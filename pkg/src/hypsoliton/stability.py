"""Stability of the soliton family: lambda sweeps and the linearized operators.

The conserved quantities along the family are ``Q(lambda) = int R^2`` and the
Hamiltonian energy ``E(lambda) = int |grad R|^2 - 2 F_H(R)``, both over hyperbolic
space.  With this normalization ``dE/dlambda = -lambda dQ/dlambda`` and
``delta = E + lambda Q`` satisfies ``delta' = Q``; ``delta'' > 0`` is the
convexity criterion for orbital stability.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import eigvals
from scipy.spatial import cKDTree

from .geometry import ModelParams, RadialGrid
from .ground_state import (
    GroundStateSolution,
    SolverError,
    assemble_operator,
    gradient_flow_minimize,
)
from .nonlinearity import NonlinearitySpec, coefficient, eval_df_conjugated

SCHEMA_VERSION = 1


class Verdict(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    INCONCLUSIVE = "inconclusive"


# ---------------------------------------------------------------------------
# finite differences


def fd_weights(x0: float, xs, m: int) -> np.ndarray:
    """Weights of the m-th derivative at x0 from samples at xs (Fornberg's recursion)."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def differentiate(x, y, order: int, width: int = 5) -> np.ndarray:
    """Derivative of sampled y(x) with a sliding stencil, centred where possible."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    width = min(width, n)
    if n <= order:
        return np.full(n, np.nan)
    out = np.empty(n)
    half = width // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        idx = slice(lo, lo + width)
        out[i] = fd_weights(x[i], x[idx], order) @ y[idx]
    return out


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class CurvePoint:
    lam: float
    mass: float
    energy: float
    converged: bool = True
    residual: float = math.nan

    @property
    def delta(self) -> float:
        return self.energy + self.lam * self.mass


@dataclass
class StabilityCurve:
    d: int
    p: float
    spec: NonlinearitySpec
    points: list
    delta1: np.ndarray = field(default=None)
    second_derivative: np.ndarray = field(default=None)
    mass_derivative: np.ndarray = field(default=None)
    energy_derivative: np.ndarray = field(default=None)
    vk_defect: np.ndarray = field(default=None)
    grid: tuple = (math.nan, 0)

    def __post_init__(self):
        lams = [pt.lam for pt in self.points]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("sweep lambdas must be strictly increasing")
        if self.second_derivative is None:
            self._attach_derivatives()

    @property
    def lam(self) -> np.ndarray:
        return np.array([pt.lam for pt in self.points])

    @property
    def mass(self) -> np.ndarray:
        return np.array([pt.mass for pt in self.points])

    @property
    def energy(self) -> np.ndarray:
        return np.array([pt.energy for pt in self.points])

    @property
    def delta(self) -> np.ndarray:
        return np.array([pt.delta for pt in self.points])

    def segments(self):
        """Maximal runs of consecutive converged points, as index arrays."""
        runs, cur = [], []
        for i, pt in enumerate(self.points):
            if pt.converged:
                cur.append(i)
            elif cur:
                runs.append(np.array(cur))
                cur = []
        if cur:
            runs.append(np.array(cur))
        return runs

    def _attach_derivatives(self):
        n = len(self.points)
        arrays = {k: np.full(n, np.nan) for k in ("d1", "d2", "dq", "de", "vk")}
        for seg in self.segments():
            if len(seg) < 2:
                continue
            lam = self.lam[seg]
            q, e, dl = self.mass[seg], self.energy[seg], self.delta[seg]
            dq = differentiate(lam, q, 1)
            de = differentiate(lam, e, 1)
            arrays["dq"][seg] = dq
            arrays["de"][seg] = de
            arrays["d1"][seg] = differentiate(lam, dl, 1)
            if len(seg) >= 3:
                arrays["d2"][seg] = differentiate(lam, dl, 2)
            scale = np.abs(de) + np.abs(lam * dq)
            with np.errstate(invalid="ignore", divide="ignore"):
                arrays["vk"][seg] = np.abs(de + lam * dq) / scale
        self.delta1 = arrays["d1"]
        self.second_derivative = arrays["d2"]
        self.mass_derivative = arrays["dq"]
        self.energy_derivative = arrays["de"]
        self.vk_defect = arrays["vk"]

    def interior(self) -> np.ndarray:
        """Indices with a converged neighbour on both sides."""
        out = []
        for seg in self.segments():
            out.extend(seg[1:-1])
        return np.array(out, dtype=int)

    @classmethod
    def synthetic(cls, lam, delta_fn, delta_prime_fn, d: int = 2, p: float = 1.0) -> "StabilityCurve":
        """Curve with prescribed delta: Q = delta' and E = delta - lambda Q."""
        pts = []
        for x in np.asarray(lam, dtype=float):
            q = float(delta_prime_fn(x))
            pts.append(CurvePoint(float(x), q, float(delta_fn(x)) - x * q))
        return cls(d, p, NonlinearitySpec.power(p), pts)

    def rows(self, verdicts=None):
        verdicts = classify_stability(self) if verdicts is None else verdicts
        for i, pt in enumerate(self.points):
            yield {
                "lambda": pt.lam,
                "Q": pt.mass if pt.converged else math.nan,
                "E": pt.energy if pt.converged else math.nan,
                "delta": pt.delta if pt.converged else math.nan,
                "delta2": self.second_derivative[i],
                "vk_defect": self.vk_defect[i],
                "verdict": verdicts[i].value,
            }

    def to_csv(self, path, metadata: dict | None = None) -> None:
        path = Path(path)
        cols = ["lambda", "Q", "E", "delta", "delta2", "vk_defect", "verdict"]
        with path.open("w", newline="") as fh:
            meta = {"schema_version": SCHEMA_VERSION, "d": self.d, "p": self.p, "r_max": self.grid[0], "n": self.grid[1]}
            meta.update(metadata or {})
            for k, v in meta.items():
                fh.write(f"# {k}: {v}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for row in self.rows():
                writer.writerow([row[c] if isinstance(row[c], str) else repr(float(row[c])) for c in cols])


def _solve_point(args):
    params, spec, grid, kw = args
    try:
        sol = gradient_flow_minimize(params, spec, grid, **kw)
    except SolverError as exc:
        return CurvePoint(params.lam, math.nan, math.nan, converged=False, residual=exc.last_residual)
    return CurvePoint(params.lam, sol.mass, sol.hamiltonian_energy, True, sol.residual)


def sweep(
    params_template: ModelParams,
    spec: NonlinearitySpec | None,
    lambda_values,
    grid: RadialGrid | None = None,
    workers: int = 1,
    **solver_kw,
) -> StabilityCurve:
    """Solve the ground state at each lambda on a common grid and attach derivatives.

    Points that fail to converge are kept as gaps; derivatives are taken only
    within runs of consecutive converged points.
    """
    spec = NonlinearitySpec.power(params_template.p) if spec is None else spec
    lams = sorted(float(x) for x in lambda_values)
    plist = [params_template.with_lambda(x) for x in lams]
    if grid is None:
        from .geometry import default_r_max

        r_max = default_r_max(min(pp.mu for pp in plist))
        grid = RadialGrid.with_spacing(r_max, 2e-3)
    jobs = [(pp, spec, grid, solver_kw) for pp in plist]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pts = list(pool.map(_solve_point, jobs))
    else:
        pts = [_solve_point(j) for j in jobs]
    return StabilityCurve(params_template.d, params_template.p, spec, pts, grid=(grid.r_max, grid.n))


def classify_stability(curve: StabilityCurve, noise_floor: float | None = None) -> list:
    """Sign of delta'' with a noise threshold.

    Two independent finite-difference estimates of the same quantity are
    available, ``delta''`` and ``Q'``; three times their discrepancy (or a
    round-off floor) is the threshold ``tau`` below which a sign is not trusted.
    """
    n = len(curve.points)
    verdicts = [Verdict.INCONCLUSIVE] * n
    if not any(len(seg) >= 3 for seg in curve.segments()):
        return verdicts
    d2 = curve.second_derivative
    dq = curve.mass_derivative
    for i in range(n):
        if not np.isfinite(d2[i]):
            continue
        if noise_floor is None:
            mag = max(abs(curve.points[i].mass), abs(curve.points[i].energy), 1.0)
            floor = 1e-9 * mag
        else:
            floor = noise_floor
        disc = abs(d2[i] - dq[i]) if np.isfinite(dq[i]) else abs(d2[i])
        tau = 3.0 * max(disc, floor)
        if d2[i] > tau:
            verdicts[i] = Verdict.STABLE
        elif d2[i] < -tau:
            verdicts[i] = Verdict.UNSTABLE
    return verdicts


# ---------------------------------------------------------------------------
# linearization


@dataclass
class SpectralReport:
    lam: float
    mu: float
    grid: tuple
    l_minus_eigs: np.ndarray
    l_minus_vecs: np.ndarray
    l_plus_eigs: np.ndarray
    l_plus_vecs: np.ndarray
    hamiltonian_eigs: np.ndarray | None
    zero_mode_defect: float
    ground_state_residual: float
    symmetry_defects: dict
    flags: list = field(default_factory=list)

    @property
    def essential_spectrum_edge(self) -> float:
        return self.mu

    def reflection_defect(self) -> float:
        """Largest distance from -z to the computed spectrum, relative to max |z|."""
        z = self.hamiltonian_eigs
        if z is None or len(z) == 0:
            return math.nan
        pts = np.column_stack((z.real, z.imag))
        dist, _ = cKDTree(pts).query(-pts)
        return float(np.max(dist) / np.max(np.abs(z)))

    def conjugation_defect(self) -> float:
        z = self.hamiltonian_eigs
        pts = np.column_stack((z.real, z.imag))
        dist, _ = cKDTree(pts).query(np.column_stack((z.real, -z.imag)))
        return float(np.max(dist) / np.max(np.abs(z)))

    def to_dict(self) -> dict:
        def cplx(a):
            return None if a is None else [[float(x.real), float(x.imag)] for x in _sorted(a)]

        return {
            "schema_version": SCHEMA_VERSION,
            "lambda": self.lam,
            "mu": self.mu,
            "r_max": self.grid[0],
            "n": self.grid[1],
            "essential_spectrum_edge": self.mu,
            "l_minus_eigs": [float(x) for x in self.l_minus_eigs],
            "l_plus_eigs": [float(x) for x in self.l_plus_eigs],
            "hamiltonian_eigs": cplx(self.hamiltonian_eigs),
            "zero_mode_defect": self.zero_mode_defect,
            "ground_state_residual": self.ground_state_residual,
            "symmetry_defects": self.symmetry_defects,
            "flags": self.flags,
        }


def _sorted(z):
    z = np.asarray(z)
    return z[np.lexsort((z.imag, z.real))]


def linear_operators(sol: GroundStateSolution):
    """(L_-, L_+) as (operator, extra potential) pairs at the solution's lambda."""
    params = sol.params.with_lambda(sol.lam_out)
    op = assemble_operator(sol.grid, params, "effective")
    u = np.abs(sol.u.values)
    r = sol.grid.nodes
    d = params.d
    return op, -np.asarray(coefficient(sol.spec, r, u, d)), -np.asarray(eval_df_conjugated(sol.spec, r, u, d))


def linearize(sol: GroundStateSolution, k: int = 4, hamiltonian: bool = True, max_dense: int = 4096) -> SpectralReport:
    """Linearized operators around a ground state.

    ``L_- = L - ftilde(u)/u`` and ``L_+ = L - d ftilde/du`` with ``L = A + mu + V_d``;
    for the power case these are ``L - Ktilde u^p`` and ``L - (p+1) Ktilde u^p``.
    The lowest ``k`` eigenpairs of each come from the symmetric tridiagonal
    eigensolver; the full spectrum of ``H = [[0, L_-], [-L_+, 0]]`` from a dense
    general eigensolver when ``2n <= max_dense``.
    """
    op, extra_minus, extra_plus = linear_operators(sol)
    params = sol.params.with_lambda(sol.lam_out)
    flags = []
    u = sol.u.values
    w_area = op.w
    lm_u = op.apply(u, extra=extra_minus)
    zero_defect = math.sqrt(float(np.sum(w_area * lm_u**2)) * _area(params.d))

    lm_vals, lm_vecs = op.lowest_eigenpairs(k, extra_minus)
    lp_vals, lp_vecs = op.lowest_eigenpairs(k, extra_plus)

    sym = {}
    for name, extra in (("l_minus", extra_minus), ("l_plus", extra_plus)):
        m = op.w[:, None] * op.dense(extra) if op.grid.n <= 4096 else None
        sym[name] = float(np.max(np.abs(m - m.T)) / np.max(np.abs(m))) if m is not None else math.nan

    hz = None
    if hamiltonian:
        n = op.grid.n
        if 2 * n > max_dense:
            flags.append(f"hamiltonian spectrum skipped: 2n={2 * n} exceeds max_dense={max_dense}")
        else:
            hz = hamiltonian_spectrum(op, extra_minus, extra_plus)
            if not np.all(np.isfinite(hz)):
                flags.append("eigensolver returned non-finite values")
                hz = hz[np.isfinite(hz)]
    return SpectralReport(
        lam=params.lam,
        mu=params.mu,
        grid=(sol.grid.r_max, sol.grid.n),
        l_minus_eigs=lm_vals,
        l_minus_vecs=lm_vecs,
        l_plus_eigs=lp_vals,
        l_plus_vecs=lp_vecs,
        hamiltonian_eigs=hz,
        zero_mode_defect=zero_defect,
        ground_state_residual=sol.residual,
        symmetry_defects=sym,
        flags=flags,
    )


def _area(d):
    from .geometry import sphere_area

    return sphere_area(d)


def hamiltonian_matrix(op, extra_minus, extra_plus) -> np.ndarray:
    """Block matrix [[0, L_-], [-L_+, 0]] in the symmetrized (W^{1/2}) basis."""
    n = op.grid.n

    def sym_dense(extra):
        diag, off = op.symmetrized(extra)
        m = np.diag(diag)
        i = np.arange(n - 1)
        m[i, i + 1] = off
        m[i + 1, i] = off
        return m

    h = np.zeros((2 * n, 2 * n))
    h[:n, n:] = sym_dense(extra_minus)
    h[n:, :n] = -sym_dense(extra_plus)
    return h


def hamiltonian_spectrum(op, extra_minus, extra_plus) -> np.ndarray:
    return eigvals(hamiltonian_matrix(op, extra_minus, extra_plus), overwrite_a=True, check_finite=False)


# ---------------------------------------------------------------------------
# admissibility


CAVEAT = (
    "numerical evidence at this resolution only; embedded eigenvalues and threshold "
    "resonances are not decidable on a finite grid"
)


def admissibility_report(report: SpectralReport, params: ModelParams | None = None, zero_tol: float = 1e-3, real_tol: float | None = None) -> dict:
    """Three admissibility verdicts on the computed spectrum of H.

    (1) no real eigenvalue with |Re z| > mu;
    (2) the only real eigenvalues in [-mu, mu] lie within ``zero_tol`` of 0;
    (3) resonance at the thresholds: informational, with the spectrum's distance
        to +-i lambda and +-i mu reported for both readings of the condition.
    """
    z = report.hamiltonian_eigs
    mu = report.mu if params is None else params.with_lambda(report.lam).mu
    lam = report.lam
    grid = {"r_max": report.grid[0], "n": report.grid[1], "h": report.grid[0] / report.grid[1]}
    if z is None:
        return {
            "schema_version": SCHEMA_VERSION,
            "available": False,
            "grid": grid,
            "caveat": CAVEAT,
            "flags": list(report.flags),
        }
    scale = float(np.max(np.abs(z)))
    real_tol = 1e-8 * scale if real_tol is None else real_tol
    is_real = np.abs(z.imag) <= real_tol
    real_z = z[is_real].real
    outside = real_z[np.abs(real_z) > mu]
    inside = real_z[np.abs(real_z) <= mu]
    nonzero_inside = inside[np.abs(inside) > zero_tol]
    zero_modes = z[np.abs(z) <= zero_tol]
    gap_modes = z[(~is_real) & (np.abs(z.real) <= real_tol) & (np.abs(z.imag) < mu) & (np.abs(z) > zero_tol)]

    def nearest(target):
        k = int(np.argmin(np.abs(z - target)))
        return {"target": [target.real, target.imag], "nearest": [float(z[k].real), float(z[k].imag)], "distance": float(abs(z[k] - target))}

    bands = {
        "lambda": [nearest(1j * lam), nearest(-1j * lam)],
        "mu": [nearest(1j * mu), nearest(-1j * mu)],
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "available": True,
        "grid": grid,
        "mu": mu,
        "lambda": lam,
        "tolerances": {"zero": zero_tol, "real": real_tol},
        "condition_1_no_embedded": {
            "verdict": bool(outside.size == 0),
            "status": "numerical evidence",
            "real_eigenvalues_beyond_mu": sorted(float(x) for x in outside),
        },
        "condition_2_only_zero_in_gap": {
            "verdict": bool(nonzero_inside.size == 0 and zero_modes.size > 0),
            "status": "numerical evidence",
            "zero_mode_count": int(zero_modes.size),
            "nonzero_real_eigenvalues": sorted(float(x) for x in nonzero_inside),
            "imaginary_gap_eigenvalues": sorted(float(x.imag) for x in gap_modes),
        },
        "condition_3_no_threshold_resonance": {
            "verdict": None,
            "status": "not testable at this resolution",
            "informational": bands,
        },
        "reflection_defect": report.reflection_defect(),
        "caveat": CAVEAT,
        "flags": list(report.flags),
    }


def write_report_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
