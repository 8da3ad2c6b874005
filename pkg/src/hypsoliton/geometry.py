"""Closed-form functions of the conjugation between hyperbolic and Euclidean radial problems.

Hyperbolic space is used in the polar model, metric ``dr^2 + sinh(r)^2 dw^2``.
Multiplication by ``phi(r) = (r / sinh r)^((d-1)/2)`` maps ``L^2(r^{d-1} dr dw)``
isometrically onto ``L^2(sinh^{d-1} r dr dw)`` and turns ``-Laplacian_H`` into the
Euclidean radial Laplacian plus the potential ``V_d`` and the constant ``((d-1)/2)^2``.

The discretization is a cell-centred finite-volume grid: node ``i`` sits at
``(i - 1/2) h`` in the cell ``[(i-1) h, i h]`` with ``h = r_max / n``.  Quadrature
weights are exact Euclidean cell volumes, and hyperbolic weights are obtained from
them through ``phi^{-2}`` so that the discrete conjugation is an exact isometry.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

# below this radius r/sinh r and its logarithm switch to Taylor series
SMALL_R = 1e-4
# Vtilde = 1/r^2 - 1/sinh^2 r cancels catastrophically, so its series branch is wider
VTILDE_SERIES_R = 0.1

_LOG_RATIO_SERIES = (-1.0 / 6.0, 1.0 / 180.0, -1.0 / 2835.0, 1.0 / 37800.0, -1.0 / 467775.0)
_VTILDE_SERIES = (
    1.0 / 3.0,
    -1.0 / 15.0,
    2.0 / 189.0,
    -1.0 / 675.0,
    2.0 / 10395.0,
    -1382.0 / 58046625.0,
    4.0 / 1403325.0,
    -3617.0 / 10854718875.0,
)


class ModelError(ValueError):
    """Raised when model parameters violate their admissible range."""


class Space(str, Enum):
    HYPERBOLIC = "hyperbolic"
    EUCLIDEAN = "euclidean"


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class ModelParams:
    """Dimension, power and soliton parameter of the focusing problem.

    ``mu = lam + ((d-1)/2)^2`` is the shifted parameter of the conjugated problem;
    it must be positive.  ``p`` must be energy subcritical, ``p < 4/(d-2)``.
    """

    d: int
    p: float
    lam: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ModelError(f"d must be an integer >= 2, got {self.d}")
        if not self.p > 0:
            raise ModelError(f"p must be positive, got {self.p}")
        if not self.p < self.p_crit_energy:
            raise ModelError(
                f"p={self.p} is not energy subcritical for d={self.d} (need p < {self.p_crit_energy})"
            )
        if not self.mu > 0:
            raise ModelError(
                f"lambda={self.lam} is outside (-((d-1)/2)^2, inf) = ({-self.spectral_shift}, inf)"
            )

    @property
    def spectral_shift(self) -> float:
        return ((self.d - 1) / 2.0) ** 2

    @property
    def mu(self) -> float:
        return self.lam + self.spectral_shift

    @property
    def p_crit_mass(self) -> float:
        return 4.0 / self.d

    @property
    def p_crit_energy(self) -> float:
        return math.inf if self.d == 2 else 4.0 / (self.d - 2)

    @property
    def d_star(self) -> float:
        return (2.0 * self.d + 4.0) / self.d

    def with_lambda(self, lam: float) -> "ModelParams":
        return ModelParams(self.d, self.p, lam)


def default_r_max(mu: float) -> float:
    """Cutoff radius leaving at least 18 e-folds of tail decay inside the box."""
    return max(20.0, 18.0 / math.sqrt(mu))


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n: int

    def __post_init__(self):
        if self.n < 2 or not self.r_max > 0:
            raise ModelError(f"grid needs n >= 2 and r_max > 0, got n={self.n}, r_max={self.r_max}")

    @property
    def h(self) -> float:
        return self.r_max / self.n

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    @property
    def faces(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h

    def euclidean_cell_volumes(self, d: int) -> np.ndarray:
        """Radial cell volumes int r^{d-1} dr (without the sphere factor)."""
        f = self.faces
        return (f[1:] ** d - f[:-1] ** d) / d

    @classmethod
    def with_spacing(cls, r_max: float, h: float) -> "RadialGrid":
        return cls(float(r_max), int(round(r_max / h)))


# ---------------------------------------------------------------------------
# closed-form radial functions


def _series(coeffs, r2):
    out = np.zeros_like(r2)
    for c in reversed(coeffs):
        out = out * r2 + c
    return out


def log_r_over_sinh(r):
    """log(r / sinh r), stable for all r >= 0."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = r < SMALL_R
    big = r > 30.0
    mid = ~(small | big)
    out[small] = r[small] ** 2 * _series(_LOG_RATIO_SERIES, r[small] ** 2)
    out[mid] = np.log(r[mid]) - np.log(np.sinh(r[mid]))
    rb = r[big]
    out[big] = np.log(2.0 * rb) - rb - np.log1p(-np.exp(-2.0 * rb))
    return out


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def eval_phi(r, d: int):
    """phi(r) = (r / sinh r)^((d-1)/2); equals 1 at the origin."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0):
        raise ValueError("eval_phi needs r >= 0")
    out = np.exp(0.5 * (d - 1) * log_r_over_sinh(r_arr))
    return _scalar_or_array(out[0] if np.ndim(r) == 0 else out, r)


def eval_v_tilde(r):
    """Vtilde(r) = 1/r^2 - 1/sinh^2 r, with Vtilde(0) = 1/3."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0):
        raise ValueError("eval_v_tilde needs r >= 0")
    out = np.empty_like(r_arr)
    small = r_arr < VTILDE_SERIES_R
    out[small] = _series(_VTILDE_SERIES, r_arr[small] ** 2)
    rb = r_arr[~small]
    # 1/sinh^2 r = 4 e^{-2r} / (1 - e^{-2r})^2 avoids overflow
    e2 = np.exp(-2.0 * rb)
    out[~small] = 1.0 / rb**2 - 4.0 * e2 / (-np.expm1(-2.0 * rb)) ** 2
    return _scalar_or_array(out[0] if np.ndim(r) == 0 else out, r)


def potential_strength(d: int) -> float:
    """The constant (d-1)(d-3)/4 multiplying -Vtilde in V_d."""
    return (d - 1) * (d - 3) / 4.0


def eval_potential(r, params: ModelParams):
    """V_d(r) = (d-1)(d-3)/4 * (r^2 - sinh^2 r) / (r^2 sinh^2 r)."""
    # d = 3 gives c = 0 and an exactly vanishing potential
    return -potential_strength(params.d) * eval_v_tilde(r) + 0.0


def effective_potential(r, params: ModelParams):
    """mu_d + V_d(r), the potential of the conjugated stationary problem."""
    return params.mu + eval_potential(r, params)


def eval_k_tilde(r, params: ModelParams, p: float | None = None):
    """Conjugated nonlinear weight phi(r)^p = (r/sinh r)^(p (d-1)/2)."""
    p = params.p if p is None else p
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.exp(0.5 * p * (params.d - 1) * log_r_over_sinh(r_arr))
    return _scalar_or_array(out[0] if np.ndim(r) == 0 else out, r)


def eval_offset(r):
    """Angular offset a(r) = (r^2 - sinh^2 r)/(r^2 sinh^2 r) = -Vtilde(r)."""
    return -eval_v_tilde(r)


# ---------------------------------------------------------------------------
# tables and fields


@dataclass(frozen=True)
class GeometryTables:
    r: np.ndarray
    phi: np.ndarray
    v_d: np.ndarray
    v_tilde: np.ndarray
    k_tilde: np.ndarray
    k_big: np.ndarray
    jac_hyp: np.ndarray
    jac_euc: np.ndarray
    c2: np.ndarray
    offset_a: np.ndarray

    @classmethod
    def build(cls, grid: RadialGrid, params: ModelParams) -> "GeometryTables":
        r = grid.nodes
        d = params.d
        k_tilde = eval_k_tilde(r, params)
        tables = cls(
            r=r,
            phi=eval_phi(r, d),
            v_d=np.asarray(eval_potential(r, params), dtype=float),
            v_tilde=eval_v_tilde(r),
            k_tilde=k_tilde,
            k_big=k_tilde / (params.p + 2.0),
            jac_hyp=np.sinh(r) ** (d - 1),
            jac_euc=r ** (d - 1),
            c2=np.asarray(effective_potential(r, params), dtype=float),
            offset_a=eval_offset(r),
        )
        for arr in tables.__dict__.values():
            arr.setflags(write=False)
        return tables

    COLUMNS = ("r", "phi", "v_d", "v_tilde", "k_tilde", "k_big", "c2", "offset_a", "jac_hyp", "jac_euc")

    def to_csv(self, path, metadata: dict | None = None) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            for key, val in (metadata or {}).items():
                fh.write(f"# {key}: {val}\n")
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            cols = [getattr(self, c) for c in self.COLUMNS]
            for row in zip(*cols):
                writer.writerow([repr(float(x)) for x in row])


@dataclass
class RadialField:
    """Samples of a radial function on a grid, tagged by the measure its norms use."""

    grid: RadialGrid
    values: np.ndarray
    space: Space = Space.EUCLIDEAN

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.space = Space(self.space)
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "RadialField":
        return RadialField(self.grid, self.values.copy(), self.space)


def quadrature_weights(grid: RadialGrid, d: int, space: Space | str = Space.EUCLIDEAN) -> np.ndarray:
    """Weights so that ``sum(w * f)`` approximates the integral of a radial f over R^d or H^d."""
    w = sphere_area(d) * grid.euclidean_cell_volumes(d)
    if Space(space) is Space.HYPERBOLIC:
        w = w * eval_phi(grid.nodes, d) ** -2
    return w


def face_jacobian(grid: RadialGrid, d: int, space: Space | str = Space.EUCLIDEAN) -> np.ndarray:
    f = grid.faces
    if Space(space) is Space.HYPERBOLIC:
        return sphere_area(d) * np.sinh(f) ** (d - 1)
    return sphere_area(d) * f ** (d - 1)


def dirichlet_energy(values: np.ndarray, grid: RadialGrid, d: int, space=Space.EUCLIDEAN) -> float:
    """Discrete int |u'|^2 with face differences, u'(0)=0 and u(r_max)=0."""
    u = np.asarray(values)
    h = grid.h
    jf = face_jacobian(grid, d, space)
    du = np.diff(u)
    inner = np.sum(jf[1:-1] * np.abs(du) ** 2) / h
    # ghost value -u_n puts the zero at r_max; the flux through r = 0 vanishes
    wall = jf[-1] * 2.0 * np.abs(u[-1]) ** 2 / h
    return float(inner + wall)


def conjugate(field: RadialField, direction: str, d: int) -> RadialField:
    """Apply T (``to_hyperbolic``: multiply by phi) or its inverse (``to_euclidean``)."""
    phi = eval_phi(field.grid.nodes, d)
    if direction == "to_hyperbolic":
        if field.space is not Space.EUCLIDEAN:
            raise ValueError("to_hyperbolic expects a euclidean-tagged field")
        return RadialField(field.grid, field.values * phi, Space.HYPERBOLIC)
    if direction == "to_euclidean":
        if field.space is not Space.HYPERBOLIC:
            raise ValueError("to_euclidean expects a hyperbolic-tagged field")
        return RadialField(field.grid, field.values / phi, Space.EUCLIDEAN)
    raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class Norms:
    l2: float
    h1_seminorm: float
    lp2: float


def norms(field: RadialField, params: ModelParams) -> Norms:
    """L^2 norm, H^1 seminorm and L^{p+2} norm in the measure matching the field's tag."""
    d = params.d
    w = quadrature_weights(field.grid, d, field.space)
    a = np.abs(field.values)
    l2 = math.sqrt(float(np.sum(w * a**2)))
    h1 = math.sqrt(dirichlet_energy(field.values, field.grid, d, field.space))
    q = params.p + 2.0
    lp2 = float(np.sum(w * a**q)) ** (1.0 / q)
    return Norms(l2, h1, lp2)
