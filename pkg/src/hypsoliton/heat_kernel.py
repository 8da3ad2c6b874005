"""Heat kernel of hyperbolic space as a function of distance, built by recursion.

With ``sigma = cosh(rho/2)^2`` (so ``dsigma/drho = sinh(rho)/2``):

* odd dimensions step up by ``p_{d+2} = -(4 pi)^{-1} d/dsigma p_d`` from
  ``p_1 = (4 pi t)^{-1/2} exp(-rho^2 / 4t)``;
* even dimensions come from one dimension up through
  ``p_d(sigma) / 2 = int_sigma^inf p_{d+1}(lam) (lam - sigma)^{-1/2} dlam``.

The recursion constants are taken as given, so the kernels omit the
``exp(-(d-1)^2 t / 4)`` factor of the stochastic normalization.  Monotonicity
in ``rho`` is unaffected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import numpy.polynomial.polynomial as P
import sympy as sp

D_MAX = 7
# below this distance (or 0.5 sqrt(t)) the closed forms lose digits to 0/0 and a
# Taylor series is used instead
SERIES_RHO = 0.05
SERIES_ORDER = 14
# composite Gauss-Legendre rule for the even-dimension integral
ABEL_PANELS = 24
ABEL_ORDER = 24


class HeatKernelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class HeatKernelEval:
    d: int
    t: float
    rho: float
    sigma: float
    value: float

    def __post_init__(self):
        if not self.sigma >= 1.0:
            raise ValueError("sigma = cosh(rho/2)^2 is at least 1")


def sigma_of_rho(rho):
    return np.cosh(0.5 * np.asarray(rho, dtype=float)) ** 2


def rho_of_sigma(sigma):
    return 2.0 * np.arccosh(np.sqrt(np.asarray(sigma, dtype=float)))


def _check(t, d=1):
    if not t > 0:
        raise HeatKernelDomainError("t must be positive")
    if not (isinstance(d, (int, np.integer)) and 1 <= d <= D_MAX):
        raise HeatKernelDomainError(f"dimension must be an integer in [1, {D_MAX}]")


def p1(rho, t):
    """(4 pi t)^{-1/2} exp(-rho^2 / 4t)."""
    _check(t)
    rho = np.asarray(rho, dtype=float)
    out = (4.0 * math.pi * t) ** -0.5 * np.exp(-(rho**2) / (4.0 * t))
    return float(out) if out.ndim == 0 else out


_RHO, _T = sp.symbols("rho t", positive=True)


def _step_up(expr, csch):
    """-(4 pi)^{-1} d/dsigma with dsigma/drho = sinh(rho) / 2."""
    return -(1 / (4 * sp.pi)) * 2 * csch * sp.diff(expr, _RHO)


@lru_cache(maxsize=None)
def _odd_expr(d: int):
    """Closed form of p_d in (rho, t) for odd d."""
    if d == 1:
        return (4 * sp.pi * _T) ** sp.Rational(-1, 2) * sp.exp(-(_RHO**2) / (4 * _T))
    return _step_up(_odd_expr(d - 2), 1 / sp.sinh(_RHO))


@lru_cache(maxsize=None)
def _odd_closed_form(d: int):
    return sp.lambdify((_RHO, _T), _odd_expr(d), "numpy")


@lru_cache(maxsize=None)
def _rho_csch_coeffs(n: int) -> np.ndarray:
    """Taylor coefficients of rho / sinh(rho) up to rho^(n-1)."""
    x = sp.Symbol("x")
    ser = sp.series(x / sp.sinh(x), x, 0, n).removeO()
    return np.array([float(ser.coeff(x, k)) for k in range(n)])


def _odd_series_coeffs(d: int, t: float) -> np.ndarray:
    """Taylor coefficients in rho of p_d at fixed t, by the same recursion on polynomials."""
    n = SERIES_ORDER + d + 1
    k = np.arange(n // 2 + 1)
    c = np.zeros(n)
    c[0::2] = (4.0 * math.pi * t) ** -0.5 * (-1.0 / (4.0 * t)) ** k[: (n + 1) // 2] / np.array(
        [math.factorial(int(j)) for j in k[: (n + 1) // 2]]
    )
    rc = _rho_csch_coeffs(n)
    for _ in range((d - 1) // 2):
        dc = P.polyder(c)[1:]  # derivative of an even series divided by rho
        c = -(2.0 / (4.0 * math.pi)) * P.polymul(dc, rc)[: len(dc)]
    return c[:SERIES_ORDER]


def _odd_kernel(d: int, rho, t):
    rho = np.asarray(rho, dtype=float)
    small = rho < min(SERIES_RHO, 0.5 * math.sqrt(t))
    out = np.empty_like(rho)
    if np.any(~small):
        with np.errstate(over="ignore", invalid="ignore"):
            out[~small] = _odd_closed_form(d)(rho[~small], t)
    if np.any(small):
        out[small] = P.polyval(rho[small], _odd_series_coeffs(d, t))
    # exp underflow can leave inf * 0 for very large rho
    return np.where(np.isfinite(out), out, 0.0)


def _even_kernel(d: int, rho, t):
    return 2.0 * abel_integral(d + 1, sigma_of_rho(np.asarray(rho, dtype=float)), t)


@lru_cache(maxsize=None)
def _panel_rule(panels: int = ABEL_PANELS, order: int = ABEL_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def abel_integral(d_up: int, sigma, t: float):
    """int_sigma^inf p_{d_up}(lam) (lam - sigma)^{-1/2} dlam, vectorized over sigma.

    Written in the distance variable ``rho' = rho + v^2`` the integrand

        p(rho') sinh(rho') v / sqrt(sinh(rho + v^2/2) sinh(v^2/2))

    is smooth (even analytic) in ``v``, so a composite Gauss-Legendre rule
    converges fast.  The kernel carries the factor ``exp(-rho'^2 / 4t)``, so the
    range stops where ``rho' - rho`` reaches ``sqrt(240 t)``: the neglected tail
    is below ``exp(-60)`` relative to the integrand at ``v = 0``.
    """
    shape = np.shape(sigma)
    rho = np.ravel(rho_of_sigma(sigma))
    v_max = math.sqrt(math.sqrt(240.0 * t) + 1.0)
    nodes, weights = _panel_rule()
    v = v_max * nodes
    x = 0.5 * v * v
    # v / sqrt(sinh(v^2/2)) = sqrt(2 x / sinh x)
    ratio = np.sqrt(2.0 * x / np.sinh(x))
    rp = rho[:, None] + v[None, :]**2
    # sinh(rho') / sqrt(sinh(rho + x)) in log form to avoid overflow
    lg = _log_sinh(rp) - 0.5 * _log_sinh(rho[:, None] + x[None, :])
    vals = np.asarray(heat_kernel(d_up, rp, t)) * np.exp(lg) * ratio[None, :]
    out = v_max * (vals @ weights)
    return float(out[0]) if not shape else out.reshape(shape)


def _log_sinh(x):
    x = np.asarray(x, dtype=float)
    big = x > 20.0
    xs = np.where(big, 1.0, x)
    return np.where(big, x - math.log(2.0) + np.log1p(-np.exp(-2.0 * np.where(big, x, 20.0))), np.log(np.sinh(xs)))


def heat_kernel(d: int, rho, t):
    """p_d(rho, t) by the dimension recursions; vectorized over rho."""
    _check(t, d)
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr < 0):
        raise HeatKernelDomainError("rho must be nonnegative")
    flat = np.atleast_1d(rho_arr).ravel()
    out = _odd_kernel(d, flat, t) if d % 2 == 1 else _even_kernel(d, flat, t)
    return float(out[0]) if rho_arr.ndim == 0 else out.reshape(rho_arr.shape)


def evaluate(d: int, rho: float, t: float) -> HeatKernelEval:
    return HeatKernelEval(d, float(t), float(rho), float(sigma_of_rho(rho)), float(heat_kernel(d, rho, t)))


def monotonicity_check(d: int, t: float, rho_grid) -> dict:
    """Kernel values on a grid with flags for strict decrease and nonnegativity."""
    rho = np.asarray(rho_grid, dtype=float)
    if np.any(np.diff(rho) <= 0):
        raise ValueError("rho grid must be strictly increasing")
    vals = np.asarray(heat_kernel(d, rho, t), dtype=float)
    steps = np.diff(vals)
    return {
        "d": d,
        "t": float(t),
        "rho": rho,
        "values": vals,
        "decreasing": bool(np.all(steps < 0)),
        "nonnegative": bool(np.all(vals >= 0)),
        "max_step": float(np.max(steps)) if steps.size else -math.inf,
    }


def recursion_consistency(d: int, rho, t: float) -> float:
    """Relative gap between p_d built directly and 2 int p_{d+1}(lam) (lam - sigma)^{-1/2} dlam (odd d).

    ``p_{d+1}`` is itself an Abel integral of ``p_{d+2}``, so this is a nested
    quadrature compared with the closed form.
    """
    if d % 2 == 0:
        raise ValueError("consistency is checked from an odd dimension")
    direct = float(heat_kernel(d, rho, t))
    via = 2.0 * abel_integral(d + 1, float(sigma_of_rho(rho)), t)
    return abs(via - direct) / abs(direct)
