"""Focusing nonlinearities in conjugated (Euclidean) coordinates.

Every kind is written as ``f(r, R) R`` on the hyperbolic side; its conjugated form
``phi^{-1} f(r, phi s) (phi s)`` is what the radial solvers use.

power
    ``f(R) = R^p``; conjugated term ``Ktilde(r) s^{p+1}`` with ``Ktilde = phi^p``.
weighted_power
    ``f(r, R) = g(r) R^p`` with ``g = (sinh r / r)^{gamma (d-1)/2}``; the weight grows
    exponentially but ``g phi^p = phi^{p - gamma}`` still decays when ``gamma < p``.
saturated
    ``f(R) = R^q R^{p-q} / (1 + R^{p-q})``: ``R^p`` at small amplitude and ``R^q``
    at large amplitude.

The linearization uses the convention ``beta(s^2) = s^p`` for the power case, i.e.
``L_- = L - f(R)`` and ``L_+ = L - d/dR (f(R) R)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .geometry import ModelError, log_r_over_sinh

KINDS = ("power", "weighted_power", "saturated")


@dataclass(frozen=True)
class NonlinearitySpec:
    kind: str = "power"
    p: float = 1.0
    q: float | None = None
    growth_rate: float = 0.0
    # +1 focusing, -1 defocusing, 0 switches the nonlinearity off
    coupling: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown nonlinearity kind {self.kind!r}; expected one of {KINDS}")
        if not self.p > 0:
            raise ModelError("nonlinearity exponent p must be positive")
        if self.kind == "saturated" and self.q is None:
            raise ModelError("saturated nonlinearity needs q")
        if self.kind == "weighted_power" and not 0.0 <= self.growth_rate < self.p:
            raise ModelError(
                f"weight growth rate {self.growth_rate} must lie in [0, p={self.p}) for the "
                "conjugated weight to decay"
            )

    @classmethod
    def power(cls, p: float) -> "NonlinearitySpec":
        return cls("power", float(p))

    def validate(self, d: int) -> None:
        """Check the exponent ranges for dimension d."""
        if self.kind in ("power", "weighted_power"):
            crit = math.inf if d == 2 else 4.0 / (d - 2)
            if not self.p < crit:
                raise ModelError(f"p={self.p} is not energy subcritical for d={d}")
        else:
            if not self.p > 2.0 + 4.0 / d:
                raise ModelError(f"saturated nonlinearity needs p > 2 + 4/d = {2 + 4 / d}")
            if not 0.0 < self.q < 4.0 / d:
                raise ModelError(f"saturated nonlinearity needs 0 < q < 4/d = {4 / d}")

    def zeroed(self) -> "NonlinearitySpec":
        return replace(self, coupling=0.0)

    def negated(self) -> "NonlinearitySpec":
        return replace(self, coupling=-self.coupling)

    @property
    def is_homogeneous(self) -> bool:
        return self.kind != "saturated"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "q": self.q,
            "growth_rate": self.growth_rate,
            "coupling": self.coupling,
        }


def _check_amplitude(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("amplitude s must be nonnegative")
    return s


def _weight(spec: NonlinearitySpec, r, d: int):
    """phi(r)^(p - gamma): the radial factor of the homogeneous kinds."""
    expo = spec.p - (spec.growth_rate if spec.kind == "weighted_power" else 0.0)
    return np.exp(0.5 * expo * (d - 1) * log_r_over_sinh(np.atleast_1d(np.asarray(r, dtype=float))))


def _phi(r, d: int):
    return np.exp(0.5 * (d - 1) * log_r_over_sinh(np.atleast_1d(np.asarray(r, dtype=float))))


def _sat_profile(y, p, q):
    # y^p / (1 + y^(p-q)), written to stay finite for large y
    y = np.asarray(y, dtype=float)
    z = y ** (p - q)
    return np.where(z > 1e300, y**q, y**p / (1.0 + z))


def _shape(out, r, s):
    out = np.asarray(out, dtype=float)
    if np.ndim(r) == 0 and np.ndim(s) == 0:
        return float(out.reshape(-1)[0])
    return out.reshape(np.broadcast(np.asarray(r), np.asarray(s)).shape)


def coefficient(spec: NonlinearitySpec, r, s, d: int):
    """Local coefficient ftilde(r, s) / s, finite at s = 0."""
    s = _check_amplitude(s)
    if spec.kind == "saturated":
        out = _sat_profile(_phi(r, d) * s, spec.p, spec.q)
    else:
        out = _weight(spec, r, d) * s**spec.p
    return _shape(spec.coupling * out, r, s)


def eval_f_conjugated(spec: NonlinearitySpec, r, s, d: int):
    """Conjugated nonlinear term ftilde(r, s) = phi^{-1} f(r, phi s) (phi s)."""
    s = _check_amplitude(s)
    return _shape(np.asarray(coefficient(spec, r, s, d)) * s, r, s)


def eval_df_conjugated(spec: NonlinearitySpec, r, s, d: int):
    """Derivative of ftilde(r, s) in s."""
    s = _check_amplitude(s)
    if spec.kind == "saturated":
        p, q = spec.p, spec.q
        y = _phi(r, d) * s
        z = y ** (p - q)
        out = np.where(
            z > 1e150,
            (1.0 + q) * y**q,
            y**p * ((1.0 + p) + (1.0 + q) * z) / (1.0 + z) ** 2,
        )
    else:
        out = (spec.p + 1.0) * _weight(spec, r, d) * s**spec.p
    return _shape(spec.coupling * out, r, s)


def eval_f_hyperbolic(spec: NonlinearitySpec, r, R, d: int):
    """Unconjugated term f(r, R) R on the hyperbolic side."""
    R = _check_amplitude(R)
    if spec.kind == "saturated":
        out = _sat_profile(R, spec.p, spec.q) * R
    elif spec.kind == "weighted_power":
        g = np.exp(-0.5 * spec.growth_rate * (d - 1) * log_r_over_sinh(np.atleast_1d(np.asarray(r, float))))
        out = g * R ** (spec.p + 1.0)
    else:
        out = R ** (spec.p + 1.0)
    return _shape(spec.coupling * out, r, R)


@lru_cache(maxsize=None)
def _unit_nodes(order: int = 16, levels: int = 8):
    """Gauss-Legendre nodes on [0, 1], geometrically refined towards 0."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.concatenate(([0.0], 2.0 ** -np.arange(levels - 1, -1, -1.0)))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def eval_F_conjugated(spec: NonlinearitySpec, r, s, d: int):
    """Antiderivative F(r, s) = int_0^s ftilde(r, t) dt."""
    s = _check_amplitude(s)
    if spec.kind != "saturated":
        out = _weight(spec, r, d) * s ** (spec.p + 2.0) / (spec.p + 2.0)
        return _shape(spec.coupling * out, r, s)
    # F = s^2 int_0^1 t F_sat(phi s t) dt with F_sat(y) = y^p / (1 + y^(p-q))
    t, w = _unit_nodes()
    y = np.atleast_1d(_phi(r, d) * s)
    integrand = t[None, :] * _sat_profile(np.outer(y, t), spec.p, spec.q)
    out = np.atleast_1d(s) ** 2 * (integrand @ w)
    return _shape(spec.coupling * out, r, s)


def potential_density_hyperbolic(spec: NonlinearitySpec, r, R, d: int):
    """int_0^R f(r, t) t dt on the hyperbolic side (used by the conserved energy)."""
    R = _check_amplitude(R)
    phi = _phi(r, d)
    # conjugation: F_H(r, R) = phi^2 F(r, R / phi) since the measures differ by phi^2
    return _shape(phi**2 * np.asarray(eval_F_conjugated(spec, r, R / phi, d)), r, R)
