"""Rescaled free energy of the multi-length-scale crystal model.

Bulk density N(v) = eps/2 v^2 - alpha/3 v^3 + 1/4 v^4, total energy
1/2 ||G phi||^2 + <N(phi), 1> with G the product of (Laplacian + q_j^2)
factors.  The auxiliary-variable machinery shifts the bulk part by a
positive constant c1 so its square root is well defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import poly_eval
from .errors import BulkPositivityError
from .field import (
    PhysicalField,
    SpectralField,
    apply_symbol,
    enforce_hermitian,
    inner_ap,
    pointwise_poly,
    pointwise_poly_mean,
    to_physical,
    to_spectral,
)
from .lattice import OperatorSymbol

__all__ = [
    "ModelParams",
    "bulk_density",
    "nprime",
    "bulk_mean",
    "bulk_energy_f1",
    "energy",
    "variational_derivative",
    "sav_ratio_u",
    "sav_ingredients",
    "sqrt_f1_deviation",
]


@dataclass(frozen=True)
class ModelParams:
    """Length scales and bulk coefficients.  c1 is the positive shift that
    keeps the bulk energy strictly positive along the flow."""

    q: tuple
    eps: float
    alpha: float
    c1: float = 1e16

    def __post_init__(self) -> None:
        q = tuple(float(v) for v in np.atleast_1d(self.q))
        if len(q) < 1:
            raise ValueError("need at least one length scale")
        if any(v <= 0 for v in q):
            raise ValueError("length scales must be positive")
        if not self.c1 > 0:
            raise ValueError("c1 must be positive")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "c1", float(self.c1))


def _nprime_terms(params: ModelParams):
    return ((1, params.eps), (2, -params.alpha), (3, 1.0))


def _bulk_terms(params: ModelParams):
    return ((2, 0.5 * params.eps), (3, -params.alpha / 3.0), (4, 0.25))


def bulk_density(p: PhysicalField, params: ModelParams) -> PhysicalField:
    """Pointwise bulk energy density of collocation values."""
    exps = np.array([2, 3, 4], dtype=np.int64)
    cfs = np.array([0.5 * params.eps, -params.alpha / 3.0, 0.25])
    vals = poly_eval(np.ascontiguousarray(p.values.ravel()), exps, cfs)
    return PhysicalField(p.grid, vals.reshape(p.grid.sizes))


def nprime(f: SpectralField, params: ModelParams, dealias: bool = False) -> SpectralField:
    """Derivative of the bulk density, eps*phi - alpha*phi^2 + phi^3."""
    return pointwise_poly(f, _nprime_terms(params), dealias=dealias)


def bulk_mean(f: SpectralField, params: ModelParams, dealias: bool = False) -> float:
    """Spatial mean of the bulk density (no shift)."""
    return pointwise_poly_mean(f, _bulk_terms(params), dealias=dealias)


def bulk_energy_f1(f: SpectralField, params: ModelParams, dealias: bool = False) -> float:
    """Shifted bulk energy; must stay strictly positive for the square root."""
    value = bulk_mean(f, params, dealias=dealias) + params.c1
    if not value > 0.0:
        raise BulkPositivityError(
            f"shifted bulk energy {value:.6e} is not positive; increase c1"
        )
    return value


def energy(
    f: SpectralField, symbol: OperatorSymbol, params: ModelParams, dealias: bool = False
) -> float:
    """Total free energy, 1/2 ||G phi||^2 + <N(phi), 1> (no shift)."""
    gf = apply_symbol(f, symbol, power=1)
    grad = 0.5 * inner_ap(gf, gf)
    assert grad >= -1e-15, "gradient part of the energy must be nonnegative"
    return grad + bulk_mean(f, params, dealias=dealias)


def variational_derivative(
    f: SpectralField, symbol: OperatorSymbol, params: ModelParams, dealias: bool = False
) -> SpectralField:
    """G^2 phi + N'(phi), the gradient of the energy."""
    return apply_symbol(f, symbol, power=2) + nprime(f, params, dealias=dealias)


def sav_ingredients(
    fbar: SpectralField, params: ModelParams, dealias: bool = False
):
    """The auxiliary-variable ratio field u = N'(fbar)/sqrt(F1(fbar)) together
    with sqrt(F1(fbar)), sharing a single transform of fbar."""
    if dealias:
        npf = pointwise_poly(fbar, _nprime_terms(params), dealias=True)
        nu = pointwise_poly_mean(fbar, _bulk_terms(params), dealias=True)
    else:
        vals = np.ascontiguousarray(to_physical(fbar).values.ravel())
        exps = np.array([1, 2, 3], dtype=np.int64)
        cfs = np.array([params.eps, -params.alpha, 1.0])
        npv = poly_eval(vals, exps, cfs)
        bexps = np.array([2, 3, 4], dtype=np.int64)
        bcfs = np.array([0.5 * params.eps, -params.alpha / 3.0, 0.25])
        nu = float(poly_eval(vals, bexps, bcfs).mean())
        npf = enforce_hermitian(
            to_spectral(PhysicalField(fbar.grid, npv.reshape(fbar.grid.sizes)))
        )
    f1 = nu + params.c1
    if not f1 > 0.0:
        raise BulkPositivityError(
            f"shifted bulk energy {f1:.6e} is not positive; increase c1"
        )
    sqrt_f1 = float(np.sqrt(f1))
    return npf / sqrt_f1, sqrt_f1


def sav_ratio_u(fbar: SpectralField, params: ModelParams, dealias: bool = False) -> SpectralField:
    """N'(fbar) scaled by 1/sqrt(F1(fbar))."""
    u, _ = sav_ingredients(fbar, params, dealias=dealias)
    return u


def sqrt_f1_deviation(nu: float, c1: float) -> float:
    """sqrt(c1 + nu) - sqrt(c1), evaluated without cancellation.

    The auxiliary scalar is tracked as this deviation so that its square
    minus c1 keeps full precision even for c1 ~ 1e16.
    """
    return nu / (np.sqrt(c1 + nu) + np.sqrt(c1))
