"""Second-order Crank-Nicolson stepping of the auxiliary-variable system.

Each step is a direct linear solve: the half-point nonlinearity is frozen at
the extrapolant fbar = (3 phi^n - phi^{n-1}) / 2 (fbar = phi^n on the very
first step), the diagonal resolvent inverts the stiff part, and the rank-one
auxiliary coupling is resolved by one scalar equation.  The scheme decays the
modified energy  1/2 ||G phi||^2 + R^2 - c1  for every positive step size.

The auxiliary scalar R is stored as its deviation from sqrt(c1): for shifts
as large as 1e16 the deviation carries the full precision that R^2 - c1
needs, which a plain float R would lose to cancellation.

The zero mode of the ratio field u is removed inside the step, which makes
the flow the mean-constrained gradient flow and conserves mass exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import BulkPositivityError, NumericalError
from .field import SpectralField, _coeff_inner, enforce_hermitian, hermitian_violation
from .lattice import OperatorSymbol
from .model import ModelParams, bulk_mean, sav_ingredients, sqrt_f1_deviation

__all__ = [
    "StepperState",
    "StepReport",
    "init_state",
    "cn_step",
    "modified_energy",
    "evolve",
]

_MEAN_TOL = 1e-13


@dataclass
class StepperState:
    """Integrator state: current and previous field, auxiliary scalar, time."""

    phi: SpectralField
    phi_prev: Optional[SpectralField]
    r_dev: float
    sqrt_c1: float
    t: float

    @property
    def r(self) -> float:
        return self.sqrt_c1 + self.r_dev


@dataclass
class StepReport:
    modified_energy: float
    original_energy: float
    r_value: float
    w_norm_sq: float


def init_state(
    phi0: SpectralField,
    symbol: OperatorSymbol,
    params: ModelParams,
    dealias: bool = False,
    t0: float = 0.0,
) -> StepperState:
    """Start a trajectory: R0 = sqrt(F1(phi0)), no previous field yet."""
    cmax = float(np.abs(phi0.coeffs).max()) if phi0.grid.total else 0.0
    if hermitian_violation(phi0) > 1e-11 * max(1.0, cmax):
        raise ValueError("initial field is not conjugate-symmetric")
    if abs(phi0.coeffs.ravel()[phi0.grid.zero_index]) > _MEAN_TOL:
        raise ValueError("initial field must have zero mean")
    nu = bulk_mean(phi0, params, dealias=dealias)
    if not nu + params.c1 > 0.0:
        raise BulkPositivityError(
            f"shifted bulk energy {nu + params.c1:.6e} is not positive; increase c1"
        )
    return StepperState(
        phi=phi0,
        phi_prev=None,
        r_dev=float(sqrt_f1_deviation(nu, params.c1)),
        sqrt_c1=float(np.sqrt(params.c1)),
        t=float(t0),
    )


@dataclass
class _StepInternals:
    sqrt_f1: float
    u: SpectralField
    s_value: float
    gamma: float


def _grad_part(phi_coeffs: np.ndarray, symbol: OperatorSymbol) -> float:
    gc = symbol.g * phi_coeffs
    return 0.5 * float(np.vdot(gc, gc).real)


def _cn_step_full(
    state: StepperState,
    tau: float,
    symbol: OperatorSymbol,
    params: ModelParams,
    dealias: bool = False,
):
    if tau <= 0:
        raise ValueError("tau must be positive")
    phi = state.phi
    grid = phi.grid

    if state.phi_prev is None:
        fbar = phi
    else:
        fbar = 1.5 * phi - 0.5 * state.phi_prev

    u, sqrt_f1 = sav_ingredients(fbar, params, dealias=dealias)
    u_c = u.coeffs.copy()
    u_c.ravel()[grid.zero_index] = 0.0  # mass constraint: u acts in the mean-zero space

    phi_c = phi.coeffs
    r_n = state.r
    u_phi = _coeff_inner(u_c, phi_c)

    g2 = symbol.g2
    denom = 1.0 + (0.5 * tau) * g2
    c = phi_c * (1.0 - 0.5 * tau * g2) + (0.25 * tau * u_phi - tau * r_n) * u_c

    gamma = _coeff_inner(u_c / denom, u_c)
    s = _coeff_inner(c / denom, u_c) / (1.0 + 0.25 * tau * gamma)
    phi_new_c = (c - 0.25 * tau * s * u_c) / denom

    r_inc = 0.5 * _coeff_inner(phi_new_c - phi_c, u_c)
    r_dev_new = state.r_dev + r_inc

    phi_new = enforce_hermitian(SpectralField(grid, phi_new_c))
    phi_new.coeffs.ravel()[grid.zero_index] = 0.0

    diff = phi_new.coeffs - phi_c
    w_norm_sq = float(np.vdot(diff, diff).real) / (tau * tau)

    grad = _grad_part(phi_new.coeffs, symbol)
    modified = grad + r_dev_new * (2.0 * state.sqrt_c1 + r_dev_new)
    original = grad + bulk_mean(phi_new, params, dealias=dealias)

    checks = (sqrt_f1, gamma, s, r_inc, grad, original, w_norm_sq)
    if not np.all(np.isfinite(checks)):
        raise NumericalError(
            "non-finite values in the step (check the step size and c1): "
            + repr(checks)
        )

    new_state = StepperState(
        phi=phi_new,
        phi_prev=phi,
        r_dev=r_dev_new,
        sqrt_c1=state.sqrt_c1,
        t=state.t + tau,
    )
    report = StepReport(
        modified_energy=modified,
        original_energy=original,
        r_value=new_state.r,
        w_norm_sq=w_norm_sq,
    )
    internals = _StepInternals(
        sqrt_f1=sqrt_f1, u=SpectralField(grid, u_c), s_value=s, gamma=gamma
    )
    return new_state, report, internals


def cn_step(
    state: StepperState,
    tau: float,
    symbol: OperatorSymbol,
    params: ModelParams,
    dealias: bool = False,
):
    """Advance one step of size tau; returns (new_state, report)."""
    new_state, report, _ = _cn_step_full(state, tau, symbol, params, dealias=dealias)
    return new_state, report


def modified_energy(state: StepperState, symbol: OperatorSymbol, params: ModelParams) -> float:
    """1/2 ||G phi||^2 + R^2 - c1, the quantity the stepper provably decays."""
    grad = _grad_part(state.phi.coeffs, symbol)
    return grad + state.r_dev * (2.0 * state.sqrt_c1 + state.r_dev)


def evolve(
    state: StepperState,
    times,
    symbol: OperatorSymbol,
    params: ModelParams,
    dealias: bool = False,
    on_step: Optional[Callable[[int, StepperState, StepReport], None]] = None,
):
    """Step through the node times (uniform or not); returns (state, reports).

    `times` must start at the state's current time and increase strictly.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("times must be a 1-d sequence of node times")
    if abs(times[0] - state.t) > 1e-12 * max(1.0, abs(state.t)):
        raise ValueError(f"times must start at t={state.t}, got {times[0]}")
    if np.any(np.diff(times) <= 0):
        raise ValueError("node times must increase strictly")

    reports = []
    for i in range(times.size - 1):
        tau = float(times[i + 1] - times[i])
        state, report = cn_step(state, tau, symbol, params, dealias=dealias)
        state = replace(state, t=float(times[i + 1]))  # pin to the exact node time
        reports.append(report)
        if on_step is not None:
            on_step(i + 1, state, report)
    return state, reports
