"""Aggregate power controller acting on the broadcast temperature set-point.

The output is the weighted ON power y = (P/eta) * integral (a x + b) w dx.
Choosing the set-point rate u so that dy/dt = phi, up to the switching
disturbance Gamma, gives the linear error dynamics de/dt = -k0 e + Gamma
under the damping phi = -k0 e.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StarvedPopulationError
from .fpe import DensityField
from .population import SwitchFlux, aggregate_power
from .tcl_agent import TclParams, drift_on


@dataclass
class ControllerState:
    """Controller memory.

    ``k0`` is in 1/h and ``beta`` (degC^2/h) is the model diffusivity used
    by the law. ``u_hist`` keeps the last ``window`` raw rates (zeros at
    start); the broadcast set-point integrates their mean. With ``compensate_recirculation`` the
    law subtracts an estimate of the steady switching disturbance from the
    damping term (see ``recirculation_feedforward``).
    """

    k0: float
    a: float = -1.0
    b: float = -20.0
    y_d: float = 0.0
    x_ref: float = 20.5
    beta: float = 0.1
    window: int = 10
    delta0_guard: float = 10.0
    compensate_recirculation: bool = False
    u_hist: deque = field(default=None)
    last_u: float = 0.0
    guard_trips: int = 0

    def __post_init__(self):
        if not self.k0 > 0:
            raise ConfigError(f"k0 must be positive, got {self.k0}")
        if self.a == 0:
            raise ConfigError("output weight a must be nonzero")
        if not self.delta0_guard > 0:
            raise ConfigError("delta0_guard must be positive")
        if self.window < 1:
            raise ConfigError("smoothing window must hold at least one value")
        if self.u_hist is None:
            self.u_hist = deque([0.0] * self.window, maxlen=self.window)

    @property
    def u_smooth(self) -> float:
        return float(np.mean(self.u_hist)) if self.u_hist else 0.0


def output_y(field: DensityField, p: TclParams, cs: ControllerState) -> float:
    return aggregate_power(field, p, cs.a, cs.b)[0]


def damping_phi(e: float, k0: float) -> float:
    return -k0 * e


def recirculation_feedforward(field: DensityField, p: TclParams, cs: ControllerState) -> float:
    """Estimate of Gamma while the ON loads cycle in steady state.

    In cyclic steady state the first moment of w is stationary, so the
    switching flux removes what the ON drift brings in and Gamma settles
    near -(P/eta) a integral alpha_1 w dx. Only w is used. Feeding this
    estimate forward cancels the drift term of the control law.
    """
    dx = field.grid.dx
    return -(p.P / p.eta) * cs.a * float(np.sum(drift_on(field.grid.centers, p) * field.w) * dx)


def control_u(field: DensityField, p: TclParams, cs: ControllerState, phi: float) -> float:
    """Set-point rate (degC/h) that makes dy/dt equal ``phi`` in the model."""
    dx = field.grid.dx
    mass = float(np.sum(field.w) * dx)
    if abs(mass) < cs.delta0_guard:
        raise StarvedPopulationError(f"ON mass {mass:.3g} below guard {cs.delta0_guard:.3g}")
    drift = float(np.sum(drift_on(field.grid.centers, p) * field.w) * dx)
    boundary = cs.beta * (field.w[-1] - field.w[0])
    num = boundary - drift + p.eta / (cs.a * p.P) * phi
    return -num / mass


def error_update(e: float, k0: float, Gamma: float, dt: float) -> float:
    """Exact solution of de/dt = -k0 e + Gamma over ``dt`` with Gamma held."""
    decay = math.exp(-k0 * dt)
    return e * decay + Gamma / k0 * (1.0 - decay)


def error_bound(e0: float, Gamma_inf: float, k0: float, t):
    decay = np.exp(-k0 * np.asarray(t, dtype=float))
    out = abs(e0) * decay + Gamma_inf / k0 * (1.0 - decay)
    return out if np.ndim(out) else float(out)


def gamma_of_flux(delta: SwitchFlux, p: TclParams, a: float, b: float) -> float:
    grid = delta.grid
    return (p.P / p.eta) * float(np.sum((a * grid.centers + b) * delta.values) * grid.dx)


def update_reference(cs: ControllerState, u_raw: float, dt: float):
    """Push ``u_raw``, integrate the moving average over ``dt``.

    Returns the controller state (updated in place) and the new set-point.
    """
    if not dt > 0:
        raise ConfigError(f"reference update period must be positive, got {dt}")
    cs.u_hist.append(float(u_raw))
    cs.x_ref = cs.x_ref + cs.u_smooth * dt
    return cs, cs.x_ref


def regulate(field: DensityField, p: TclParams, cs: ControllerState, dt: float):
    """One controller period: error, damping, control law, guard, set-point.

    Returns (e, u_raw, x_ref). When the ON mass is below the guard the
    previous raw rate is reused and the trip is counted.
    """
    e = output_y(field, p, cs) - cs.y_d
    phi = damping_phi(e, cs.k0)
    if cs.compensate_recirculation:
        phi -= recirculation_feedforward(field, p, cs)
    try:
        u_raw = control_u(field, p, cs, phi)
    except StarvedPopulationError:
        cs.guard_trips += 1
        u_raw = cs.last_u
    cs.last_u = u_raw
    _, x_ref = update_reference(cs, u_raw, dt)
    return e, u_raw, x_ref
