"""Single-load thermal dynamics and the per-load binary MPC.

A thermostatically controlled load follows the first-order model

    RC dx/dt = x_e - x + s R P u,      u in {0, 1},

which is integrated exactly under a zero-order hold on u. Each load picks
its switching by enumerating every binary sequence over a short horizon.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import ConfigError, HorizonTooLargeError, InvalidPeriodError

MAX_HORIZON = 20


@dataclass(frozen=True)
class TclParams:
    """Physical parameters of one load.

    Units: R in degC/kW, C in kWh/degC, P in kW, x_e in degC. ``s`` is +1 for
    heating and -1 for cooling; ``eta`` is the coefficient of performance.
    """

    R: float = 2.0
    C: float = 10.0
    P: float = 14.0
    x_e: float = 32.0
    s: int = -1
    eta: float = 2.5

    def __post_init__(self):
        if not (self.R > 0 and self.C > 0 and self.P > 0 and self.eta > 0):
            raise ConfigError(f"R, C, P and eta must be positive: {self}")
        if self.s not in (-1, 1):
            raise ConfigError(f"s must be -1 or +1, got {self.s}")

    @property
    def tau(self) -> float:
        """Thermal time constant RC in hours."""
        return self.R * self.C

    def duty_ratio(self, x: float) -> float:
        """Fraction of time ON that holds temperature ``x`` stationary."""
        a0 = drift_off(x, self)
        a1 = drift_on(x, self)
        return a0 / (a0 - a1)

    def equilibrium_temperature(self, duty: float) -> float:
        """Temperature held by a steady duty ratio (inverse of ``duty_ratio``)."""
        return self.x_e + self.s * self.R * self.P * duty


@dataclass
class TclState:
    x: float
    u: int = 0
    t: float = 0.0

    def __post_init__(self):
        if self.u not in (0, 1):
            raise ConfigError(f"switch state must be 0 or 1, got {self.u}")


@dataclass(frozen=True)
class ZohModel:
    """Exact one-step map x' = A x + B u + E x_e over a period ``Ts`` (hours).

    ``x_e`` is the ambient temperature, held constant over the horizon.
    """

    A: float
    B: float
    E: float
    Ts: float
    x_e: float

    def step(self, x, u):
        return self.A * x + self.B * u + self.E * self.x_e


@dataclass(frozen=True)
class MpcConfig:
    Q_mpc: float = 100.0
    R_mpc: float = 10.0
    M: int = 5
    band_lo: float = 0.5
    band_hi: float = 0.5
    ref_delay: float = 0.0
    violation_penalty: float = 1e6

    def __post_init__(self):
        if self.Q_mpc < 0 or self.R_mpc < 0:
            raise ConfigError("MPC weights must be nonnegative")
        if self.M < 1:
            raise ConfigError(f"horizon must be at least 1, got {self.M}")
        if not (self.band_lo > 0 and self.band_hi > 0):
            raise ConfigError("deadband half-widths must be positive")
        if self.ref_delay < 0:
            raise ConfigError("reference delay must be nonnegative")
        if self.violation_penalty < 0:
            raise ConfigError("violation penalty must be nonnegative")


def drift_on(x, p: TclParams):
    """Temperature rate (degC/h) while ON. Works on scalars and arrays."""
    return (p.x_e - x + p.s * p.R * p.P) / (p.R * p.C)


def drift_off(x, p: TclParams):
    """Temperature rate (degC/h) while OFF."""
    return (p.x_e - x) / (p.R * p.C)


def make_zoh(p: TclParams, Ts: float) -> ZohModel:
    if not Ts > 0:
        raise InvalidPeriodError(f"sampling period must be positive, got {Ts}")
    A = math.exp(-Ts / (p.R * p.C))
    E = 1.0 - A
    return ZohModel(A=A, B=p.s * p.P * p.R * E, E=E, Ts=Ts, x_e=p.x_e)


def step_exact(st: TclState, u: int, p: TclParams, dt: float) -> TclState:
    """Advance one load by ``dt`` hours with the switch held at ``u``."""
    z = make_zoh(p, dt)
    return TclState(x=z.step(st.x, u), u=u, t=st.t + dt)


def sequence_cost(x0: float, seq, ref_traj, zoh: ZohModel, cfg: MpcConfig) -> float:
    """Horizon cost of one binary control sequence started from ``x0``."""
    cost = 0.0
    x = x0
    for k in range(cfg.M):
        x = zoh.A * x + zoh.B * seq[k] + zoh.E * zoh.x_e
        r = ref_traj[k]
        e = x - r
        viol = max(0.0, r - cfg.band_lo - x) + max(0.0, x - r - cfg.band_hi)
        cost += cfg.Q_mpc * e * e + cfg.R_mpc * seq[k] + cfg.violation_penalty * viol * viol
    return cost


def mpc_plan(st: TclState, ref_traj, zoh: ZohModel, cfg: MpcConfig):
    """Return the optimal sequence and its cost.

    Sequences are visited in lexicographic order and only a strictly lower
    cost replaces the incumbent, so ties resolve to the smallest sequence.
    """
    if cfg.M > MAX_HORIZON:
        raise HorizonTooLargeError(f"M={cfg.M} exceeds the enumeration limit {MAX_HORIZON}")
    if len(ref_traj) != cfg.M:
        raise ConfigError(f"reference has {len(ref_traj)} entries, horizon is {cfg.M}")
    best_seq, best_cost = None, math.inf
    for seq in itertools.product((0, 1), repeat=cfg.M):
        c = sequence_cost(st.x, seq, ref_traj, zoh, cfg)
        if c < best_cost:
            best_seq, best_cost = seq, c
    return best_seq, best_cost


def mpc_solve(st: TclState, ref_traj, zoh: ZohModel, cfg: MpcConfig) -> int:
    """First control of the optimal horizon sequence (receding horizon)."""
    return mpc_plan(st, ref_traj, zoh, cfg)[0][0]


class PiecewiseConstantSignal:
    """Right-continuous step signal defined by knot times and values.

    Queries before the first knot return the first value, which is how
    pre-history is handled for delayed references.
    """

    def __init__(self, times, values):
        times = [float(t) for t in times]
        values = [float(v) for v in values]
        if not times or len(times) != len(values):
            raise ConfigError("signal needs matching, nonempty times and values")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ConfigError("signal knots must be sorted in time")
        self._times = times
        self._values = values
        self._refresh()

    def _refresh(self):
        self._t_arr = np.asarray(self._times)
        self._v_arr = np.asarray(self._values)

    def append(self, t: float, value: float):
        if t < self._times[-1]:
            raise ConfigError("appended knot precedes the last knot")
        self._times.append(float(t))
        self._values.append(float(value))
        self._refresh()

    @property
    def knots(self):
        return list(zip(self._times, self._values))

    def __call__(self, t):
        idx = np.searchsorted(self._t_arr, t, side="right") - 1
        out = self._v_arr[np.clip(idx, 0, None)]
        return out if np.ndim(out) else float(out)


def desync_reference(ref, cfg: MpcConfig, now: float, Ts: float) -> np.ndarray:
    """Delayed reference samples at now - delay + k*Ts for k = 1..M."""
    k = np.arange(1, cfg.M + 1)
    return np.asarray(ref(now - cfg.ref_delay + k * Ts), dtype=float)


@nb.njit(cache=True)
def mpc_batch(x, A, B, E, x_e, R_mpc, ref, Q, M, band_lo, band_hi, penalty):
    """First controls for many loads at once.

    Row ``i`` of ``ref`` is load ``i``'s horizon reference. Costs are summed in
    the same order as ``sequence_cost`` and ties keep the earliest sequence.
    """
    n = x.shape[0]
    out = np.zeros(n, dtype=np.int8)
    nseq = 1 << M
    for i in range(n):
        best = np.inf
        best_u = 0
        for q in range(nseq):
            xi = x[i]
            c = 0.0
            for k in range(M):
                uk = (q >> (M - 1 - k)) & 1
                xi = A[i] * xi + B[i] * uk + E[i] * x_e[i]
                r = ref[i, k]
                e = xi - r
                viol = max(0.0, r - band_lo - xi) + max(0.0, xi - r - band_hi)
                c += Q * e * e + R_mpc[i] * uk + penalty * viol * viol
            if c < best:
                best = c
                best_u = (q >> (M - 1)) & 1
        out[i] = best_u
    return out
