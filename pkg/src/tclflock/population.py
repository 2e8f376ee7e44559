"""Heterogeneous load populations: sampling, stepping, binning, switching flux."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .fpe import DensityField, Grid
from .tcl_agent import MpcConfig, TclParams, make_zoh, mpc_batch

OFF_TO_ON = 1
ON_TO_OFF = -1


@dataclass(frozen=True)
class PopulationSpec:
    """Distribution of per-load parameters.

    Capacitance and MPC effort weight are truncated normals; the reference
    delay (hours) is uniform on [0, delay_hi]. Everything else comes from the
    ``base`` and ``mpc`` templates.
    """

    N: int = 1000
    C_mean: float = 10.0
    C_std: float = 3.0
    C_lo: float = 4.0
    C_hi: float = 16.0
    Rmpc_mean: float = 10.0
    Rmpc_std: float = 2.0
    Rmpc_lo: float = 6.0
    Rmpc_hi: float = 14.0
    delay_hi: float = 5.0
    base: TclParams = field(default_factory=TclParams)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    seed: int = 0

    def __post_init__(self):
        if self.N < 0:
            raise ConfigError(f"population size must be nonnegative, got {self.N}")
        if not self.C_lo > 0:
            raise ConfigError("capacitance lower bound must be positive")
        if self.C_std < 0 or self.Rmpc_std < 0 or self.delay_hi < 0:
            raise ConfigError("spreads and delay bound must be nonnegative")


def _streams(seed: int):
    """Independent generators for capacitance, effort weight, delay, initial state."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def truncated_normal(rng, mean, std, lo, hi, n) -> np.ndarray:
    """Rejection sampling from N(mean, std^2) restricted to [lo, hi]."""
    if not lo < hi:
        raise ConfigError(f"degenerate truncation interval [{lo}, {hi}]")
    if std == 0:
        if not lo <= mean <= hi:
            raise ConfigError(f"mean {mean} outside [{lo}, {hi}] with zero spread")
        return np.full(n, float(mean))
    out = np.empty(0)
    while out.size < n:
        draw = rng.normal(mean, std, size=max(2 * (n - out.size), 16))
        out = np.concatenate([out, draw[(draw >= lo) & (draw <= hi)]])
    return out[:n]


def sample_arrays(spec: PopulationSpec):
    """Per-load (C, R_mpc, delay) arrays, deterministic in ``spec.seed``."""
    g_c, g_r, g_d, _ = _streams(spec.seed)
    C = truncated_normal(g_c, spec.C_mean, spec.C_std, spec.C_lo, spec.C_hi, spec.N)
    R_mpc = truncated_normal(g_r, spec.Rmpc_mean, spec.Rmpc_std, spec.Rmpc_lo, spec.Rmpc_hi, spec.N)
    delay = g_d.uniform(0.0, spec.delay_hi, size=spec.N)
    return C, R_mpc, delay


def sample_population(spec: PopulationSpec):
    """Lists of per-load ``TclParams`` and ``MpcConfig``."""
    C, R_mpc, delay = sample_arrays(spec)
    params = [replace(spec.base, C=float(c)) for c in C]
    mpcs = [replace(spec.mpc, R_mpc=float(r), ref_delay=float(d)) for r, d in zip(R_mpc, delay)]
    return params, mpcs


@dataclass
class Population:
    """Array-of-loads state sharing one MPC sampling period ``Ts`` (h).

    Physical parameters other than C are common to all loads.
    """

    base: TclParams
    mpc: MpcConfig
    C: np.ndarray
    R_mpc: np.ndarray
    delay: np.ndarray
    Ts: float
    x: np.ndarray
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        zoh = [make_zoh(replace(self.base, C=float(c)), self.Ts) for c in self.C]
        self._A = np.array([z.A for z in zoh], dtype=float)
        self._B = np.array([z.B for z in zoh], dtype=float)
        self._E = np.array([z.E for z in zoh], dtype=float)
        self._xe = np.full(self.N, self.base.x_e)
        self.u = np.asarray(self.u, dtype=np.int8)
        self.x = np.asarray(self.x, dtype=float)

    @property
    def N(self) -> int:
        return int(self.C.size)

    @property
    def n_on(self) -> int:
        return int(np.sum(self.u))

    @classmethod
    def from_spec(cls, spec: PopulationSpec, Ts: float, x_ref0: float, half_width: float = 0.5):
        """Sample a population and its initial state.

        Temperatures are uniform in x_ref0 +/- half_width and each load is ON
        with the steady duty ratio at x_ref0 of the nominal model.
        """
        C, R_mpc, delay = sample_arrays(spec)
        rng = _streams(spec.seed)[3]
        x = rng.uniform(x_ref0 - half_width, x_ref0 + half_width, size=spec.N)
        duty = spec.base.duty_ratio(x_ref0)
        u = (rng.random(spec.N) < duty).astype(np.int8)
        return cls(spec.base, spec.mpc, C, R_mpc, delay, Ts, x, u)

    def snapshot(self):
        return self.x.copy(), self.u.copy()


@dataclass
class SwitchEvents:
    """Switching events as parallel arrays: decision time (h), temperature, direction."""

    t: np.ndarray = field(default_factory=lambda: np.empty(0))
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    direction: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int8))

    def __len__(self):
        return int(self.t.size)

    @property
    def net(self) -> int:
        """OFF->ON minus ON->OFF."""
        return int(np.sum(self.direction, dtype=np.int64))

    @classmethod
    def concat(cls, parts) -> "SwitchEvents":
        parts = list(parts)
        if not parts:
            return cls()
        return cls(
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.x for p in parts]),
            np.concatenate([p.direction for p in parts]).astype(np.int8),
        )

    def shifted(self, dx: float) -> "SwitchEvents":
        """Same events with temperatures offset by ``dx``."""
        return SwitchEvents(self.t, self.x + dx, self.direction)


@dataclass
class SwitchFlux:
    """Binned switching source for one control period.

    ``counts`` holds the integer net OFF->ON counts per bin, ``values`` the
    density rate counts / (dx * dt) in loads/degC/h.
    """

    grid: Grid
    counts: np.ndarray
    dt: float

    @property
    def values(self) -> np.ndarray:
        return self.counts / (self.grid.dx * self.dt)

    @property
    def net(self) -> int:
        return int(np.sum(self.counts))

    @classmethod
    def zero(cls, grid: Grid, dt: float) -> "SwitchFlux":
        return cls(grid, np.zeros(grid.Nx, dtype=np.int64), dt)


def record_flux(events: SwitchEvents, grid: Grid, dt: float) -> SwitchFlux:
    if not dt > 0:
        raise ConfigError(f"flux period must be positive, got {dt}")
    counts = np.zeros(grid.Nx, dtype=np.int64)
    if len(events):
        np.add.at(counts, grid.locate(events.x), events.direction.astype(np.int64))
    return SwitchFlux(grid, counts, dt)


def bin_counts(x, u, grid: Grid):
    """Integer ON and OFF counts per bin, clamping out-of-range temperatures."""
    j = grid.locate(x)
    u = np.asarray(u)
    on = np.bincount(j[u == 1], minlength=grid.Nx).astype(np.int64)
    off = np.bincount(j[u == 0], minlength=grid.Nx).astype(np.int64)
    return on, off


def bin_density(x, u, grid: Grid, t: float = 0.0) -> DensityField:
    """Bin agent temperatures ``x`` with switch states ``u`` into a field."""
    on, off = bin_counts(x, u, grid)
    f = DensityField(grid, on / grid.dx, off / grid.dx, t)
    f.on_counts, f.off_counts = on, off
    return f


def advance_population(pop: Population, ref_signal, dt_ctrl: float, observe=None):
    """Run every load's MPC and exact step for one control period.

    ``ref_signal`` maps times in hours to the broadcast reference. Each
    switch is stamped with the decision time and the temperature at which
    the decision was taken. ``observe(pop)`` is called after each sub-step.
    Returns the advanced population (mutated in place) and the events.
    """
    nsub = int(round(dt_ctrl / pop.Ts))
    if nsub < 1 or abs(nsub * pop.Ts - dt_ctrl) > 1e-9 * dt_ctrl:
        raise ConfigError(f"control period {dt_ctrl} is not a multiple of Ts={pop.Ts}")
    parts = []
    cfg = pop.mpc
    ks = np.arange(1, cfg.M + 1) * pop.Ts
    t0 = pop.t
    for m in range(nsub):
        pop.t = t0 + m * pop.Ts
        if pop.N:
            times = pop.t - pop.delay[:, None] + ks[None, :]
            ref = np.ascontiguousarray(ref_signal(times), dtype=float)
            u_new = mpc_batch(
                pop.x, pop._A, pop._B, pop._E, pop._xe, pop.R_mpc, ref,
                float(cfg.Q_mpc), int(cfg.M), float(cfg.band_lo), float(cfg.band_hi),
                float(cfg.violation_penalty),
            )
            changed = np.nonzero(u_new != pop.u)[0]
            if changed.size:
                parts.append(SwitchEvents(
                    np.full(changed.size, pop.t),
                    pop.x[changed].copy(),
                    np.where(u_new[changed] == 1, OFF_TO_ON, ON_TO_OFF).astype(np.int8),
                ))
            pop.x = pop._A * pop.x + pop._B * u_new + pop._E * pop._xe
            pop.u = u_new
        pop.t = t0 + (m + 1) * pop.Ts
        if observe is not None:
            observe(pop)
    return pop, SwitchEvents.concat(parts)


def aggregate_power(field: DensityField, p: TclParams, a: float, b: float):
    """Weighted output y and plain electric power (kW) of the ON density."""
    if a == 0:
        raise ConfigError("output weight a must be nonzero")
    dx = field.grid.dx
    k = p.P / p.eta
    y = k * float(np.sum((a * field.grid.centers + b) * field.w) * dx)
    plain = k * float(np.sum(field.w) * dx)
    return y, plain
