"""Finite-volume solver for the coupled ON/OFF Fokker-Planck pair.

    w_t = beta w_xx - ((alpha_1 - u) w)_x + delta
    v_t = beta v_xx - ((alpha_0 - u) v)_x - delta

on a cell-centred grid with zero flux through both ends. Advection is
donor-cell upwind, diffusion is central, time stepping is forward Euler with
internal sub-steps chosen from a stability bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import ConfigError, ShapeError
from .tcl_agent import TclParams, drift_off, drift_on

CFL_SAFETY = 0.9
CFL_EPS = 1e-12


@dataclass(frozen=True)
class Grid:
    x_lo: float
    x_hi: float
    Nx: int

    def __post_init__(self):
        if not self.x_hi > self.x_lo:
            raise ConfigError(f"need x_hi > x_lo, got [{self.x_lo}, {self.x_hi}]")
        if self.Nx < 4:
            raise ConfigError(f"need at least 4 cells, got {self.Nx}")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.Nx

    @property
    def centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.Nx) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        """Interior cell interfaces x_{j+1/2}, j = 0..Nx-2."""
        return self.x_lo + np.arange(1, self.Nx) * self.dx

    def locate(self, x) -> np.ndarray:
        """Bin index of each temperature, clamping outliers into the end cells."""
        j = np.floor((np.asarray(x, dtype=float) - self.x_lo) / self.dx).astype(np.int64)
        return np.clip(j, 0, self.Nx - 1)


def make_grid(x_lo: float, x_hi: float, Nx: int) -> Grid:
    return Grid(float(x_lo), float(x_hi), int(Nx))


@dataclass
class DensityField:
    """ON density ``w`` and OFF density ``v`` in loads per degC, at time ``t`` (h).

    Fields built by binning agents also carry the integer counts they came from.
    """

    grid: Grid
    w: np.ndarray
    v: np.ndarray
    t: float = 0.0
    on_counts: np.ndarray | None = field(default=None, repr=False)
    off_counts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.w.shape != (self.grid.Nx,) or self.v.shape != (self.grid.Nx,):
            raise ShapeError(f"fields must have shape ({self.grid.Nx},)")

    def mass_on(self) -> float:
        return float(np.sum(self.w) * self.grid.dx)

    def mass_off(self) -> float:
        return float(np.sum(self.v) * self.grid.dx)

    def total_mass(self) -> float:
        return self.mass_on() + self.mass_off()

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.w.copy(), self.v.copy(), self.t)

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> "DensityField":
        return cls(grid, np.zeros(grid.Nx), np.zeros(grid.Nx), t)


@dataclass(frozen=True)
class FpeParams:
    """Diffusivity ``beta`` (degC^2/h) and the load model supplying the drifts.

    ``zero_drift`` switches both drifts off; it exists for analytic tests.
    """

    beta: float
    p: TclParams
    zero_drift: bool = False

    def __post_init__(self):
        if not self.beta >= 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")

    def alpha_on(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x) if self.zero_drift else drift_on(x, self.p)

    def alpha_off(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x) if self.zero_drift else drift_off(x, self.p)


def cfl_dt(grid: Grid, params: FpeParams, u: float = 0.0) -> float:
    """Largest forward-Euler step that keeps the update monotone.

    Diffusion and advection restrict the step jointly:
    dt <= safety / (2 beta / dx^2 + max|alpha - u| / dx). When both rates
    vanish the bound is reported as safety * dx / eps.
    """
    dx = grid.dx
    xs = np.concatenate([grid.centers, grid.faces])
    speed = max(np.max(np.abs(params.alpha_on(xs) - u)), np.max(np.abs(params.alpha_off(xs) - u)))
    rate = 2.0 * params.beta / dx**2 + speed / dx
    if rate < CFL_EPS / dx:
        return CFL_SAFETY * dx / CFL_EPS
    return CFL_SAFETY / rate


@nb.njit(cache=True)
def _substeps(w, v, c1, c0, beta, dx, delta, h, n):
    """Apply ``n`` forward-Euler sub-steps of size ``h`` in place.

    ``c1`` and ``c0`` are the face velocities alpha - u for w and v.
    """
    nx = w.shape[0]
    fw = np.zeros(nx + 1)
    fv = np.zeros(nx + 1)
    for _ in range(n):
        for j in range(nx - 1):
            up = w[j] if c1[j] > 0.0 else w[j + 1]
            fw[j + 1] = beta * (w[j + 1] - w[j]) / dx - c1[j] * up
            up = v[j] if c0[j] > 0.0 else v[j + 1]
            fv[j + 1] = beta * (v[j + 1] - v[j]) / dx - c0[j] * up
        for j in range(nx):
            w[j] += h * ((fw[j + 1] - fw[j]) / dx + delta[j])
            v[j] += h * ((fv[j + 1] - fv[j]) / dx - delta[j])


def _delta_values(delta, grid: Grid) -> np.ndarray:
    if delta is None:
        return np.zeros(grid.Nx)
    if isinstance(delta, np.ndarray):
        if delta.shape != (grid.Nx,):
            raise ShapeError(f"flux has shape {delta.shape}, grid has {grid.Nx} cells")
        return np.ascontiguousarray(delta, dtype=float)
    if delta.grid != grid:
        raise ShapeError("switching flux lives on a different grid")
    return np.ascontiguousarray(delta.values, dtype=float)


def substep_count(dt: float, grid: Grid, params: FpeParams, u: float) -> int:
    return max(1, math.ceil(dt / cfl_dt(grid, params, u)))


def fpe_step(f: DensityField, params: FpeParams, u: float, delta, dt: float) -> DensityField:
    """Advance the pair by ``dt`` hours at set-point rate ``u``.

    ``delta`` is a ``SwitchFlux`` on the same grid, or None for no switching.
    The step is split into equal sub-steps that respect ``cfl_dt``.
    """
    grid = f.grid
    d = _delta_values(delta, grid)
    n = substep_count(dt, grid, params, u)
    faces = grid.faces
    c1 = params.alpha_on(faces) - u
    c0 = params.alpha_off(faces) - u
    w = f.w.copy()
    v = f.v.copy()
    _substeps(w, v, c1, c0, float(params.beta), grid.dx, d, dt / n, n)
    return DensityField(grid, w, v, f.t + dt)


def fpe_solve(f0: DensityField, params: FpeParams, u_series, delta_series, dt_ctrl: float, steps: int):
    """Trajectory [f0, f1, ..., f_steps] at control-period resolution.

    ``delta_series`` may be None (no switching) or a sequence of fluxes.
    """
    u_series = np.asarray(u_series, dtype=float)
    if u_series.shape != (steps,):
        raise ShapeError(f"expected {steps} set-point rates, got {u_series.shape}")
    if delta_series is not None and len(delta_series) != steps:
        raise ShapeError(f"expected {steps} switching fluxes, got {len(delta_series)}")
    out = [f0]
    f = f0
    for k in range(steps):
        d = None if delta_series is None else delta_series[k]
        f = fpe_step(f, params, float(u_series[k]), d, dt_ctrl)
        out.append(f)
    return out
