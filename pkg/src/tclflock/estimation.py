"""Grid-search estimation of the diffusivity from recorded runs.

A run record holds everything needed to replay the density model under the
same set-point rates and switching fluxes the agents produced. Each
candidate beta is replayed once, and the one whose ON/OFF counts best match
the agents wins.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .fpe import DensityField, FpeParams, Grid, fpe_step
from .tcl_agent import TclParams

ARCHIVE_VERSION = 1
DEFAULT_BETAS = tuple(np.round(np.linspace(0.0, 0.2, 21), 10))


@dataclass
class RunRecord:
    """Inputs and agent truth of one run at control-period resolution.

    Shapes: ``u_series`` (T,), ``delta_counts`` (T, Nx) net OFF->ON switches
    per bin, ``non_truth``/``noff_truth`` (T, Nx) agent counts per bin at the
    end of each period. ``dt_ctrl`` is in hours; ``p`` supplies the drifts.
    """

    grid: Grid
    w0: np.ndarray
    v0: np.ndarray
    u_series: np.ndarray
    delta_counts: np.ndarray
    non_truth: np.ndarray
    noff_truth: np.ndarray
    dt_ctrl: float
    p: TclParams

    def __post_init__(self):
        T, nx = len(self.u_series), self.grid.Nx
        for name in ("delta_counts", "non_truth", "noff_truth"):
            if np.shape(getattr(self, name)) != (T, nx):
                raise ShapeError(f"{name} must have shape ({T}, {nx})")
        if np.shape(self.w0) != (nx,) or np.shape(self.v0) != (nx,):
            raise ShapeError("initial fields must match the grid")

    @property
    def periods(self) -> int:
        return len(self.u_series)

    @property
    def N(self) -> int:
        return int(np.sum(self.non_truth[0]) + np.sum(self.noff_truth[0])) if self.periods else 0

    def delta_values(self, k: int) -> np.ndarray:
        return self.delta_counts[k] / (self.grid.dx * self.dt_ctrl)


def save_archive(path, rec: RunRecord, meta: dict | None = None) -> Path:
    """Write a self-describing ``.npz`` archive (arrays plus JSON metadata)."""
    path = Path(path)
    info = {
        "format": "tclflock-run-archive",
        "version": ARCHIVE_VERSION,
        "grid": asdict(rec.grid),
        "dt_ctrl_h": rec.dt_ctrl,
        "tcl": asdict(rec.p),
        "arrays": {
            "w0": "initial ON density, loads/degC",
            "v0": "initial OFF density, loads/degC",
            "u_series": "set-point rate per period, degC/h",
            "delta_counts": "net OFF->ON switches per period and bin",
            "non_truth": "agent ON count per period end and bin",
            "noff_truth": "agent OFF count per period end and bin",
        },
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh, w0=rec.w0, v0=rec.v0, u_series=rec.u_series, delta_counts=rec.delta_counts,
            non_truth=rec.non_truth, noff_truth=rec.noff_truth, info=np.array(json.dumps(info)),
        )
    return path


def load_archive(path):
    """Return (RunRecord, metadata dict)."""
    with np.load(path, allow_pickle=False) as z:
        info = json.loads(str(z["info"]))
        rec = RunRecord(
            grid=Grid(**info["grid"]),
            w0=z["w0"], v0=z["v0"], u_series=z["u_series"], delta_counts=z["delta_counts"],
            non_truth=z["non_truth"], noff_truth=z["noff_truth"],
            dt_ctrl=float(info["dt_ctrl_h"]), p=TclParams(**info["tcl"]),
        )
    return rec, info.get("meta", {})


def nme(fpe_on, fpe_off, truth_on, truth_off, N: float) -> float:
    """Normalized mean absolute count error.

    Inputs have shape (T,) for totals or (T, K) for per-bin counts; bins are
    summed, periods averaged, and the result divided by 2N.
    """
    arrs = [np.asarray(a, dtype=float) for a in (fpe_on, fpe_off, truth_on, truth_off)]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise ShapeError("count series must share one shape")
    if arrs[0].size == 0:
        raise ValueError("nme of an empty series")
    on_err = np.abs(arrs[0] - arrs[2])
    off_err = np.abs(arrs[1] - arrs[3])
    if on_err.ndim > 1:
        on_err = on_err.reshape(len(on_err), -1).sum(axis=1)
        off_err = off_err.reshape(len(off_err), -1).sum(axis=1)
    return float(np.mean(on_err + off_err) / (2.0 * N))


def replay_counts(rec: RunRecord, beta: float):
    """Model ON/OFF counts per bin at every period end, shape (T, Nx) each."""
    params = FpeParams(beta=float(beta), p=rec.p)
    f = DensityField(rec.grid, np.array(rec.w0, dtype=float), np.array(rec.v0, dtype=float))
    on = np.empty((rec.periods, rec.grid.Nx))
    off = np.empty_like(on)
    for k in range(rec.periods):
        f = fpe_step(f, params, float(rec.u_series[k]), rec.delta_values(k), rec.dt_ctrl)
        on[k] = f.w * rec.grid.dx
        off[k] = f.v * rec.grid.dx
    return on, off


def candidate_error(rec: RunRecord, beta: float) -> float:
    on, off = replay_counts(rec, beta)
    return nme(on, off, rec.non_truth, rec.noff_truth, rec.N)


def _worker(args):
    rec, beta = args
    return candidate_error(rec, beta)


def estimate_beta(rec: RunRecord, betas=DEFAULT_BETAS, workers: int = 1):
    """Grid search; returns (beta_star, [(beta, nme), ...]) in candidate order.

    Ties go to the smaller beta. Results do not depend on ``workers``.
    """
    betas = [float(b) for b in betas]
    if not betas:
        raise ValueError("no candidate diffusivities")
    if any(b < 0 for b in betas):
        raise ValueError("candidate diffusivities must be nonnegative")
    if workers > 1 and len(betas) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            errs = list(ex.map(_worker, [(rec, b) for b in betas]))
    else:
        errs = [candidate_error(rec, b) for b in betas]
    curve = list(zip(betas, errs))
    best = min(curve, key=lambda be: (be[1], be[0]))
    return best[0], curve
