"""Agent and density-level simulation of thermostatically controlled load populations."""

from .control import ControllerState, control_u, damping_phi, error_bound, error_update, gamma_of_flux
from .estimation import RunRecord, estimate_beta, load_archive, nme, save_archive
from .fpe import DensityField, FpeParams, Grid, cfl_dt, fpe_solve, fpe_step, make_grid
from .population import PopulationSpec, SwitchFlux, aggregate_power, bin_density, record_flux
from .tcl_agent import MpcConfig, TclParams, TclState, ZohModel, make_zoh, mpc_solve, step_exact

__all__ = [
    "ControllerState", "DensityField", "FpeParams", "Grid", "MpcConfig", "PopulationSpec",
    "RunRecord", "SwitchFlux", "TclParams", "TclState", "ZohModel", "aggregate_power",
    "bin_density", "cfl_dt", "control_u", "damping_phi", "error_bound", "error_update",
    "estimate_beta", "fpe_solve", "fpe_step", "gamma_of_flux", "load_archive", "make_grid",
    "make_zoh", "mpc_solve", "nme", "record_flux", "save_archive", "step_exact",
]
