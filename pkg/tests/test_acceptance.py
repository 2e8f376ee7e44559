"""Acceptance checks, one verdict line per criterion (see the terminal summary)."""

import itertools
import math
import time

import numpy as np

from tclflock.control import error_update
from tclflock.estimation import DEFAULT_BETAS, estimate_beta, replay_counts
from tclflock.fpe import DensityField, FpeParams, fpe_solve, fpe_step, make_grid
from tclflock.population import bin_density
from tclflock.scenario import bound_audit, load_config
from tclflock.tcl_agent import MpcConfig, TclParams, TclState, make_zoh, mpc_plan, sequence_cost


def test_c1_mass_conservation(verdict):
    p = TclParams()
    g = make_grid(14, 26, 120)
    rng = np.random.default_rng(0)
    f0 = bin_density(rng.uniform(20, 21, 1000), rng.integers(0, 2, 1000), g)
    params = FpeParams(0.1, p)
    u_mean = float(np.mean(params.alpha_on(g.centers)))
    fpe_step(f0, params, u_mean, None, 1.0)  # compile outside the timed region
    start = time.perf_counter()
    traj = fpe_solve(f0, params, np.full(10_000, u_mean), None, 1.0, 10_000)
    wall = time.perf_counter() - start
    m0 = f0.total_mass()
    rel = max(abs(f.total_mass() - m0) / m0 for f in traj)
    verdict("1", "mass conservation, 1e4 unforced steps", rel <= 1e-10 and wall < 5.0,
            f"max rel drift {rel:.2e}, {wall:.2f} s")


def test_c2_forced_mass_ledger(verdict, step_run):
    worst = float(np.max(step_run["_trace"].ledger_rel_err))
    verdict("2", "forced mass ledger every period", worst <= 1e-12, f"max rel err {worst:.2e}")


def _closed_form_error(e0, k0, gammas, dts):
    """Variation of constants for piecewise-constant disturbance, summed directly."""
    t_end = float(np.sum(dts))
    edges = np.concatenate([[0.0], np.cumsum(dts)])
    val = e0 * math.exp(-k0 * t_end)
    scale = abs(val)
    for g, a, b in zip(gammas, edges[:-1], edges[1:]):
        term = g / k0 * (math.exp(-k0 * (t_end - b)) - math.exp(-k0 * (t_end - a)))
        val += term
        scale += abs(term)
    return val, scale


def test_c3_error_dynamics_oracle(verdict):
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        k0 = 10 ** rng.uniform(-2, 1)
        n = int(rng.integers(1, 20))
        gammas = rng.uniform(-100, 100, n)
        dts = rng.uniform(0.01, 1.0, n)
        e0 = rng.uniform(-10, 10)
        e = e0
        for g, dt in zip(gammas, dts):
            e = error_update(e, k0, g, dt)
        exact, scale = _closed_form_error(e0, k0, gammas, dts)
        worst = max(worst, abs(e - exact) / max(abs(exact), scale))
    verdict("3", "error dynamics vs closed form", worst <= 1e-12, f"max rel err {worst:.2e} over 100 draws")


def test_c4_bound_audit(verdict, step_run):
    cfg = load_config("fig4_step")
    audit = bound_audit(step_run["_trace"], cfg)
    wall = step_run["wall_time_s"]
    verdict("4", "error bound audit (N=1000, t_end=30)", audit["passed"] and wall < 120,
            f"worst |e|/bound {audit['worst_ratio']:.4f}, Gamma_inf {audit['gamma_inf']:.0f}, {wall:.1f} s")


def _steady_error(run):
    cols = run["_trace"].columns
    mask = (cols["t"] >= 20 - 1e-9) & (cols["t"] <= 30 + 1e-9)
    return float(np.max(np.abs(cols["e_normalized"][mask])))


def test_c5_step_tracking(verdict, step_run):
    err = _steady_error(step_run)
    verdict("5", "step tracking N=1000 (< 2.5%)", err < 0.025, f"max |e| {100 * err:.2f}% of N P/eta")


def test_c5_step_tracking_small(verdict, step_run_small):
    err = _steady_error(step_run_small)
    verdict("5b", "step tracking N=200 (< 4%)", err < 0.04, f"max |e| {100 * err:.2f}% of N P/eta")


def test_c6_deadband(verdict, step_run, desync_run):
    tr = step_run["_trace"]
    closed = tr.deadband_ok / tr.deadband_total
    ds = desync_run["_traces"]["desync"]
    opened = ds.deadband_ok / ds.deadband_total
    verdict("6", "deadband compliance >= 99%", closed >= 0.99 and opened >= 0.99,
            f"closed loop {100 * closed:.3f}%, desync step {100 * opened:.3f}%")


def test_c7_desync_peak(verdict, desync_run):
    ratio = desync_run["peak_ratio"]
    verdict("7", "desync peak ratio <= 0.8", ratio <= 0.8,
            f"{desync_run['peak_desync']:.3f}/{desync_run['peak_uniform']:.3f} = {ratio:.3f}")


def test_c8_self_consistency(verdict, agent_record):
    rec = agent_record
    found = {}
    start = time.perf_counter()
    for beta_true in (0.02, 0.1, 0.18):
        on, off = replay_counts(rec, beta_true)
        rec_true = type(rec)(rec.grid, rec.w0, rec.v0, rec.u_series, rec.delta_counts, on, off, rec.dt_ctrl, rec.p)
        found[beta_true] = estimate_beta(rec_true, DEFAULT_BETAS)[0]
    wall = time.perf_counter() - start
    ok = all(abs(found[b] - b) < 1e-12 for b in found) and wall < 600
    verdict("8a", "beta recovery on solver-generated data", ok, f"{found}, {wall:.1f} s")


def test_c8_agent_data(verdict, agent_record):
    start = time.perf_counter()
    beta, curve = estimate_beta(agent_record, DEFAULT_BETAS)
    wall = time.perf_counter() - start
    b = np.array([c[0] for c in curve])
    e = np.array([c[1] for c in curve])
    low = np.ptp(e[b <= 0.1 + 1e-12])
    high = np.ptp(e[b >= 0.1 - 1e-12])
    ok = 0.05 <= beta <= 0.15 and low < high and wall < 600
    verdict("8b", "beta on agent data in [0.05, 0.15], flat below 0.1", ok,
            f"beta*={beta:.2f}, variation [0,0.1]={low:.4f} vs [0.1,0.2]={high:.4f}, {wall:.1f} s")


def _enumerate_min(x0, ref, zoh, cfg):
    best = math.inf
    for seq in itertools.product((0, 1), repeat=cfg.M):
        x, c = x0, 0.0
        for k, u in enumerate(seq):
            x = zoh.A * x + zoh.B * u + zoh.E * zoh.x_e
            e = x - ref[k]
            viol = max(0.0, ref[k] - cfg.band_lo - x) + max(0.0, x - ref[k] - cfg.band_hi)
            c += cfg.Q_mpc * e * e + cfg.R_mpc * u + cfg.violation_penalty * viol * viol
        best = min(best, c)
    return best


def test_c9_mpc_bruteforce(verdict):
    rng = np.random.default_rng(9)
    mismatches = 0
    for _ in range(1000):
        M = int(rng.integers(1, 6))
        p = TclParams(C=float(rng.uniform(4, 16)))
        zoh = make_zoh(p, float(rng.uniform(0.02, 1.0)))
        cfg = MpcConfig(Q_mpc=float(rng.uniform(0, 200)), R_mpc=float(rng.uniform(0, 20)), M=M)
        ref = list(rng.uniform(18.5, 21.5) + rng.normal(0, 0.3, M))
        x0 = float(rng.uniform(17.5, 22.5))
        seq, cost = mpc_plan(TclState(x=x0), ref, zoh, cfg)
        if cost != _enumerate_min(x0, ref, zoh, cfg) or cost != sequence_cost(x0, seq, ref, zoh, cfg):
            mismatches += 1
    verdict("9", "MPC equals brute-force minimum", mismatches == 0, f"{mismatches} mismatches in 1000 instances")


def test_c10_heat_kernel(verdict):
    g = make_grid(14, 26, 240)
    beta, t, sig = 0.1, 0.5, 0.5
    x = g.centers
    w0 = np.exp(-0.5 * ((x - 20) / sig) ** 2)
    f0 = DensityField(g, w0, np.zeros(g.Nx))
    f1 = fpe_step(f0, FpeParams(beta, TclParams(), zero_drift=True), 0.0, None, t)

    def var(w):
        m = np.sum(w * x) / np.sum(w)
        return np.sum(w * (x - m) ** 2) / np.sum(w)

    analytic = sig**2 + 2 * beta * t
    rel = abs(var(f1.w) - analytic) / analytic
    growth_rel = abs((var(f1.w) - var(w0)) - 2 * beta * t) / (2 * beta * t)
    verdict("10", "heat-kernel variance growth (Nx=240)", rel <= 0.02 and growth_rel <= 0.02,
            f"sigma^2 rel err {rel:.2e}, growth rel err {growth_rel:.2e}")
