import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tclflock.errors import ConfigError, HorizonTooLargeError, InvalidPeriodError
from tclflock.tcl_agent import (
    MpcConfig,
    PiecewiseConstantSignal,
    TclParams,
    TclState,
    desync_reference,
    drift_off,
    drift_on,
    make_zoh,
    mpc_batch,
    mpc_plan,
    mpc_solve,
    sequence_cost,
    step_exact,
)


def test_drift_on_values(table1):
    assert drift_on(4.0, table1) == pytest.approx(0.0, abs=1e-15)
    assert drift_on(20.0, table1) == pytest.approx(-0.8)


def test_drift_on_heating_equilibrium():
    p = TclParams(R=2.0, C=10.0, P=1e-300, x_e=10.0, s=1)
    assert drift_on(10.0, p) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("x, rate", [(32.0, 0.0), (20.0, 0.6), (44.0, -0.6)])
def test_drift_off_values(table1, x, rate):
    assert drift_off(x, table1) == pytest.approx(rate, abs=1e-15)


def test_drift_is_vectorized(table1):
    xs = np.array([20.0, 32.0])
    np.testing.assert_allclose(drift_off(xs, table1), [0.6, 0.0])


def test_zoh_table1(table1):
    z = make_zoh(table1, 0.1)
    assert z.A == pytest.approx(0.9950125, abs=1e-7)
    assert z.E == pytest.approx(0.0049875, abs=1e-7)
    assert z.B == pytest.approx(-0.1396505, abs=1e-7)
    assert z.A + z.E == 1.0


def test_zoh_small_period_limit(table1):
    z = make_zoh(table1, 1e-12)
    assert z.A == pytest.approx(1.0)
    assert abs(z.B) < 1e-9 and abs(z.E) < 1e-12


@pytest.mark.parametrize("Ts", [0.0, -1.0])
def test_zoh_rejects_nonpositive_period(table1, Ts):
    with pytest.raises(InvalidPeriodError):
        make_zoh(table1, Ts)


@given(R=st.floats(0.5, 5), C=st.floats(1, 20), Ts=st.floats(1e-3, 10))
def test_zoh_coefficients_sum_to_one(R, C, Ts):
    z = make_zoh(TclParams(R=R, C=C), Ts)
    assert z.A + z.E == 1.0
    assert 0 < z.A < 1


def test_step_exact_fixed_point(table1):
    out = step_exact(TclState(x=32.0, u=0), 0, table1, 3.7)
    assert out.x == pytest.approx(32.0, abs=1e-12)
    assert out.t == pytest.approx(3.7)


def test_step_exact_value(table1):
    out = step_exact(TclState(x=20.5, u=0), 0, table1, 0.1)
    assert out.x == pytest.approx(0.9950125 * 20.5 + 0.0049875 * 32, abs=1e-5)
    assert out.x == pytest.approx(20.5574, abs=1e-4)


@given(x=st.floats(10, 30), u=st.sampled_from([0, 1]), dt=st.floats(1e-3, 2), n=st.integers(2, 8))
def test_step_exact_semigroup(table1, x, u, dt, n):
    s = TclState(x=x, u=u)
    for _ in range(n):
        s = step_exact(s, u, table1, dt)
    once = step_exact(TclState(x=x, u=u), u, table1, n * dt)
    assert s.x == pytest.approx(once.x, rel=1e-12)


def test_state_rejects_bad_switch():
    with pytest.raises(ConfigError):
        TclState(x=20.0, u=2)


def test_params_validation():
    with pytest.raises(ConfigError):
        TclParams(R=-1.0)
    with pytest.raises(ConfigError):
        TclParams(s=0)


def test_mpc_hand_enumeration(table1):
    z = make_zoh(table1, 0.1)
    cfg = MpcConfig(Q_mpc=100, R_mpc=10, M=1)
    st0 = TclState(x=20.5)
    c_off = sequence_cost(st0.x, (0,), [20.5], z, cfg)
    c_on = sequence_cost(st0.x, (1,), [20.5], z, cfg)
    assert c_off == pytest.approx(0.329, abs=1e-3)
    assert c_on == pytest.approx(10.678, abs=1e-3)
    assert mpc_solve(st0, [20.5], z, cfg) == 0


def test_mpc_effort_only_prefers_off(table1):
    z = make_zoh(table1, 0.1)
    cfg = MpcConfig(Q_mpc=0, R_mpc=5, M=4, band_lo=50, band_hi=50)
    assert mpc_solve(TclState(x=22.0), [22.0] * 4, z, cfg) == 0


def test_mpc_tie_prefers_off(table1):
    z = make_zoh(table1, 0.1)
    cfg = MpcConfig(Q_mpc=0, R_mpc=0, M=3, band_lo=50, band_hi=50, violation_penalty=0)
    seq, cost = mpc_plan(TclState(x=20.0), [20.0] * 3, z, cfg)
    assert seq == (0, 0, 0) and cost == 0.0


def test_mpc_horizon_guard(table1):
    z = make_zoh(table1, 0.1)
    with pytest.raises(HorizonTooLargeError):
        mpc_solve(TclState(x=20.0), [20.0] * 21, z, MpcConfig(M=21))


@pytest.mark.parametrize("C", [6.0, 10.0, 14.0])
@pytest.mark.parametrize("R_mpc", [6.0, 10.0, 14.0])
def test_deadband_pull(C, R_mpc):
    p = TclParams(C=C)
    z = make_zoh(p, 0.1)
    cfg = MpcConfig(R_mpc=R_mpc)
    ref = [20.0] * cfg.M
    assert mpc_solve(TclState(x=20.7), ref, z, cfg) == 1
    assert mpc_solve(TclState(x=19.3), ref, z, cfg) == 0


def _oracle_min(x0, ref, zoh, cfg):
    """Recursive enumeration with an independent accumulation loop."""

    def walk(x, k, acc):
        if k == cfg.M:
            return acc
        best = math.inf
        for u in (0, 1):
            xn = zoh.A * x + zoh.B * u + zoh.E * zoh.x_e
            e = xn - ref[k]
            viol = max(0.0, ref[k] - cfg.band_lo - xn) + max(0.0, xn - ref[k] - cfg.band_hi)
            best = min(best, walk(xn, k + 1, acc + (cfg.Q_mpc * e * e + cfg.R_mpc * u + cfg.violation_penalty * viol * viol)))
        return best

    return walk(x0, 0, 0.0)


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(17, 24), r=st.floats(18, 22), C=st.floats(4, 16), R_mpc=st.floats(0, 20),
    Q=st.floats(0, 200), M=st.integers(1, 5), Ts=st.floats(0.01, 1.0),
)
def test_mpc_matches_bruteforce(x, r, C, R_mpc, Q, M, Ts):
    z = make_zoh(TclParams(C=C), Ts)
    cfg = MpcConfig(Q_mpc=Q, R_mpc=R_mpc, M=M)
    ref = [r] * M
    seq, cost = mpc_plan(TclState(x=x), ref, z, cfg)
    assert cost == _oracle_min(x, ref, z, cfg)
    assert all(cost <= sequence_cost(x, s, ref, z, cfg) for s in itertools.product((0, 1), repeat=M))


def test_batch_kernel_matches_scalar():
    rng = np.random.default_rng(3)
    n, M = 300, 5
    C = rng.uniform(4, 16, n)
    zs = [make_zoh(TclParams(C=c), 0.1) for c in C]
    x = rng.uniform(18.5, 21.5, n)
    R_mpc = rng.uniform(6, 14, n)
    ref = np.repeat(rng.uniform(19, 21, (n, 1)), M, axis=1)
    ref[:, 3:] -= 0.5
    out = mpc_batch(
        x, np.array([z.A for z in zs]), np.array([z.B for z in zs]), np.array([z.E for z in zs]),
        np.full(n, 32.0), R_mpc, ref, 100.0, M, 0.5, 0.5, 1e6,
    )
    for i in range(n):
        cfg = MpcConfig(R_mpc=R_mpc[i], M=M)
        assert out[i] == mpc_solve(TclState(x=x[i]), list(ref[i]), zs[i], cfg)


def test_mpc_deterministic(table1):
    z = make_zoh(table1, 0.1)
    cfg = MpcConfig()
    ref = [20.0, 20.0, 19.5, 19.5, 19.5]
    assert mpc_plan(TclState(x=20.2), ref, z, cfg) == mpc_plan(TclState(x=20.2), ref, z, cfg)


def test_desync_reference_constant():
    sig = PiecewiseConstantSignal([0.0], [20.5])
    out = desync_reference(sig, MpcConfig(ref_delay=3.3), 10.0, 0.1)
    np.testing.assert_array_equal(out, np.full(5, 20.5))


def test_desync_reference_step_not_yet_visible():
    sig = PiecewiseConstantSignal([0.0, 15.0], [20.5, 19.0])
    out = desync_reference(sig, MpcConfig(ref_delay=2.0), 16.0, 0.01)
    np.testing.assert_array_equal(out, np.full(5, 20.5))


def test_desync_reference_zero_delay_is_plain_sampling():
    sig = PiecewiseConstantSignal([0.0, 1.0], [20.5, 19.0])
    out = desync_reference(sig, MpcConfig(ref_delay=0.0), 0.8, 0.1)
    expected = [sig(0.8 + k * 0.1) for k in range(1, 6)]
    np.testing.assert_array_equal(out, expected)
    assert list(out) == [20.5, 19.0, 19.0, 19.0, 19.0]


def test_signal_prehistory_holds_first_value():
    sig = PiecewiseConstantSignal([5.0, 6.0], [1.0, 2.0])
    assert sig(-100.0) == 1.0 and sig(6.0) == 2.0


def test_mpc_config_validation():
    with pytest.raises(ConfigError):
        MpcConfig(M=0)
    with pytest.raises(ConfigError):
        MpcConfig(band_lo=0.0)
    with pytest.raises(ConfigError):
        MpcConfig(ref_delay=-1.0)
