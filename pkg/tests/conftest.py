import dataclasses

import pytest

from tclflock.scenario import load_config, run_scenario
from tclflock.tcl_agent import TclParams

_VERDICTS = {}


@pytest.fixture(scope="session")
def table1():
    return TclParams(R=2.0, C=10.0, P=14.0, x_e=32.0, s=-1, eta=2.5)


@pytest.fixture
def verdict():
    """Record an acceptance outcome, print it, then assert it."""

    def record(key, title, ok, detail):
        _VERDICTS[key] = (title, bool(ok), detail)
        print(f"[{key}] {title}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, f"{title}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS, key=lambda k: (int(k.rstrip("ab")), k)):
        title, ok, detail = _VERDICTS[key]
        terminalreporter.write_line(f"criterion {key:>3} {'PASS' if ok else 'FAIL'}  {title} -- {detail}")


def _with_n(cfg, n):
    return dataclasses.replace(cfg, population=dataclasses.replace(cfg.population, N=n))


@pytest.fixture(scope="session")
def step_run():
    return run_scenario(load_config("fig4_step"))


@pytest.fixture(scope="session")
def step_run_small():
    return run_scenario(_with_n(load_config("fig4_step"), 200))


@pytest.fixture(scope="session")
def desync_run():
    return run_scenario(load_config("fig2_desync"))


@pytest.fixture(scope="session")
def agent_record():
    cfg = dataclasses.replace(load_config("fig3_beta"), mode="agents_only")
    return run_scenario(cfg)["_trace"].record
