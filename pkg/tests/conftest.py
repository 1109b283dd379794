import time

import pytest

from lifecycle_sim.config import builtin_config
from lifecycle_sim.simulation import run_simulation

ACCEPTANCE_LINES: list[str] = []


def _timed(cfg):
    t0 = time.perf_counter()
    result = run_simulation(cfg)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def annual_scarey():
    return _timed(builtin_config("annual", policy="scarey"))


@pytest.fixture(scope="session")
def annual_always_on():
    return _timed(builtin_config("annual", policy="always_on"))


@pytest.fixture(scope="session")
def annual_always_on_t4g():
    return _timed(builtin_config("annual", policy="always_on", topology={"cloud_model": "t4g.2xlarge"}))


@pytest.fixture(scope="session")
def annual_cloud_only():
    return _timed(builtin_config("annual", policy="cloud_only"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
