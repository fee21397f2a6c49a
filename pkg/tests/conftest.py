import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from confens import scenarios as sc
from confens.dynamics import evolve

settings.register_profile("confens", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("confens")


@pytest.fixture(scope="session")
def sg0():
    """SG ensemble at t = 0 on a grid that also covers t = 1."""
    return sc.sg_ensemble(n=64)


@pytest.fixture(scope="session")
def sg1(sg0):
    return evolve(sg0, sc.SG_HAMILTONIAN, 1.0)


@pytest.fixture(scope="session")
def shifted0():
    """SG with the classical ensemble centred at x = 1."""
    return sc.shifted_sg_ensemble(1.0, n=64, times=(0.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    # repeat the per-criterion lines from test_acceptance in criterion order
    mod = sys.modules.get("test_acceptance")
    lines = sorted(getattr(mod, "LINES", []), key=lambda s: int(s.split()[2]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
