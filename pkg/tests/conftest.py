import numpy as np
import pytest

from inls_lab import harness
from inls_lab.radial_core import make_grid


@pytest.fixture(scope="session")
def grid():
    return make_grid(60.0, 5999)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(30.0, 1499)


@pytest.fixture(scope="session")
def gs03():
    return harness.ground_state(0.3)


@pytest.fixture(scope="session")
def spec03():
    return harness.linear_spectrum(0.3)


@pytest.fixture(scope="session")
def gs05():
    return harness.ground_state(0.5)


@pytest.fixture(scope="session")
def small_gs():
    """Ground state at b = 0.3 on a coarse short grid, for evolution and algebra tests."""
    return harness.ground_state(0.3, 30.0, 1499)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_TRAPPED = {}


@pytest.fixture(scope="session")
def trapped_run():
    """(record, trajectory, frames) of the stable-manifold surrogate run, cached per (b, n)."""
    def get(b, n=5999):
        key = (b, n)
        if key not in _TRAPPED:
            cfg = harness.ExperimentConfig(b=b, epsilon=-0.02, data="trapped", n=n)
            _TRAPPED[key] = harness.run_experiment(cfg, keep_trajectory=True)
        return _TRAPPED[key]
    return get


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
