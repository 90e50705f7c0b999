import numpy as np
import pytest
from hypothesis import settings

from robustdelay.history import HistoryIndex
from robustdelay.simulate import SimScenario, simulate

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_sim():
    """Two weeks on a ten-stop route; cheap enough for unit tests."""
    return simulate(SimScenario(stops=10, weeks=2, seed=3))


@pytest.fixture(scope="session")
def small_history(small_sim):
    return HistoryIndex(small_sim.observations, 0, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
