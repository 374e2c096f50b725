import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hawkes_exec.events_io import EventStream, Side

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_stream(rng, n, T, side=Side.BUY, product="P"):
    t = np.sort(rng.uniform(0.0, T, n))
    t = t[np.concatenate([[True], np.diff(t) > 0])]
    return EventStream(side, t, (0.0, T), product)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
