import numpy as np
import pytest

from cmflow.events import EventSlice, oracle_scene


@pytest.fixture(scope="session")
def oracle():
    """(events, ground-truth flow) of the 64x64 translating-dots scene."""
    return oracle_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_slice(rng, n=400, width=32, height=24):
    x = rng.integers(0, width, n)
    y = rng.integers(0, height, n)
    t = np.sort(rng.uniform(0.0, 0.1, n))
    p = rng.choice([-1, 1], n)
    return EventSlice(x, y, t, p, width=width, height=height)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(LINES, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(LINES[key])
