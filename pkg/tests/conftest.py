import functools

import numpy as np
import pytest

from krylov_quench.propagator import simulate
from krylov_quench.spin_model import ModelParams

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def cached_run(N, h, g, t_max=10.0, n_points=2001):
    """One simulate call per parameter set for the whole session."""
    return simulate(ModelParams(N, h=h, g=g), np.linspace(0.0, t_max, n_points))


@pytest.fixture
def run():
    return cached_run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
