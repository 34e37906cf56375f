import numpy as np
import pytest

from discrete_langevin import DiscreteDomain, IsingLatticeModel, LogQuadraticModel
from discrete_langevin.models import random_rbm


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ising2_spin():
    return IsingLatticeModel(2, 2, 0.1, 0.2, encoding="spin")


@pytest.fixture
def ising2_binary():
    return IsingLatticeModel(2, 2, 0.1, 0.2, encoding="binary")


@pytest.fixture
def small_rbm():
    return random_rbm(4, 3, scale=0.7, rng=3, bias_scale=0.5)


def random_log_quadratic(rng, d, kind="binary", scale=0.5):
    A = rng.normal(0, scale, (d, d))
    dom = DiscreteDomain.binary(d) if kind == "binary" else DiscreteDomain.spin(d)
    return LogQuadraticModel(A + A.T, rng.normal(0, scale, d), dom)


# one line per acceptance criterion, printed after the run whatever the capture mode
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
