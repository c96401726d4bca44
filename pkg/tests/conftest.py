from fractions import Fraction

import numpy as np
import pytest

from topodyn.topology import OpinionState


def brute_neighbors(x, k):
    """Reference k-NN: full sort of every agent's (distance, index) pairs."""
    n = len(x)
    return [sorted((j for j in range(n) if j != i), key=lambda j: (abs(x[j] - x[i]), j))[:k] for i in range(n)]


def brute_rhs(x, k):
    nb = brute_neighbors(x, k)
    return [sum((x[j] - x[i] for j in nb[i]), 0) for i in range(len(x))]


def exact(values):
    arr = np.empty(len(values), dtype=object)
    arr[:] = [Fraction(v) for v in values]
    return arr


# 0-based rendering of the two non-clusterization equilibria
K2N7 = [0, 1, 0, 1, 0, 1, Fraction(1, 2)]
K4N14 = [0] * 5 + [Fraction(2, 5)] * 2 + [Fraction(3, 5)] * 2 + [1] * 5


@pytest.fixture
def k2n7():
    return OpinionState.from_values(exact(K2N7), 2)


@pytest.fixture
def k4n14():
    return OpinionState.from_values(exact(K4N14), 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
