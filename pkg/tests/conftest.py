import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from sgrl.graph import build_graph  # noqa: E402

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def path3():
    return build_graph([(0, 1), (1, 2)], 3)


@pytest.fixture
def star5():
    attrs = np.array(
        [[1, 0, 1, 0, 1, 0, 1], [0, 1, 1, 0, 0, 1, 0], [1, 1, 0, 1, 0, 0, 0],
         [0, 0, 0, 1, 1, 1, 1], [1, 0, 0, 0, 0, 1, 1]],
        dtype=np.int8,
    )
    return build_graph([(0, 1), (0, 2), (0, 3), (0, 4)], 5, attrs)


def random_small_graph(seed, n=10, p=0.3, labels=True):
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    attrs = (rng.random((n, 7)) < 0.5).astype(np.int8)
    lab = None
    if labels:
        lab = np.zeros(n, dtype=np.int8)
        lab[rng.permutation(n)[: max(2, n // 3)]] = 1
    return build_graph(edges, n, attrs, lab), edges, attrs


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
