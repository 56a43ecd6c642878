from __future__ import annotations

import numpy as np
import pytest

from tzgirsanov.paths import TimeGrid, exp_functional_A
from tzgirsanov.stochastic import RngSpec, sample_bm


@pytest.fixture(scope="session")
def grid512():
    return TimeGrid(1.0, 512)


@pytest.fixture(scope="session")
def bm_paths(grid512):
    """Ten Brownian paths on the unit interval, seed 42."""
    rng = RngSpec(42)
    return [sample_bm(grid512, rng, i) for i in range(10)]


@pytest.fixture(scope="session")
def bm_pairs(bm_paths):
    return [(p, exp_functional_A(p)) for p in bm_paths]


@pytest.fixture
def np_rng():
    return np.random.default_rng(20261016)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
