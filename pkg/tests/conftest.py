from __future__ import annotations

import numpy as np
import pytest

from tabular_ac.envs import garnet


def random_policy(rng: np.random.Generator, S: int, A: int, concentration: float = 1.0) -> np.ndarray:
    return rng.dirichlet(np.full(A, concentration), size=S)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def small_garnet():
    return garnet(6, 3, 2, 0.9, seed=7)


@pytest.fixture
def two_state_mdp():
    from tabular_ac.mdp import Mdp

    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0
    P[0, 1, 1] = 1.0
    P[1, :, 1] = 1.0
    r = np.array([[0.0, 0.5], [1.0, 1.0]])
    return Mdp(P, r, np.array([1.0, 0.0]), 0.5)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
