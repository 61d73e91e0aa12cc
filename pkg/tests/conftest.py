import numpy as np
import pytest

from mmmbounds.algebra import Scenario
from mmmbounds.oracle import born_rule, pauli, tilted_chsh_realization


@pytest.fixture(scope="session")
def chsh():
    return Scenario.bell(2, 2)


@pytest.fixture(scope="session")
def max_chsh_table():
    r, _ = tilted_chsh_realization(0.0)
    return born_rule(r)


@pytest.fixture(scope="session")
def xz_pair():
    I, X, _, Z = pauli()
    return [[(I + Z) / 2, (I - Z) / 2], [(I + X) / 2, (I - X) / 2]]


def deterministic_table(la, lb, X=2, Y=2):
    """Local deterministic table with Alice outputs ``la[x]`` and Bob outputs ``lb[y]``."""
    P = np.zeros((2, 2, X, Y))
    for x in range(X):
        for y in range(Y):
            P[la[x], lb[y], x, y] = 1.0
    return P


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}: {detail}")
