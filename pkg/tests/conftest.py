import numpy as np
import pytest

from moesched import CostVector

ACCEPTANCE_RESULTS = []


def random_instance(rng, T_range=(2, 32), K_range=(1, 8), spread=3.0):
    T = int(rng.integers(T_range[0], T_range[1] + 1))
    K = int(rng.integers(K_range[0], K_range[1] + 1))
    beta = float(rng.uniform(0.25, 4.0))
    alphas = rng.uniform(0.0, spread * beta, size=T)
    return CostVector(tuple(alphas.tolist()), beta), K


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


@pytest.fixture
def four_experts():
    return CostVector((0.5, 2.0, 1.0, 0.5), 1.0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title}: {detail}")
