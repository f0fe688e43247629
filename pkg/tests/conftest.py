import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def toeplitz_sigma(p, rho=0.5):
    idx = np.arange(p)
    return rho ** np.abs(np.subtract.outer(idx, idx)).astype(float)


def make_problem(rng, n, p, t, k=None, noise=1.0):
    """Gaussian design with a few active rows."""
    x = rng.standard_normal((n, p))
    b = np.zeros((p, t))
    k = k if k is not None else max(1, p // 4)
    b[:k] = rng.standard_normal((k, t))
    y = x @ b + noise * rng.standard_normal((n, t))
    return x, y, b
