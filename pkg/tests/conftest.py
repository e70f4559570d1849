import numpy as np
import pytest

from csa2sls.dataframe import ModelFrame

ACCEPTANCE_LINES = []


def make_frame(rng, N=60, K=5, d1=1, d2=0, constant=True, rho=0.3, strength=0.4):
    """Endogenous linear IV design with equicorrelated instruments."""
    g = rng.standard_normal((N, 1))
    Z = np.sqrt(rho) * g + np.sqrt(1 - rho) * rng.standard_normal((N, K))
    x1 = rng.standard_normal((N, d2))
    V = rng.standard_normal((N, d1))
    eps = 0.6 * V.sum(axis=1) + rng.standard_normal(N)
    Pi = strength * rng.uniform(0.5, 1.5, size=(K, d1))
    Y = Z @ Pi + x1 @ rng.standard_normal((d2, d1)) * 0.3 + V
    y = Y @ np.full(d1, 0.5) + x1 @ np.full(d2, -0.2) + 1.0 + eps
    return ModelFrame.from_arrays(y, Y, Z, x1=x1 if d2 else None, constant=constant)


@pytest.fixture
def rng():
    return np.random.default_rng(20220101)


@pytest.fixture
def frame(rng):
    return make_frame(rng)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
