from pathlib import Path

import numpy as np
import pytest

from l2relax.panel import TimePanel

DATA = Path(__file__).resolve().parents[1] / "src" / "l2relax" / "data"


def random_panel(rng, N, T, n_train=None, rank=None):
    """Controls with a few common factors plus noise; target loads on them."""
    q = rank or min(3, N)
    F = rng.standard_normal((q, T))
    X = rng.standard_normal((N, q)) @ F + 0.7 * rng.standard_normal((N, T))
    y = rng.standard_normal(q) @ F + 0.5 * rng.standard_normal(T)
    n_train = T if n_train is None else n_train
    return TimePanel(y, X, np.arange(n_train), np.arange(n_train, T))


@pytest.fixture
def toy_panel():
    # x1 = (1,2,3), x2 = (0,1,0), y = (1,0,1)
    return TimePanel(np.array([1.0, 0.0, 1.0]), np.array([[1.0, 2.0, 3.0], [0.0, 1.0, 0.0]]), np.arange(3))


@pytest.fixture
def synthetic_csv():
    return DATA / "synthetic_pda.csv"


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
