import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from vspyct_gp import Dataset, TreeConfig, fit_tree  # noqa: E402

settings.register_profile(
    "invariants", max_examples=1000, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_regression(n=200, d=3, seed=0, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, d))
    y = np.sin(2 * X[:, 0]) + X[:, 1:].sum(1) + noise * rng.standard_normal(n)
    return Dataset(X, y, name=f"toy{seed}")


@pytest.fixture(scope="session")
def toy_data():
    return make_regression()


@pytest.fixture(scope="session")
def toy_tree(toy_data):
    return fit_tree(toy_data, TreeConfig(max_depth=3, vi_epochs=200, mc_samples=20, gp_iters=30))


@pytest.fixture(scope="session")
def toy_tree_linrbf(toy_data):
    return fit_tree(toy_data, TreeConfig(max_depth=3, vi_epochs=200, mc_samples=20, gp_iters=30,
                                         kernel_family="lin-rbf", seed=1))
