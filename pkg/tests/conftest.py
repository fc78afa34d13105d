import numpy as np
import pytest

from compactbnn._accel import njit
from compactbnn.data import Dataset
from compactbnn.nnet import ModelSpec, Task


@njit(cache=True)
def gaussian_target(state, data):
    """Multivariate normal log-density; ``data`` stacks the mean row over the precision matrix."""
    mean = data[0]
    prec = data[1:]
    d = state - mean
    g = -(prec @ d)
    lt = 0.5 * np.dot(d, g)
    return lt, lt, g


@njit(cache=True)
def step_target(state, data):
    """Piecewise-constant density on [-1, 1]: mass data[0] below zero, data[1] above."""
    x = state[0]
    g = np.zeros(1)
    if x < -1.0 or x > 1.0:
        return -np.inf, -np.inf, g
    lt = np.log(data[0]) if x < 0.0 else np.log(data[1])
    return lt, lt, g


def gaussian_data(mean, cov):
    mean = np.atleast_1d(np.asarray(mean, float))
    prec = np.linalg.inv(np.atleast_2d(np.asarray(cov, float)))
    return np.ascontiguousarray(np.vstack([mean, prec]))


def toy_classification(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(int) + (x[:, 0] > 1).astype(int)
    return ModelSpec(2, 3, 3, Task.CLASSIFICATION), Dataset(x, y, Task.CLASSIFICATION, n_classes=3)


def toy_regression(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, 2))
    y = (np.sin(3 * x[:, 0]) + 0.3 * x[:, 1])[:, None] + 0.05 * rng.normal(size=(n, 1))
    return ModelSpec(2, 3, 1), Dataset(x, y, Task.REGRESSION)


@pytest.fixture
def cls_problem():
    return toy_classification()


@pytest.fixture
def reg_problem():
    return toy_regression()


def batch_means_se(x, n_batches=50):
    """Monte-Carlo standard error of the mean of ``x`` by non-overlapping batch means."""
    x = np.asarray(x, float)
    b = x.shape[0] // n_batches
    means = x[:b * n_batches].reshape(n_batches, b, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
