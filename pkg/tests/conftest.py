import logging

import numpy as np
import pytest

from glmpath.data import standardize

logging.getLogger("glmpath").setLevel(logging.ERROR)


def make_problem(rng, family, n, d, k=3, density=0.3):
    """Standardized random design plus targets drawn from a sparse ground truth."""
    X, _ = standardize(rng.normal(size=(n, d)))
    if family == "gaussian":
        w = rng.normal(size=d) * (rng.random(d) < density)
        return X, X @ w + rng.normal(size=n)
    if family == "binomial":
        w = rng.normal(size=d) * (rng.random(d) < density)
        return X, (X @ w + rng.normal(size=n) > 0).astype(np.int64)
    W = rng.normal(size=(d, k)) * (rng.random((d, k)) < density)
    return X, np.argmax(X @ W + rng.gumbel(size=(n, k)), axis=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def hand_layer():
    """3-class, 6-feature layer with 10 evaluation points (ablation fixture)."""
    W = np.array([
        [3.0, -2.0, 0.5, 0.0, 1.0, 0.0],
        [0.0, 1.5, -2.5, 0.2, 0.0, 2.0],
        [-1.0, 0.0, 0.0, 3.0, -0.5, 1.0],
    ])
    b = np.array([0.1, 0.0, -0.1])
    X = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        [-1.0, 0.5, 0.0, 0.0, 2.0, 0.0],
        [0.5, -1.0, 1.0, -0.5, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0, 4.0, -1.0],
        [-2.0, 1.0, 0.0, 1.0, 0.0, 0.0],
        [0.2, 0.3, -0.4, 0.5, -0.6, 0.7],
    ])
    y = np.array([0, 1, 1, 2, 1, 0, 2, 0, 2, 1])
    return W, b, X, y


ACCEPTANCE_RESULTS = {}


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    crit = None
    for name, value in report.user_properties:
        if name == "criterion":
            crit = value
    if crit is None or report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
    ACCEPTANCE_RESULTS[crit] = status


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE_RESULTS, key=lambda c: int(c.split(".")[0])):
        terminalreporter.write_line(f"{ACCEPTANCE_RESULTS[crit]}  criterion {crit}")
