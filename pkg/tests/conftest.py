import sys

import numpy as np
import pytest

from edgeguard.features import labels_of, records_to_matrix
from edgeguard.pipeline import PipelineConfig, fit_pipeline
from edgeguard.synthetic import generate_flows


def flow_split(seed: int, n_train=5000, n_benign=1000, n_attack=1000):
    """Benign training matrix plus labelled calibration and test sets."""
    train = records_to_matrix(generate_flows(n_train, 0, seed=seed * 10 + 1))
    cal = generate_flows(n_benign, n_attack, seed=seed * 10 + 2)
    test = generate_flows(n_benign, n_attack, seed=seed * 10 + 3)
    return (train, records_to_matrix(cal), labels_of(cal), records_to_matrix(test), labels_of(test))


@pytest.fixture(scope="session")
def small_split():
    return flow_split(0, n_train=1500, n_benign=300, n_attack=300)


@pytest.fixture(scope="session")
def small_pipeline(small_split):
    train, Xc, yc, _, _ = small_split
    cfg = PipelineConfig(n_trees=50, seed=0)
    return fit_pipeline(train, Xc, yc, cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
