import os

import numpy as np
import pytest

from zoprox import ClassificationProblem, SigmoidOracle, make_sigmoid_toy

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def tiny_libsvm_path():
    return os.path.join(FIXTURES, "tiny.libsvm")


@pytest.fixture
def ledger_problem():
    """n=10, d=4 classification task used by the query-ledger checks."""
    return make_sigmoid_toy(n=10, d=4, seed=42)


@pytest.fixture
def four_sample_problem():
    """Four hand-built samples; every sigmoid loss is 0.5 at x=0."""
    feats = np.array([
        [1.0, 0.0, -2.0],
        [0.0, 3.0, 1.0],
        [0.5, -0.5, 0.0],
        [2.0, 1.0, 1.0],
    ])
    labels = np.array([1.0, -1.0, 1.0, -1.0])
    return ClassificationProblem.from_dense(feats, labels)


@pytest.fixture
def four_sample_oracle(four_sample_problem):
    return SigmoidOracle(four_sample_problem)
