import numpy as np
import pytest

from gndiff.attention import freeze_softmax, similarity
from gndiff.dynamics import Model
from gndiff.graph_model import ActivationFn, AttentionParams, Graph

X0 = np.array([[0.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0]])
W1 = 1e-3 * np.eye(4)
W2 = np.diag([1e-3, 1e-3, 1.0, 1.0])


@pytest.fixture
def triangle():
    return Graph.complete(3)


@pytest.fixture
def x0():
    return X0.copy()


def softmax_model(W, normalization="symmetric"):
    return Model(Graph.complete(3), AttentionParams(W_sym=W, activation=ActivationFn("softmax", normalization=normalization)))


def frozen_model(W, normalization="symmetric", x=X0):
    g = Graph.complete(3)
    p = AttentionParams(W_sym=W)
    return Model(g, p.with_activation(freeze_softmax(similarity(x, p, g), g, normalization)))


_acceptance_lines = []


def pytest_configure(config):
    config._acceptance_lines = _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
