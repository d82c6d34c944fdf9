import numpy as np
import pytest

from skelzsl.embeddings import LabelEmbeddingTable
from skelzsl.encoder import VisualFeatureMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_table(n, d, seed=0, labels=None):
    e = np.random.default_rng(seed).standard_normal((n, d))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    labels = labels or [f"class {i}" for i in range(n)]
    return LabelEmbeddingTable(labels, e, "loaded", True)


def features(x, labels):
    return VisualFeatureMatrix(np.asarray(x, float), np.asarray(labels), False)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
