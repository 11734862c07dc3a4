import numpy as np
import pytest

from mbac.corpus import load_corpus, write_synthetic_corpus


@pytest.fixture(scope="session")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "small.txt"
    write_synthetic_corpus(path, n_sentences=2000, seed=7)
    return path


@pytest.fixture(scope="session")
def store(corpus_path):
    return load_corpus(corpus_path, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_REPORT = []


@pytest.fixture(scope="session")
def report():
    return _REPORT


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
