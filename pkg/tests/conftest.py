"""Shared fixtures: a small, quickly trained model reused across test modules."""

import numpy as np
import pytest

from bitshield.evalharness import gen_dataset, train_model

SMALL_SEED = 5

CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def criterion():
    """Records one pass/fail line per acceptance criterion, then asserts."""

    def _record(num: int, ok: bool, desc: str):
        line = f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} - {desc}"
        print(line)
        CRITERION_LINES.append(line)
        assert ok, line

    return _record


@pytest.fixture(scope="session")
def small_dataset():
    train, ev = gen_dataset(SMALL_SEED, train_size=768, eval_size=512)
    return train, ev


@pytest.fixture(scope="session")
def small_model(small_dataset):
    train, _ = small_dataset
    return train_model(train, SMALL_SEED, hidden=128, epochs=500, lr=0.7)


@pytest.fixture(scope="session")
def small_eval(small_dataset):
    return small_dataset[1]


@pytest.fixture()
def rng():
    return np.random.default_rng(0xC0FFEE)
