import numpy as np
import pytest

from gallager_forge import bsc, validate_channel

ACCEPTANCE_LINES = []


def random_channel(rng, nx=None, ny=None, max_size=6, zeros=False):
    nx = nx or int(rng.integers(2, max_size + 1))
    ny = ny or int(rng.integers(2, max_size + 1))
    m = rng.dirichlet(np.ones(ny), size=nx)
    if zeros:
        m[rng.random(m.shape) < 0.2] = 0.0
        for row in m:
            if row.sum() == 0:
                row[rng.integers(ny)] = 1.0
    return validate_channel(m / m.sum(axis=1, keepdims=True))


def random_positive_dist(rng, k):
    return rng.dirichlet(np.ones(k)) * 0.98 + 0.02 / k


@pytest.fixture
def bsc02():
    return bsc(0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def report_criterion():
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""
    def record(label, ok, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
