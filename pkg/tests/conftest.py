import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sym(rng, n):
    m = rng.standard_normal((n, n))
    return (m + m.T) / 2


def random_pd(rng, n, floor=0.3):
    m = rng.standard_normal((n, n))
    return m @ m.T / n + floor * np.eye(n)


def random_design(rng, n, k):
    while True:
        x = rng.standard_normal((n, k))
        if np.linalg.matrix_rank(x) == k:
            return x


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
