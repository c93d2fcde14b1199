import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coala import synthetic

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_instance():
    """Seeded 8x6 W and 6x20 X."""
    return synthetic.random_instance(7, 8, 6, 20)


def svd_tail(M, r):
    """Independent Eckart-Young residual for the tests: full double SVD of M."""
    s = np.linalg.svd(np.asarray(M, dtype=np.float64), compute_uv=False)
    return float(np.sqrt(np.sum(s[r:] ** 2)))


def truncated_svd(M, r):
    U, s, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64), full_matrices=False)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def top_left(M, r):
    return np.linalg.svd(np.asarray(M, dtype=np.float64), full_matrices=False)[0][:, :r]


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
