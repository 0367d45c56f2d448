import numpy as np
import pytest

from wkbo.kernels import SquaredExponential


@pytest.fixture
def se_default():
    return SquaredExponential(4.21, 3.59)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_mc():
    """The full default benchmark, seed 0, run once per session."""
    import time

    from wkbo.experiment import default_spec, run_monte_carlo

    spec = default_spec()
    t0 = time.perf_counter()
    results = run_monte_carlo(spec, base_seed=0, parallelism=1)
    return spec, results, time.perf_counter() - t0


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
