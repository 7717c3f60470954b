import hypothesis
import numpy as np
import pytest

from sdrmhe.grid import GridModel, LineParams, case6ww, flow_plan, voltage_magnitude

hypothesis.settings.register_profile("fast", max_examples=10)
hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid6():
    return case6ww()


@pytest.fixture(scope="session")
def bench_plan(grid6):
    return flow_plan(grid6, range(1, 8)) + [voltage_magnitude(n) for n in range(1, 7)]


@pytest.fixture(scope="session")
def two_bus():
    return GridModel(2, (LineParams(1, 2, 1 - 3j, 0.05j, 0.05j),))


@pytest.fixture(scope="session")
def three_bus():
    return GridModel(3, (
        LineParams(1, 2, 1 - 4j, 0.02j, 0.02j),
        LineParams(2, 3, 2 - 5j, 0.01j, 0.01j),
        LineParams(1, 3, 1.5 - 3j, 0.03j, 0.03j),
    ))


def random_state(rng, n, spread=0.5):
    v = rng.normal(1.0, 0.1, n) * np.exp(1j * rng.uniform(-spread, spread, n))
    v[0] = abs(v[0])
    return v


def random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (A + A.conj().T)


def random_psd(rng, n, rank=None):
    B = rng.standard_normal((n, rank or n)) + 1j * rng.standard_normal((n, rank or n))
    return B @ B.conj().T
