import numpy as np
import pytest

from refeq.problem import Interval, make_problem


@pytest.fixture
def dyadic():
    return make_problem([(0.5, "x/2"), (0.5, "x/2 + 1/2")])


@pytest.fixture
def dyadic_decreasing():
    return make_problem([(0.5, "-x/2 + 1/2"), (0.5, "-x/2 + 1")])


@pytest.fixture
def mixed():
    return make_problem([(0.3, "0.9*x"), (0.7, "-0.2*x + 1")])


@pytest.fixture
def unit():
    return Interval(0.0, 1.0)


def uniform_grid(a, b, n=2001):
    return np.linspace(a, b, n)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
