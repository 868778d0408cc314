import numpy as np
import pytest

from lindtorus.fourier import TrigPoly
from lindtorus.lindstedt import compute_series
from lindtorus.smalldiv import Frequency, build_scales
from lindtorus.trees import ClusterEnumerator, TreeEnumerator

ACCEPTANCE_LINES = {}


def record_criterion(number, name, passed, detail=""):
    line = f"criterion {number:2d} {name}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def freq():
    return Frequency.golden2()


@pytest.fixture(scope="session")
def scales(freq):
    return build_scales(freq, 8)


@pytest.fixture(scope="session")
def f_std():
    return TrigPoly.standard_example()


@pytest.fixture(scope="session")
def f_odd():
    # G^(0) vanishes, G^(1) = sin(2 beta)/2: first nonzero zero mode at order 1
    return TrigPoly.cos((1, 0), 1, 0.5) + TrigPoly.cos((1, 0), -1, 0.5) + TrigPoly.cos((0, 1))


@pytest.fixture(scope="session")
def table(f_std, freq):
    return compute_series(f_std, freq, 4)


@pytest.fixture(scope="session")
def tree_enum(f_std, scales):
    return TreeEnumerator(f_std, scales)


@pytest.fixture(scope="session")
def cluster_enum(f_std, scales):
    return ClusterEnumerator(f_std, scales)


@pytest.fixture(scope="session")
def beta_samples():
    return np.linspace(0.0, 2 * np.pi, 8, endpoint=False) + 0.1
