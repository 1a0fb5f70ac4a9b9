import sys

import numpy as np
import pytest

from cnfode.ffnn import NetworkWeights
from cnfode.neural_form import WeightMatrix


def random_network(rng, hidden, scale=1.0):
    return NetworkWeights.from_flat(rng.uniform(-scale, scale, 3 * hidden + 1))


def random_matrix(rng, m, hidden, scale=1.0):
    return WeightMatrix(rng.uniform(-scale, scale, (m, 3 * hidden + 1)))


def central_diff(f, x, step=1e-6):
    """Central differences of scalar ``f`` at every entry of vector ``x``."""
    x = np.array(x, dtype=np.float64)
    out = np.empty_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (f(hi) - f(lo)) / (2 * step)
    return out


def rel_close(a, b, rtol, atol):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.all(np.abs(a - b) <= np.maximum(rtol * np.maximum(np.abs(a), np.abs(b)), atol))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.criterion_line(n))
