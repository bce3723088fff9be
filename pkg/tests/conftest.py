import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gravham.tensor_core import invert_metric


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def _lorentzian(P):
    d = P.shape[0]
    eta = np.eye(d)
    eta[0, 0] = -1.0
    P = np.eye(d) + P
    g = P.T @ eta @ P
    return 0.5 * (g + g.T)


@st.composite
def lorentzian_metrics(draw, dims=(3, 4, 5), spread=0.3):
    """Metric arrays P^T eta P with spacelike t-slices (g^00 < 0, spatial block positive)."""
    d = draw(st.sampled_from(dims))
    P = draw(arrays(np.float64, (d, d), elements=st.floats(-spread, spread, allow_nan=False)))
    g = _lorentzian(P)
    gu = np.linalg.inv(g)
    if not (gu[0, 0] < -0.2 and np.all(np.linalg.eigvalsh(g[1:, 1:]) > 0.2)):
        # fall back to a mild, always admissible perturbation
        g = _lorentzian(0.1 * np.tanh(P))
    return g


@st.composite
def metric_states(draw, dims=(3, 4, 5)):
    return invert_metric(draw(lorentzian_metrics(dims)))


_ACCEPTANCE = {}


@pytest.fixture
def acceptance(request):
    """Record a criterion outcome: acceptance(number, passed, detail)."""

    def record(number, passed, detail):
        _ACCEPTANCE[number] = (bool(passed), detail)
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
