import numpy as np
import pytest

from resofit.model import EnvironmentParams, ResonatorParams, linewidth_grid, synthesize

REF_F0 = 5.791625e9
REF_Q_TOTAL = 5.79e5

_acceptance_lines = []


@pytest.fixture
def acceptance_report():
    """Collects one pass/fail line per acceptance criterion."""

    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        _acceptance_lines.append(f"[{status}] criterion {number}: {title} {detail}".rstrip())
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def reference_resonator():
    return ResonatorParams(REF_F0, REF_Q_TOTAL, REF_Q_TOTAL / 0.035)


def make_trace(p, env=None, n_points=1001, span_linewidths=10.0):
    return synthesize(p, env or EnvironmentParams(), linewidth_grid(p, n_points, span_linewidths))


def random_resonator(rng):
    f0 = rng.uniform(4e9, 9e9)
    q_i = 10 ** rng.uniform(4, 7)
    r = rng.uniform(0.01, 0.9)
    return ResonatorParams.from_radius(f0, q_i, r), q_i


def rel(a, b):
    return abs(a / b - 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
