import numpy as np
import pytest

from dopfocus.scene import RadarParams
from dopfocus.waveform import make_pulse


@pytest.fixture
def small():
    """P=16, tau=10 us, B_h=20 MHz: N = 200 Nyquist samples per frame."""
    return RadarParams(16, 10e-6, 20e6)


@pytest.fixture
def desk():
    """The scaled Monte Carlo configuration: P=100, N=200."""
    return RadarParams(100, 10e-6, 20e6)


@pytest.fixture
def flat(small):
    return make_pulse(small, "flat")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    def report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
