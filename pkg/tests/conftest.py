import numpy as np
import pytest

from conceft.signal_model import SampledSignal

CRITERIA = {}


def record(number: int, passed: bool, detail: str):
    """Store one acceptance line; printed in the terminal summary."""
    CRITERIA[number] = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])


@pytest.fixture
def tone():
    def make(freq=5.0, rate=160.0, duration=10.0, amp=1.0):
        t = np.arange(int(round(rate * duration))) / rate
        return SampledSignal(amp * np.cos(2 * np.pi * freq * t), rate)
    return make
