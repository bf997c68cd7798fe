import numpy as np
import pytest

from rppg_bp.signal_core import TimeSeries


def fb_gain(f, fs=60.0, f_lo=0.7, f_hi=16.0):
    """Forward-backward magnitude of the order-2 Butterworth bandpass after bilinear mapping.

    With prewarped w = tan(pi f / fs) the one-pass magnitude is
    1 / sqrt(1 + ((w^2 - wl wh) / ((wh - wl) w))^4); filtering twice squares it.
    """
    w = np.tan(np.pi * np.asarray(f, dtype=float) / fs)
    wl, wh = np.tan(np.pi * f_lo / fs), np.tan(np.pi * f_hi / fs)
    q = (w**2 - wl * wh) / ((wh - wl) * w)
    return 1.0 / (1.0 + q**4)


def sine(freq, fs=60.0, seconds=30.0, phase=0.0, amp=1.0):
    t = np.arange(int(round(seconds * fs))) / fs
    return TimeSeries(amp * np.sin(2 * np.pi * freq * t + phase), fs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed at the end of the run
CRITERIA: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
