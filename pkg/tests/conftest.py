import numpy as np
import pytest

from tmrkit.core import (CANONICAL_CHANNELS, BehavioralRecord, CueEvent, CueLog, Hypnogram,
                         Level, Recording)


def make_pre(levels, correct):
    """Pre-sleep records for items 1..n with the given levels and outcomes."""
    return [BehavioralRecord(i + 1, "pre", c, lv) for i, (lv, c) in enumerate(zip(levels, correct))]


def full_pre(seed=0, n=104):
    rng = np.random.default_rng(seed)
    levels = [Level(f"L{r}") for r in rng.integers(1, 4, n)]
    correct = rng.random(n) < 0.5
    return make_pre(levels, correct)


def stable_hypnogram(n_wake=2, n_sleep=40, stage="N2"):
    return Hypnogram(("W",) * n_wake + (stage,) * n_sleep)


def regular_log(onsets_ms, item=1):
    return CueLog(tuple(CueEvent(int(t), item, 1, k + 1) for k, t in enumerate(onsets_ms)))


def noise_recording(seconds=60.0, fs=100.0, seed=0, scale=10.0):
    rng = np.random.default_rng(seed)
    n = int(seconds * fs)
    return Recording(fs, CANONICAL_CHANNELS, scale * rng.standard_normal((6, n)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary ----------------------------------------------------------------

ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    """Log one acceptance line and fail the calling test if ``ok`` is false."""
    line = f"criterion {str(number):>3}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE, key=lambda k: (int(str(k).rstrip("ab")), str(k))):
        terminalreporter.write_line(ACCEPTANCE[number])
