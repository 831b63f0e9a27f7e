import threading
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from syncprobe.errors import CalibrationError, CounterUnavailableError
from syncprobe.timekeeping import (
    HardwareCounterClock,
    OsMonotonicClock,
    SimulatedClock,
    calibrate,
    make_clock,
    wait_until,
)


def _hardware_clock_or_none():
    try:
        return HardwareCounterClock()
    except CounterUnavailableError:
        return None


def test_simulated_advance_is_exact():
    clock = SimulatedClock()
    before = clock.now()
    clock.advance(100)
    assert clock.now() - before == 100


@given(st.lists(st.integers(min_value=0, max_value=10**9), max_size=50))
def test_simulated_clock_exactness(advances):
    clock = SimulatedClock(start=7)
    start = clock.now()
    for n in advances:
        clock.advance(n)
    assert clock.now() - start == sum(advances)


def test_simulated_rejects_backwards():
    clock = SimulatedClock()
    with pytest.raises(ValueError):
        clock.advance(-1)


def test_fork_shares_origin():
    clock = SimulatedClock(start=1000)
    twin = clock.fork()
    assert twin.now() == clock.now()
    clock.advance(5)
    assert twin.now() == 1000  # forks move independently


def test_sleep_until_never_goes_back():
    clock = SimulatedClock(start=500)
    clock.sleep_until(400)
    assert clock.now() == 500
    clock.sleep_until(800)
    assert clock.now() == 800


def test_concurrent_reads_monotonic():
    clock = SimulatedClock()
    seen = []
    stop = threading.Event()

    def reader():
        last = clock.now()
        while not stop.is_set():
            cur = clock.now()
            if cur < last:
                seen.append((last, cur))
            last = cur

    threads = [threading.Thread(target=reader) for _ in range(2)]
    for t in threads:
        t.start()
    for _ in range(10_000):
        clock.advance(3)
    stop.set()
    for t in threads:
        t.join()
    assert not seen


def test_os_clock_monotonic():
    clock = OsMonotonicClock()
    a = clock.now()
    b = clock.now()
    assert b >= a


def test_calibrate_simulated_returns_configured_rate():
    clock = SimulatedClock(cycles_per_second=2.0e9)
    cal = calibrate(clock)
    assert cal.cycles_per_second == 2.0e9
    assert cal.source == "simulated"


def test_calibrate_zero_duration_fails():
    with pytest.raises(CalibrationError):
        calibrate(SimulatedClock(), 0)
    with pytest.raises(CalibrationError):
        calibrate(OsMonotonicClock(), 0)


def test_calibrate_short_hardware_duration_rejected():
    with pytest.raises(ValueError):
        calibrate(OsMonotonicClock(), 5)


def test_os_clock_10ms_against_wall_clock():
    # Oracle: the OS wall clock itself. A 1 GHz pseudo-cycle clock over a
    # 10 ms busy-wait must land in [8e6, 1.2e7] cycles.
    clock = OsMonotonicClock(nominal_hz=1e9)
    w0 = time.perf_counter_ns()
    c0 = clock.now()
    while time.perf_counter_ns() - w0 < 10_000_000:
        pass
    c1 = clock.now()
    assert 8e6 <= c1 - c0 <= 1.2e7


def test_calibrated_os_clock_rate_close_to_nominal():
    cal = calibrate(OsMonotonicClock(nominal_hz=1e9), 50)
    assert abs(cal.cycles_per_second - 1e9) / 1e9 < 0.02


@pytest.mark.skipif(_hardware_clock_or_none() is None,
                    reason="no hardware cycle counter on this platform")
def test_hardware_calibrations_repeat_within_one_percent():
    clock = HardwareCounterClock()
    a = calibrate(clock, 100)
    time.sleep(0.1)
    b = calibrate(clock, 100)
    assert abs(a.cycles_per_second - b.cycles_per_second) / a.cycles_per_second < 0.01


@pytest.mark.skipif(_hardware_clock_or_none() is None,
                    reason="no hardware cycle counter on this platform")
def test_hardware_counter_monotonic():
    clock = HardwareCounterClock()
    readings = [clock.now() for _ in range(1000)]
    assert all(b >= a for a, b in zip(readings, readings[1:]))


def test_make_clock_always_returns_something():
    clock = make_clock()
    assert clock.now() >= 0


def test_wait_until_simulated_jumps():
    clock = SimulatedClock(start=10)
    assert wait_until(clock, 500) == 500
    assert clock.now() == 500
