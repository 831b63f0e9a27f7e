"""Cycle-resolution clocks.

Three interchangeable clock sources sit behind one small interface
(``now() -> int`` plus a ``source`` tag):

* a hardware cycle counter (rdtsc on x86_64, CNTVCT_EL0 on aarch64),
  read through a tiny piece of executable memory;
* the OS monotonic clock scaled to pseudo-cycles, for platforms where
  no unprivileged counter is reachable;
* a fully deterministic simulated clock that only moves when an actor
  advances it.

Delay *differences* drive everything downstream, so calibration is a
single interval against the OS wall clock with no drift correction.
"""

from __future__ import annotations

import ctypes
import mmap
import platform
import threading
import time
from dataclasses import dataclass

from .errors import CalibrationError, CounterUnavailableError

SOURCE_HARDWARE = "hardware-counter"
SOURCE_OS = "os-clock"
SOURCE_SIMULATED = "simulated"


@dataclass(frozen=True)
class ClockCalibration:
    """Conversion rate between counter cycles and wall time."""

    cycles_per_second: float
    source: str

    def __post_init__(self):
        if self.cycles_per_second <= 0:
            raise ValueError("cycles_per_second must be positive")


# Machine code returning the cycle counter in the usual integer return
# register, per architecture.
_COUNTER_CODE = {
    # rdtsc; shl rdx,32; or rax,rdx; ret
    "x86_64": b"\x0f\x31\x48\xc1\xe2\x20\x48\x09\xd0\xc3",
    # mrs x0, cntvct_el0; ret
    "aarch64": b"\x40\xe0\x3b\xd5\xc0\x03\x5f\xd6",
}


class HardwareCounterClock:
    """Unprivileged per-processor cycle counter (rdtsc / CNTVCT_EL0)."""

    source = SOURCE_HARDWARE

    def __init__(self):
        code = _COUNTER_CODE.get(platform.machine())
        if code is None:
            raise CounterUnavailableError(
                f"no cycle counter stub for machine {platform.machine()!r}"
            )
        try:
            buf = mmap.mmap(
                -1, len(code), prot=mmap.PROT_READ | mmap.PROT_WRITE | mmap.PROT_EXEC
            )
        except (OSError, ValueError) as exc:
            raise CounterUnavailableError(f"cannot map executable memory: {exc}") from exc
        buf.write(code)
        self._buf = buf  # keep the mapping alive
        address = ctypes.addressof(ctypes.c_char.from_buffer(buf))
        self._read = ctypes.CFUNCTYPE(ctypes.c_uint64)(address)
        # Smoke-test: two reads must be sane and non-decreasing.
        a = self._read()
        b = self._read()
        if b < a or b == 0:
            raise CounterUnavailableError("cycle counter read is not monotonic")

    def now(self) -> int:
        return self._read()


class OsMonotonicClock:
    """OS monotonic clock scaled to pseudo-cycles at a nominal rate."""

    source = SOURCE_OS

    def __init__(self, nominal_hz: float = 1e9):
        if nominal_hz <= 0:
            raise ValueError("nominal_hz must be positive")
        self.nominal_hz = nominal_hz
        self._scale = nominal_hz / 1e9

    def now(self) -> int:
        return int(time.perf_counter_ns() * self._scale)


class SimulatedClock:
    """Deterministic virtual counter; moves only via advance()/sleep_until().

    Two actors that fork() the same clock share its origin, mirroring a
    timestamp counter that both processes can read: each fork tracks that
    actor's position on the one shared virtual timeline.  Reads and
    advances are safe under concurrent access.
    """

    source = SOURCE_SIMULATED

    def __init__(self, cycles_per_second: float = 1e9, start: int = 0):
        if cycles_per_second <= 0:
            raise ValueError("cycles_per_second must be positive")
        self.cycles_per_second = cycles_per_second
        self._cycles = int(start)
        self._lock = threading.Lock()

    def now(self) -> int:
        with self._lock:
            return self._cycles

    def advance(self, cycles: int) -> int:
        if cycles < 0:
            raise ValueError("cannot advance a monotonic clock backwards")
        with self._lock:
            self._cycles += int(cycles)
            return self._cycles

    def sleep_until(self, stamp: int) -> int:
        """Advance to ``stamp`` if it lies ahead; no-op otherwise."""
        with self._lock:
            if stamp > self._cycles:
                self._cycles = int(stamp)
            return self._cycles

    def fork(self) -> "SimulatedClock":
        """New clock at this clock's current position (same shared origin)."""
        return SimulatedClock(self.cycles_per_second, start=self.now())


def make_clock(prefer: str = "auto"):
    """Build a clock: hardware counter when reachable, OS clock otherwise."""
    if prefer in ("auto", "hardware"):
        try:
            return HardwareCounterClock()
        except CounterUnavailableError:
            if prefer == "hardware":
                raise
    return OsMonotonicClock()


def calibrate(clock, sample_duration_ms: float = 100.0) -> ClockCalibration:
    """Estimate cycles/second by sampling the counter against the wall clock.

    Simulated clocks report their configured rate exactly.  Hardware and OS
    sources need sample_duration_ms >= 10 to keep scheduler jitter small
    relative to the interval.
    """
    if clock.source == SOURCE_SIMULATED:
        if sample_duration_ms <= 0:
            raise CalibrationError("zero elapsed time: sample duration must be positive")
        return ClockCalibration(clock.cycles_per_second, SOURCE_SIMULATED)
    if sample_duration_ms <= 0:
        raise CalibrationError("zero elapsed time: sample duration must be positive")
    if sample_duration_ms < 10:
        raise ValueError("sample_duration_ms must be >= 10 for hardware/os sources")
    target_ns = sample_duration_ms * 1e6
    c0 = clock.now()
    w0 = time.perf_counter_ns()
    while time.perf_counter_ns() - w0 < target_ns:
        pass
    c1 = clock.now()
    w1 = time.perf_counter_ns()
    elapsed_s = (w1 - w0) / 1e9
    if elapsed_s <= 0 or c1 <= c0:
        raise CalibrationError("zero elapsed time during calibration sample")
    return ClockCalibration((c1 - c0) / elapsed_s, clock.source)


def wait_until(clock, stamp: int) -> int:
    """Busy-wait until the clock reaches ``stamp``; simulated clocks jump."""
    if clock.source == SOURCE_SIMULATED:
        return clock.sleep_until(stamp)
    n = clock.now()
    while n < stamp:
        n = clock.now()
    return n
