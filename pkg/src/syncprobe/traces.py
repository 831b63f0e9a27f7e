"""Delay traces and their on-disk format.

A trace is the channel's wire and the fingerprint's raw signal: one
(timestamp, delay) pair per flush, both in cycles.  Files carry the
magic ``SYNCTRC1``, a little-endian u32 sample count, then u64 pairs;
clock calibration, backend kind and profile name travel in a JSON
sidecar next to the trace (``<name>.meta.json``).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .timekeeping import ClockCalibration

TRACE_MAGIC = b"SYNCTRC1"


@dataclass
class DelayTrace:
    timestamps: np.ndarray
    delays: np.ndarray
    calibration: ClockCalibration
    backend_kind: str
    profile: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.delays = np.asarray(self.delays, dtype=np.int64)
        if self.timestamps.shape != self.delays.shape:
            raise ValueError("timestamps and delays must have equal length")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("trace timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def samples(self):
        return zip(self.timestamps.tolist(), self.delays.tolist())

    def duration_cycles(self) -> int:
        if len(self) == 0:
            return 0
        return int(self.timestamps[-1] + self.delays[-1] - self.timestamps[0])

    def duration_seconds(self) -> float:
        return self.duration_cycles() / self.calibration.cycles_per_second


def _meta_path(path) -> str:
    return os.fspath(path) + ".meta.json"


def write_trace(trace: DelayTrace, path):
    pairs = np.empty((len(trace), 2), dtype="<u8")
    pairs[:, 0] = trace.timestamps.astype(np.uint64)
    pairs[:, 1] = trace.delays.astype(np.uint64)
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack("<I", len(trace)))
        fh.write(pairs.tobytes())
    sidecar = {
        "clock": {
            "cycles_per_second": trace.calibration.cycles_per_second,
            "source": trace.calibration.source,
        },
        "backend_kind": trace.backend_kind,
        "profile": trace.profile,
    }
    sidecar.update(trace.meta)
    with open(_meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_trace(path) -> DelayTrace:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != TRACE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {TRACE_MAGIC!r}")
        (count,) = struct.unpack("<I", fh.read(4))
        raw = fh.read(count * 16)
    if len(raw) != count * 16:
        raise ValueError(f"{path}: truncated trace (expected {count} samples)")
    pairs = np.frombuffer(raw, dtype="<u8").reshape(count, 2)
    calibration = ClockCalibration(1e9, "simulated")
    backend_kind = "sim"
    profile = None
    meta = {}
    meta_path = _meta_path(path)
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
        clock = sidecar.pop("clock", {})
        calibration = ClockCalibration(
            clock.get("cycles_per_second", 1e9), clock.get("source", "simulated")
        )
        backend_kind = sidecar.pop("backend_kind", "sim")
        profile = sidecar.pop("profile", None)
        meta = sidecar
    return DelayTrace(
        pairs[:, 0].astype(np.int64),
        pairs[:, 1].astype(np.int64),
        calibration,
        backend_kind,
        profile=profile,
        meta=meta,
    )
