"""Scripted victims for the simulator.

A workload script is a named list of steps at cycle offsets: I/O
operations (write, write-sync, ftruncate, rename) or container
mount/unmount events.  Running one schedules every step against a
simulated backend while a built-in receiver samples; this is how
labeled fingerprinting datasets are generated without real victim
applications.

Script files are UTF-8 JSON:

    {"name": "burst-writer",
     "steps": [{"offset_cycles": 0, "op": "write", "size_bytes": 512},
               {"offset_cycles": 500000, "op": "mount",
                "extra_delay": 1000000, "duration": 20000}]}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .analysis import rate_limited_probe, stft, write_spectrogram
from .backend import IoOp, SimulatedBackend
from .simulator import (
    EVENT_CONTAINER_MOUNT,
    EVENT_CONTAINER_UNMOUNT,
    TimedEvent,
    load_profile,
)
from .traces import DelayTrace

_EVENT_OPS = {"mount": EVENT_CONTAINER_MOUNT, "unmount": EVENT_CONTAINER_UNMOUNT}


@dataclass
class Step:
    offset_cycles: int
    op: str
    size_bytes: int = 0
    extra_delay: int = 0
    duration: int = 0

    def is_event(self) -> bool:
        return self.op in _EVENT_OPS

    def to_json(self) -> dict:
        d = {"offset_cycles": self.offset_cycles, "op": self.op}
        if self.is_event():
            d["extra_delay"] = self.extra_delay
            d["duration"] = self.duration
        elif self.size_bytes:
            d["size_bytes"] = self.size_bytes
        return d


@dataclass
class WorkloadScript:
    name: str
    steps: list[Step] = field(default_factory=list)

    def __post_init__(self):
        offsets = [s.offset_cycles for s in self.steps]
        if offsets != sorted(offsets):
            raise ValueError("script steps must be sorted by offset_cycles")
        for s in self.steps:
            if s.offset_cycles < 0:
                raise ValueError("step offsets must be non-negative")
            if s.is_event() and (s.extra_delay <= 0 or s.duration <= 0):
                raise ValueError(f"{s.op} step needs positive extra_delay and duration")
            if not s.is_event():
                IoOp.parse(s.op, s.size_bytes)  # validates op name and size

    def to_json(self) -> dict:
        return {"name": self.name, "steps": [s.to_json() for s in self.steps]}

    @classmethod
    def from_json(cls, data: dict) -> "WorkloadScript":
        steps = [
            Step(
                offset_cycles=int(s["offset_cycles"]),
                op=str(s["op"]),
                size_bytes=int(s.get("size_bytes", 0)),
                extra_delay=int(s.get("extra_delay", 0)),
                duration=int(s.get("duration", 0)),
            )
            for s in data.get("steps", [])
        ]
        return cls(name=str(data.get("name", "unnamed")), steps=steps)


def load_script(path) -> WorkloadScript:
    with open(path, encoding="utf-8") as fh:
        return WorkloadScript.from_json(json.load(fh))


def save_script(script: WorkloadScript, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(script.to_json(), fh, indent=2)
        fh.write("\n")


def run_script(backend: SimulatedBackend, script: WorkloadScript,
               n_samples: int, max_rate: float | None = None,
               start_jitter: int = 0) -> DelayTrace:
    """Schedule every step, then sample n_samples flushes.

    start_jitter > 0 launches the victim at a uniform random offset in
    [0, start_jitter) cycles, derived from the backend seed: real victims
    are not phase-locked to the probe grid, and without this every trace
    of a class would place its I/O in the same probe intervals.
    """
    t0 = backend.clock.now()
    if start_jitter > 0:
        jitter_rng = np.random.default_rng((backend.seed, 0x9E3779B9))
        t0 += int(jitter_rng.integers(0, start_jitter))
    for step in script.steps:
        at = t0 + step.offset_cycles
        if step.is_event():
            backend.inject_event(
                TimedEvent(_EVENT_OPS[step.op], at=at,
                           extra_delay=step.extra_delay, duration=step.duration)
            )
        else:
            backend.schedule_io(at, IoOp.parse(step.op, step.size_bytes))
    trace = rate_limited_probe(backend, max_rate=max_rate, n_samples=n_samples)
    meta = dict(trace.meta)
    meta["script"] = script.name
    return DelayTrace(trace.timestamps, trace.delays, trace.calibration,
                      trace.backend_kind, profile=trace.profile, meta=meta)


def pattern_script(name: str, pattern, period: int, duration: int) -> WorkloadScript:
    """Repeat a within-period burst pattern of (offset, op, size) triples."""
    if any(off >= period for off, _, _ in pattern):
        raise ValueError("pattern offsets must fall inside one period")
    steps = [
        Step(offset_cycles=base + off, op=op, size_bytes=size)
        for base in range(0, duration, period)
        for off, op, size in pattern
    ]
    return WorkloadScript(name=name, steps=steps)


def periodic_script(name: str, op: str, size_bytes: int, period: int,
                    duration: int) -> WorkloadScript:
    return pattern_script(name, [(0, op, size_bytes)], period, duration)


def demo_scripts(duration: int = 232_000_000) -> list[WorkloadScript]:
    """Five synthetic victim classes with persistent, distinct write patterns.

    Three classes have coarsely distinct footprints (small async writes,
    bulk writes, metadata churn).  The other two issue the same
    synchronous writes at the same mean cadence and differ only in
    rhythm: steady 56k-cycle gaps versus alternating 51k/61k gaps, both
    two events per 112k-cycle pattern.  A probe sampling faster than the
    rhythm resolves the gap pattern; any window one whole pattern long
    contains exactly two events for either class, so a probe rate-limited
    to that granularity drains identical dirty state per flush for both
    and the pair becomes indistinguishable in principle -- the temporal
    resolution the mitigation experiment takes away.
    """
    return [
        periodic_script("steady-sync", "write-sync", 64, 56_000, duration),
        pattern_script("swung-sync",
                       [(0, "write-sync", 64), (51_000, "write-sync", 64)],
                       112_000, duration),
        periodic_script("page-writer", "write", 512, 90_000, duration),
        periodic_script("bulk-writer", "write", 2048, 200_000, duration),
        periodic_script("metadata-churner", "ftruncate", 0, 120_000, duration),
    ]


def export_dataset(out_dir, scripts, profile_name: str, per_class: int,
                   n_samples: int = 2048, window_size: int = 256,
                   hop: int | None = None, seed: int = 0,
                   max_rate: float | None = None,
                   noise: str | None = None, start_jitter: int = 0) -> dict:
    """Run each script per_class times with fresh seeds; write spectrograms.

    Layout: <out>/<class>/<trace_id>.spec (+ .meta.json sidecars) and one
    manifest.json naming classes, counts and the spectrogram shape.
    """
    if hop is None:
        hop = window_size // 2
    profile = load_profile(profile_name)
    os.makedirs(out_dir, exist_ok=True)
    classes = []
    shape = None
    for class_idx, script in enumerate(scripts):
        label = script.name
        classes.append(label)
        class_dir = os.path.join(out_dir, label)
        os.makedirs(class_dir, exist_ok=True)
        for rep in range(per_class):
            run_seed = seed * 1_000_000 + class_idx * 1_000 + rep
            backend = SimulatedBackend(profile, seed=run_seed, noise=noise)
            trace = run_script(backend, script, n_samples, max_rate=max_rate,
                               start_jitter=start_jitter)
            spec = stft(trace, window_size=window_size, hop=hop,
                        source=f"{label}/{rep:04d}")
            shape = [spec.freq_bins, spec.frames]
            write_spectrogram(spec, os.path.join(class_dir, f"{rep:04d}.spec"),
                              label=label)
    manifest = {
        "classes": classes,
        "traces_per_class": per_class,
        "spec_shape": shape,
        "profile": profile_name,
        "samples_per_trace": n_samples,
        "window_size": window_size,
        "hop": hop,
        "seed": seed,
        "max_rate": max_rate,
        "start_jitter": start_jitter,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
