"""Filesystem backends: the five primitive actions everything else uses.

Both backends expose the same surface (perform_io() for the four dirty
operations plus flush_all() for the filesystem-wide flush) so the
channel, microbench and probe layers run unmodified against either.

The simulated backend is event-sourced: perform_io records a timestamped
mutation, and a flush folds every mutation stamped at or before its own
start into the dirty counters, prices the flush with the delay model,
then drains them.  That makes the two-actor case (a sender writing while
a receiver flushes) exact: each actor carries its own position on the
shared virtual timeline and mutations land at the sender's stamps no
matter when the Python code actually runs.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import enum
import math
import os
import threading
from bisect import insort
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BackendIoError, BackendOpenError
from .simulator import (
    NOISE_GAUSSIAN,
    NOISE_LOGNORMAL,
    NOISE_NONE,
    DelayProfile,
    FsState,
    TimedEvent,
    load_profile,
    model_delay,
)
from .timekeeping import SimulatedClock, make_clock

KIND_SIMULATED = "sim"
KIND_REAL = "real"


class IoKind(enum.Enum):
    WRITE = "write"
    WRITE_SYNC = "write-sync"
    FTRUNCATE = "ftruncate"
    RENAME = "rename"
    FLUSH_ALL = "flush-all"


# Dirty-buffer footprint of each operation: (bytes written, inodes, journal
# entries).  Bytes scale with the op's size; the other two are per call.
_EFFECTS = {
    IoKind.WRITE: (True, 1, 1),
    IoKind.WRITE_SYNC: (False, 0, 1),
    IoKind.FTRUNCATE: (False, 1, 1),
    IoKind.RENAME: (False, 1, 1),
}

_OP_ALIASES = {
    "write": IoKind.WRITE,
    "write-sync": IoKind.WRITE_SYNC,
    "write_sync": IoKind.WRITE_SYNC,
    "write(o_sync)": IoKind.WRITE_SYNC,
    "ftruncate": IoKind.FTRUNCATE,
    "rename": IoKind.RENAME,
    "flush-all": IoKind.FLUSH_ALL,
    "flush_all": IoKind.FLUSH_ALL,
    "baseline": IoKind.FLUSH_ALL,
}


@dataclass(frozen=True)
class IoOp:
    kind: IoKind
    size_bytes: int = 0

    def __post_init__(self):
        if self.kind in (IoKind.WRITE, IoKind.WRITE_SYNC) and self.size_bytes <= 0:
            raise ValueError(f"{self.kind.value} requires size_bytes > 0")

    @classmethod
    def parse(cls, name: str, size_bytes: int = 0) -> "IoOp":
        key = name.strip().lower()
        if key not in _OP_ALIASES:
            raise ValueError(f"unknown I/O operation {name!r}")
        return cls(_OP_ALIASES[key], size_bytes)

    def effects(self) -> tuple[int, int, int]:
        scaled, inodes, journal = _EFFECTS[self.kind]
        return (self.size_bytes if scaled else 0, inodes, journal)


@dataclass
class BackendDescriptor:
    kind: str
    working_path: str | None = None
    profile_name: str | None = None

    @classmethod
    def parse(cls, spec: str) -> "BackendDescriptor":
        """Parse a CLI backend spec: ``sim:<profile>`` or ``real:<path>``."""
        head, sep, rest = spec.partition(":")
        if not sep or not rest:
            raise ValueError(f"backend spec {spec!r} must be sim:<profile> or real:<path>")
        if head == KIND_SIMULATED:
            return cls(KIND_SIMULATED, profile_name=rest)
        if head == KIND_REAL:
            return cls(KIND_REAL, working_path=rest)
        raise ValueError(f"unknown backend kind {head!r}")


_NOISE_CODES = {NOISE_NONE: 0, NOISE_GAUSSIAN: 1, NOISE_LOGNORMAL: 2}

_EMPTY_I64 = np.empty(0, dtype=np.int64)
_EMPTY_F64 = np.empty(0, dtype=np.float64)


@dataclass
class SamplingCursor:
    """Receiver-side position in a chunked sampling run (uncommitted)."""

    t_now: int
    last_start: int
    head: int
    dirty_bytes: int = 0
    dirty_inodes: int = 0
    journal_entries: int = 0


class SimulatedBackend:
    """Delay-model backend over one virtual filesystem state."""

    kind = KIND_SIMULATED

    def __init__(self, profile: DelayProfile, clock: SimulatedClock | None = None,
                 seed: int = 0, noise: str | None = None):
        if noise == "off":
            profile = profile.without_noise()
        self.profile = profile
        self.profile_name = profile.name
        self.clock = clock if clock is not None else SimulatedClock()
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._state = FsState()
        self._queue: list[tuple[int, int, int, int]] = []
        self._head = 0
        self._queue_version = 0
        self._queue_cache = None
        self._cond = threading.Condition()
        self._actors: dict[int, object] = {}
        self._op_costs = {
            IoKind.WRITE: 100,
            IoKind.FTRUNCATE: 100,
            IoKind.RENAME: 100,
            # A synchronous write waits for its journal commit.
            IoKind.WRITE_SYNC: max(1, int(round(profile.journal_cost))),
        }

    # -- actor bookkeeping (two-actor linearizability contract) ------------

    def register_actor(self, clock):
        with self._cond:
            self._actors[id(clock)] = clock
            self._cond.notify_all()

    def unregister_actor(self, clock):
        with self._cond:
            self._actors.pop(id(clock), None)
            self._cond.notify_all()

    def actor(self, clock):
        backend = self

        class _Ctx:
            def __enter__(self):
                backend.register_actor(clock)
                return clock

            def __exit__(self, *exc):
                backend.unregister_actor(clock)

        return _Ctx()

    def has_other_actors(self, clock) -> bool:
        with self._cond:
            return any(k != id(clock) for k in self._actors)

    def _wait_for_peers(self, clock, t: int):
        # A flush snapshotting the state at time t must not run until every
        # other registered actor has moved past t on the shared timeline.
        while True:
            others = [c for k, c in self._actors.items() if k != id(clock)]
            if all(c.now() >= t for c in others):
                return
            self._cond.wait(timeout=0.001)

    # -- state ---------------------------------------------------------------

    @property
    def state(self) -> FsState:
        """Snapshot of the dirty state including not-yet-flushed mutations."""
        b, i, j = self._state.dirty_bytes, self._state.dirty_inodes, self._state.journal_entries
        for t, db, di, dj in self._queue[self._head:]:
            b += db
            i += di
            j += dj
        return FsState(b, i, j, list(self._state.pending_events))

    def inject_event(self, event: TimedEvent):
        self._state.pending_events.append(event)
        self._state.prune_events(self.clock.now())

    def schedule_io(self, at: int, op: IoOp):
        """Queue a mutation to land at virtual time ``at`` (workload scripts)."""
        self._push(at, op)

    def _push(self, t: int, op: IoOp):
        db, di, dj = op.effects()
        with self._cond:
            insort(self._queue, (int(t), db, di, dj))
            self._queue_version += 1
            self._cond.notify_all()

    def _queue_arrays(self):
        if self._queue_cache is None or self._queue_cache[0] != self._queue_version:
            if self._queue:
                arr = np.asarray(self._queue, dtype=np.int64)
                cols = (
                    np.ascontiguousarray(arr[:, 0]),
                    np.ascontiguousarray(arr[:, 1]),
                    np.ascontiguousarray(arr[:, 2]),
                    np.ascontiguousarray(arr[:, 3]),
                )
            else:
                cols = (_EMPTY_I64, _EMPTY_I64, _EMPTY_I64, _EMPTY_I64)
            self._queue_cache = (self._queue_version, cols)
        return self._queue_cache[1]

    def _spike_arrays(self):
        events = self._state.pending_events
        if not events:
            return _EMPTY_I64, _EMPTY_I64, _EMPTY_F64
        at = np.asarray([e.at for e in events], dtype=np.int64)
        end = np.asarray([e.at + e.duration for e in events], dtype=np.int64)
        extra = np.asarray([float(e.extra_delay) for e in events], dtype=np.float64)
        return at, end, extra

    # -- the five primitive operations ----------------------------------------

    def perform_io(self, op: IoOp, clock=None, file_index: int = 0) -> int:
        clk = clock if clock is not None else self.clock
        if op.kind is IoKind.FLUSH_ALL:
            return self.flush_all(clock=clk)
        t = clk.now()
        self._push(t, op)
        cost = self._op_costs[op.kind]
        clk.advance(cost)
        return cost

    def flush_all(self, clock=None) -> int:
        clk = clock if clock is not None else self.clock
        with self._cond:
            self._wait_for_peers(clk, clk.now())
            t = clk.now()
            while self._head < len(self._queue) and self._queue[self._head][0] <= t:
                _, db, di, dj = self._queue[self._head]
                self._state.dirty_bytes += db
                self._state.dirty_inodes += di
                self._state.journal_entries += dj
                self._head += 1
            if self._head > 4096:
                del self._queue[: self._head]
                self._head = 0
                self._queue_version += 1
            rng = self._rng if self.profile.noise_kind != NOISE_NONE else None
            det = model_delay(self._state, self.profile, now=t, rng=rng)
            delay = int(math.floor(det + 0.5))
            if delay < 1:
                delay = 1
            self._state.clear_dirty()
            self._state.prune_events(t)
            clk.advance(delay)
            self._cond.notify_all()
            return delay

    # -- chunked sampling (solo receiver fast path) ----------------------------

    def sampling_cursor(self, clock=None) -> SamplingCursor:
        clk = clock if clock is not None else self.clock
        return SamplingCursor(
            t_now=clk.now(),
            last_start=-1,
            head=self._head,
            dirty_bytes=self._state.dirty_bytes,
            dirty_inodes=self._state.dirty_inodes,
            journal_entries=self._state.journal_entries,
        )

    def run_chunk(self, cursor: SamplingCursor, max_n: int,
                  min_interval: int = 0):
        """Simulate up to max_n flushes from the cursor without committing.

        Returns (timestamps, delays, new_cursor).  Noise draws are consumed
        from the backend generator; commit_cursor() publishes the queue/clock
        effects once the caller decides how much of the chunk to keep.
        """
        prof = self.profile
        noise_code = _NOISE_CODES[prof.noise_kind]
        if noise_code:
            z = self._rng.standard_normal(max_n)
        else:
            z = _EMPTY_F64
        io_times, io_bytes, io_inodes, io_journal = self._queue_arrays()
        spike_at, spike_end, spike_extra = self._spike_arrays()
        out_ts = np.empty(max_n, dtype=np.int64)
        out_delay = np.empty(max_n, dtype=np.int64)
        produced, t_now, last_start, head, db, di, dj = kernels.simulate_flush_chunk(
            max_n,
            cursor.t_now,
            cursor.last_start,
            int(min_interval),
            cursor.dirty_bytes,
            cursor.dirty_inodes,
            cursor.journal_entries,
            prof.base_delay,
            prof.page_cost,
            prof.above_page_cost,
            prof.inode_cost,
            prof.journal_cost,
            noise_code,
            prof.noise_sigma ** 2,
            prof.page_noise_var / 4096.0,
            prof.inode_noise_var,
            prof.journal_noise_var,
            z,
            io_times,
            io_bytes,
            io_inodes,
            io_journal,
            cursor.head,
            spike_at,
            spike_end,
            spike_extra,
            out_ts,
            out_delay,
        )
        new_cursor = SamplingCursor(
            t_now=t_now, last_start=last_start, head=head,
            dirty_bytes=db, dirty_inodes=di, journal_entries=dj,
        )
        return out_ts[:produced], out_delay[:produced], new_cursor

    def commit_cursor(self, cursor: SamplingCursor, clock=None,
                      kept_last_start: int | None = None):
        """Publish a chunk run: consume the queue, settle state and clock.

        When the caller truncated the chunk (end code found mid-chunk),
        kept_last_start is the start stamp of the last kept sample and the
        queue is rewound so mutations after it stay pending.
        """
        clk = clock if clock is not None else self.clock
        with self._cond:
            if kept_last_start is not None:
                io_times = self._queue_arrays()[0]
                self._head = int(
                    np.searchsorted(io_times, kept_last_start, side="right")
                )
                # Every flush drains the dirty counters, and truncation always
                # cuts right after a kept flush.
                self._state.clear_dirty()
            else:
                self._head = cursor.head
                self._state.dirty_bytes = cursor.dirty_bytes
                self._state.dirty_inodes = cursor.dirty_inodes
                self._state.journal_entries = cursor.journal_entries
            clk.sleep_until(cursor.t_now)
            self._state.prune_events(clk.now())
            self._cond.notify_all()

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# --------------------------------------------------------------------------
# Real backend: actual system calls against a scratch file
# --------------------------------------------------------------------------


def _load_syncfs():
    name = ctypes.util.find_library("c") or "libc.so.6"
    try:
        libc = ctypes.CDLL(name, use_errno=True)
        fn = libc.syncfs
    except (OSError, AttributeError) as exc:
        raise BackendOpenError(
            "this platform exposes no filesystem-wide flush call (syncfs); "
            "a per-file flush is not an acceptable substitute"
        ) from exc
    fn.argtypes = [ctypes.c_int]
    fn.restype = ctypes.c_int
    return fn


class RealBackend:
    """Backend issuing real system calls, confined to its own scratch files."""

    kind = KIND_REAL

    SCRATCH_PREFIX = "syncprobe-scratch"

    def __init__(self, working_path: str, clock=None):
        if not os.path.isdir(working_path):
            raise BackendOpenError(f"path not writable: {working_path!r} is not a directory")
        self.working_path = working_path
        self.profile_name = None
        self.clock = clock if clock is not None else make_clock()
        self._syncfs = _load_syncfs()
        self._fds: dict[int, int] = {}
        self._sync_fds: dict[int, int] = {}
        self._names: dict[int, str] = {}
        self._rename_flip: dict[int, bool] = {}
        self._trunc_flip: dict[int, bool] = {}
        try:
            self._ensure_file(0)
        except OSError as exc:
            raise BackendOpenError(f"path not writable: {working_path!r} ({exc})") from exc

    def _base_name(self, index: int) -> str:
        return os.path.join(
            self.working_path, f"{self.SCRATCH_PREFIX}-{os.getpid()}-{index}.dat"
        )

    def _ensure_file(self, index: int) -> int:
        if index not in self._fds:
            name = self._base_name(index)
            fd = os.open(name, os.O_RDWR | os.O_CREAT, 0o600)
            os.pwrite(fd, b"\0" * 64, 0)
            self._fds[index] = fd
            self._names[index] = name
            self._rename_flip[index] = False
            self._trunc_flip[index] = False
        return self._fds[index]

    def _ensure_sync_fd(self, index: int) -> int:
        if index not in self._sync_fds:
            self._ensure_file(index)
            self._sync_fds[index] = os.open(self._names[index], os.O_WRONLY | os.O_SYNC)
        return self._sync_fds[index]

    def ensure_files(self, count: int):
        for i in range(count):
            self._ensure_file(i)

    def perform_io(self, op: IoOp, clock=None, file_index: int = 0) -> int:
        clk = clock if clock is not None else self.clock
        if op.kind is IoKind.FLUSH_ALL:
            return self.flush_all(clock=clk)
        t0 = clk.now()
        try:
            if op.kind is IoKind.WRITE:
                fd = self._ensure_file(file_index)
                os.pwrite(fd, b"\xa5" * op.size_bytes, 0)
            elif op.kind is IoKind.WRITE_SYNC:
                fd = self._ensure_sync_fd(file_index)
                os.pwrite(fd, b"\xa5" * op.size_bytes, 0)
            elif op.kind is IoKind.FTRUNCATE:
                # Alternate 0/64 so every call changes the size and therefore
                # dirties the inode; truncating a 0-byte file to 0 would not.
                fd = self._ensure_file(file_index)
                self._trunc_flip[file_index] = not self._trunc_flip[file_index]
                os.ftruncate(fd, 0 if self._trunc_flip[file_index] else 64)
            elif op.kind is IoKind.RENAME:
                self._ensure_file(file_index)
                old = self._names[file_index]
                flip = self._rename_flip[file_index] = not self._rename_flip[file_index]
                base = self._base_name(file_index)
                new = base + ".alt" if flip else base
                os.rename(old, new)
                self._names[file_index] = new
        except OSError as exc:
            raise BackendIoError(f"{op.kind.value} failed: {exc}", errno=exc.errno) from exc
        return max(1, clk.now() - t0)

    def flush_all(self, clock=None) -> int:
        clk = clock if clock is not None else self.clock
        fd = self._ensure_file(0)
        t0 = clk.now()
        rc = self._syncfs(fd)
        t1 = clk.now()
        if rc != 0:
            err = ctypes.get_errno()
            raise BackendIoError(f"syncfs failed: {os.strerror(err)}", errno=err)
        return max(1, t1 - t0)

    def close(self):
        for fd in list(self._sync_fds.values()) + list(self._fds.values()):
            try:
                os.close(fd)
            except OSError:
                pass
        for name in self._names.values():
            try:
                os.unlink(name)
            except OSError:
                pass
        self._fds.clear()
        self._sync_fds.clear()
        self._names.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_backend(descriptor: BackendDescriptor, *, clock=None, seed: int = 0,
                 noise: str | None = None):
    """Open a backend from a descriptor; see BackendDescriptor.parse."""
    if descriptor.kind == KIND_SIMULATED:
        if not descriptor.profile_name:
            raise BackendOpenError("simulated backend needs a profile name")
        profile = load_profile(descriptor.profile_name)
        return SimulatedBackend(profile, clock=clock, seed=seed, noise=noise)
    if descriptor.kind == KIND_REAL:
        if not descriptor.working_path:
            raise BackendOpenError("real backend needs a working path")
        return RealBackend(descriptor.working_path, clock=clock)
    raise BackendOpenError(f"unknown backend kind {descriptor.kind!r}")
