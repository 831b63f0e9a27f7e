"""Covert channel over filesystem-wide flush delays.

The sender dirties the journal with a small synchronous write to signal
a 1 bit and idles for a 0; the receiver flushes in a tight loop and
thresholds the observed delays.  Both sides anchor bit windows of
``bit_period`` cycles at a start stamp derived from the shared cycle
counter plus a pre-agreed offset, so neither needs a control channel.

Framing: start code, payload, a zero guard bit, then the all-ones end
code.  The payload is bit-stuffed (a 0 inserted after every
len(end_code)-1 consecutive ones) so no payload content can masquerade
as the end code; the guard bit keeps a payload suffix of ones from
bleeding into the flag.  Error rate is Levenshtein distance over the
payload bits divided by their count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .backend import IoKind, IoOp, KIND_SIMULATED
from .errors import AnalysisError, ChannelError
from .timekeeping import SOURCE_SIMULATED, calibrate, wait_until
from .traces import DelayTrace

_CHUNK = 4096


@dataclass
class ChannelConfig:
    """Wire parameters shared by sender and receiver."""

    bit_period: int = 131072
    spin_one: int = 0
    spin_zero: int = 0
    write_size: int = 64
    threshold: float | None = None
    start_code: str = "10101010"
    end_code: str = "1111111111"
    sync_offset: int = 1000
    stuffing: bool = True

    def __post_init__(self):
        if self.bit_period <= 0:
            raise ValueError("bit_period must be positive")
        if self.write_size <= 0:
            raise ValueError("write_size must be positive")
        if self.threshold is not None and self.threshold <= 0:
            raise ValueError("threshold must be positive")
        for name in ("start_code", "end_code"):
            code = getattr(self, name)
            if not code or set(code) - {"0", "1"}:
                raise ValueError(f"{name} must be a non-empty bit string")
        if self.start_code in self.end_code or self.end_code in self.start_code:
            raise ValueError("start_code and end_code must not contain each other")
        if self.stuffing and set(self.end_code) != {"1"}:
            raise ValueError(
                "bit stuffing requires an all-ones end_code; disable stuffing "
                "to use a custom one (the payload must then avoid it)"
            )

    @property
    def stuff_run(self) -> int:
        return len(self.end_code) - 1

    def frame(self, payload_bits: str) -> str:
        body = stuff_bits(payload_bits, self.stuff_run) if self.stuffing else payload_bits
        # The zero guard keeps a trailing run of payload ones out of the flag.
        guard = "0" if self.stuffing else ""
        return self.start_code + body + guard + self.end_code


@dataclass
class Message:
    payload: bytes

    @property
    def bits(self) -> str:
        return "".join(f"{byte:08b}" for byte in self.payload)

    @classmethod
    def from_bits(cls, bits: str) -> "Message":
        if len(bits) % 8:
            raise ValueError("bit count must be a multiple of 8")
        data = bytes(int(bits[i : i + 8], 2) for i in range(0, len(bits), 8))
        return cls(data)

    @classmethod
    def random(cls, n_bits: int, seed: int = 0) -> "Message":
        if n_bits % 8:
            raise ValueError("bit count must be a multiple of 8")
        rng = np.random.default_rng(seed)
        return cls(rng.bytes(n_bits // 8))


@dataclass
class SendReport:
    payload_bits: int
    frame_bits: int
    start: int
    elapsed_cycles: int
    overruns: int


@dataclass
class DecodeResult:
    bits: str
    end_found: bool
    threshold: float
    start_window: int


@dataclass
class ChannelReport:
    sent_bits: int
    elapsed_seconds: float
    bandwidth_kbps: float
    edit_distance: int
    error_rate: float

    def to_dict(self) -> dict:
        return {
            "sent_bits": self.sent_bits,
            "elapsed_seconds": self.elapsed_seconds,
            "bandwidth_kbps": self.bandwidth_kbps,
            "edit_distance": self.edit_distance,
            "error_rate": self.error_rate,
        }


def stuff_bits(bits: str, run: int) -> str:
    if run < 1:
        raise ValueError("stuff run must be >= 1")
    out = []
    count = 0
    for b in bits:
        out.append(b)
        count = count + 1 if b == "1" else 0
        if count == run:
            out.append("0")
            count = 0
    return "".join(out)


def unstuff_bits(bits: str, run: int) -> str:
    out = []
    count = 0
    i = 0
    n = len(bits)
    while i < n:
        b = bits[i]
        out.append(b)
        count = count + 1 if b == "1" else 0
        i += 1
        if count == run:
            i += 1  # drop the stuffed zero
            count = 0
    return "".join(out)


def agree_start(clock, sync_offset: int) -> int:
    """Start stamp both parties derive from the shared counter."""
    return clock.now() + int(sync_offset)


def levenshtein(a, b) -> int:
    """Minimum insert/delete/substitute edits between two strings."""
    return kernels.lev_distance(a, b)


def calibrate_threshold(trace_or_delays) -> float:
    """Two-cluster split of delay values; midpoint of the cluster means.

    1-D two-means with farthest-pair initialization, iterated to
    convergence.  Raises AnalysisError when all delays are equal.
    """
    if isinstance(trace_or_delays, DelayTrace):
        values = np.asarray(trace_or_delays.delays, dtype=np.float64)
    else:
        values = np.asarray(trace_or_delays, dtype=np.float64)
    if values.size < 2:
        raise AnalysisError("threshold calibration needs at least 2 samples")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise AnalysisError("degenerate trace: all delays are equal")
    for _ in range(100):
        mid = (lo + hi) / 2.0
        below = values[values <= mid]
        above = values[values > mid]
        new_lo = float(below.mean())
        new_hi = float(above.mean())
        if new_lo == lo and new_hi == hi:
            break
        lo, hi = new_lo, new_hi
    return (lo + hi) / 2.0


class _OnlineDecoder:
    """Incremental window decoder driving receiver termination.

    Samples are assigned to bit windows by flush start stamp; a window's
    bit is 1 when its maximum delay exceeds the threshold.  With no
    explicit threshold, decoding stays dormant until enough windows for
    the start code have completed, then self-calibrates on the delays
    seen so far.  Every newly completed window is suffix-checked against
    the end code.
    """

    def __init__(self, config: ChannelConfig, start: int):
        self.config = config
        self.start = start
        self.period = config.bit_period
        self.threshold = config.threshold
        self.settle_after = start + len(config.start_code) * config.bit_period
        self.end_pattern = [b == "1" for b in config.end_code]
        self.window_maxes: list[int] = []
        self.delays_seen: list[int] = []
        self.checked_to = -1
        self.stop_window: int | None = None

    def _window_of(self, t: int) -> int:
        return (t - self.start) // self.period

    def feed(self, t: int, d: int) -> bool:
        """Account one sample; True when the end code just completed."""
        if self.threshold is None:
            self.delays_seen.append(d)
        w = self._window_of(t)
        maxes = self.window_maxes
        while len(maxes) <= w:
            maxes.append(-1)
        if d > maxes[w]:
            maxes[w] = d
        now = t + d
        if self.threshold is None:
            if now >= self.settle_after:
                try:
                    self.threshold = calibrate_threshold(
                        np.asarray(self.delays_seen, dtype=np.float64)
                    )
                except AnalysisError:
                    return False  # nothing but baseline yet; retry next sample
            else:
                return False
        complete = self._window_of(now)  # windows [0, complete) are done
        pattern = self.end_pattern
        length = len(pattern)
        for w_done in range(self.checked_to + 1, min(complete, len(maxes))):
            self.checked_to = w_done
            if w_done < length - 1:
                continue
            match = True
            for k in range(length):
                bit = maxes[w_done - length + 1 + k] > self.threshold
                if bit != pattern[k]:
                    match = False
                    break
            if match:
                self.stop_window = w_done
                return True
        return False


def send(backend, message: Message, config: ChannelConfig, clock=None,
         start: int | None = None) -> SendReport:
    """Transmit start code, stuffed payload and end code in bit windows.

    For each 1 bit: one synchronous write then spin_one no-ops; for each
    0 bit: spin_zero no-ops.  The sender pads with idle waiting to the
    next window boundary, so a window never starts early; windows whose
    work ran past the boundary are counted as overruns.
    """
    clk = clock if clock is not None else backend.clock
    if start is None:
        start = agree_start(clk, config.sync_offset)
    frame = config.frame(message.bits)
    period = config.bit_period
    op = IoOp(IoKind.WRITE_SYNC, config.write_size)
    sim = clk.source == SOURCE_SIMULATED
    overruns = 0
    wait_until(clk, start)
    for i, bit in enumerate(frame):
        window_start = start + i * period
        wait_until(clk, window_start)
        if bit == "1":
            backend.perform_io(op, clock=clk)
            spins = config.spin_one
        else:
            spins = config.spin_zero
        if spins:
            if sim:
                clk.advance(spins)
            else:
                for _ in range(spins):
                    pass
        if clk.now() > window_start + period:
            overruns += 1
    end = start + len(frame) * period
    wait_until(clk, end)
    return SendReport(
        payload_bits=len(message.bits),
        frame_bits=len(frame),
        start=start,
        elapsed_cycles=end - start,
        overruns=overruns,
    )


def receive(backend, config: ChannelConfig, clock=None,
            max_samples: int = 1_000_000, start: int | None = None,
            max_rate: float | None = None) -> DelayTrace:
    """Flush in a loop, recording delays, until the end code or the cap.

    The returned trace carries ``end_code_found`` in its metadata; a trace
    that ran into max_samples is still returned, flagged False.
    """
    clk = clock if clock is not None else backend.clock
    cal = calibrate(clk, 50) if clk.source != SOURCE_SIMULATED else calibrate(clk)
    if start is None:
        start = agree_start(clk, config.sync_offset)
    min_interval = 0
    if max_rate is not None and math.isfinite(max_rate):
        if max_rate <= 0:
            raise ValueError("max_rate must be positive")
        min_interval = int(math.ceil(cal.cycles_per_second / max_rate))
    wait_until(clk, start)
    decoder = _OnlineDecoder(config, start)
    ts_parts: list[np.ndarray] = []
    d_parts: list[np.ndarray] = []
    end_found = False
    taken = 0

    chunked = backend.kind == KIND_SIMULATED and not backend.has_other_actors(clk)
    if chunked:
        cursor = backend.sampling_cursor(clk)
        while taken < max_samples and not end_found:
            n = min(_CHUNK, max_samples - taken)
            ts, ds, cursor = backend.run_chunk(cursor, n, min_interval=min_interval)
            if len(ts) == 0:
                break
            stop_at = None
            for j in range(len(ts)):
                if decoder.feed(int(ts[j]), int(ds[j])):
                    stop_at = j
                    break
            if stop_at is not None:
                ts, ds = ts[: stop_at + 1], ds[: stop_at + 1]
                end_found = True
                cursor.t_now = int(ts[-1] + ds[-1])
                backend.commit_cursor(cursor, clk, kept_last_start=int(ts[-1]))
            ts_parts.append(ts)
            d_parts.append(ds)
            taken += len(ts)
        if not end_found:
            backend.commit_cursor(cursor, clk)
    else:
        ts_list: list[int] = []
        d_list: list[int] = []
        last_start = -1
        while taken < max_samples and not end_found:
            if min_interval and last_start >= 0:
                wait_until(clk, last_start + min_interval)
            t = clk.now()
            d = backend.flush_all(clock=clk)
            ts_list.append(t)
            d_list.append(d)
            last_start = t
            taken += 1
            end_found = decoder.feed(t, d)
        ts_parts.append(np.asarray(ts_list, dtype=np.int64))
        d_parts.append(np.asarray(d_list, dtype=np.int64))

    timestamps = np.concatenate(ts_parts) if ts_parts else np.empty(0, np.int64)
    delays = np.concatenate(d_parts) if d_parts else np.empty(0, np.int64)
    meta = {
        "start_cycles": int(start),
        "end_code_found": bool(end_found),
        "bit_period": config.bit_period,
    }
    if decoder.threshold is not None:
        meta["online_threshold"] = float(decoder.threshold)
    if min_interval:
        meta["min_interval_cycles"] = min_interval
    return DelayTrace(
        timestamps, delays, cal, backend.kind,
        profile=getattr(backend, "profile_name", None), meta=meta,
    )


def window_bits(trace: DelayTrace, period: int, threshold: float,
                anchor: int | None = None) -> str:
    """Per-window bits: 1 when the window's max delay exceeds the threshold."""
    if len(trace) == 0:
        return ""
    ts = trace.timestamps
    anchor = int(ts[0]) if anchor is None else int(anchor)
    w = (ts - anchor) // period
    n_windows = int(w[-1]) + 1
    maxes = np.full(n_windows, -1, dtype=np.int64)
    np.maximum.at(maxes, w, trace.delays)
    return "".join("1" if m > threshold else "0" for m in maxes)


def decode(trace: DelayTrace, config: ChannelConfig, threshold: float | None = None,
           anchor: int | None = None) -> DecodeResult:
    """Recover payload bits from a trace.

    Windows are anchored at the first sample; the start code is located in
    the window bit string, the payload runs to the end-code match and is
    unstuffed.  A missing start code raises; a missing end code returns
    best-effort bits flagged end_found=False.
    """
    if threshold is None:
        threshold = config.threshold
    if threshold is None:
        threshold = calibrate_threshold(trace)
    raw = window_bits(trace, config.bit_period, threshold, anchor=anchor)
    idx = raw.find(config.start_code)
    if idx < 0:
        raise ChannelError("start code not found in decoded windows")
    after = raw[idx + len(config.start_code):]
    pos = after.find(config.end_code)
    end_found = pos >= 0
    body = after[:pos] if end_found else after
    if config.stuffing:
        if end_found and body.endswith("0"):
            body = body[:-1]  # frame guard bit
        bits = unstuff_bits(body, config.stuff_run)
    else:
        bits = body
    return DecodeResult(
        bits=bits, end_found=end_found, threshold=float(threshold), start_window=idx
    )


def evaluate(sent: Message, decoded_bits: str, elapsed_seconds: float) -> ChannelReport:
    """Bandwidth (payload bits / elapsed, in kbit/s) and Levenshtein error rate."""
    if elapsed_seconds <= 0:
        raise ValueError("elapsed_seconds must be positive")
    sent_bits = sent.bits
    dist = levenshtein(sent_bits, decoded_bits)
    return ChannelReport(
        sent_bits=len(sent_bits),
        elapsed_seconds=elapsed_seconds,
        bandwidth_kbps=len(sent_bits) / elapsed_seconds / 1000.0,
        edit_distance=dist,
        error_rate=dist / len(sent_bits) if sent_bits else 0.0,
    )


@dataclass
class LoopbackResult:
    report: ChannelReport
    decode: DecodeResult
    send_report: SendReport
    trace: DelayTrace


def loopback(backend, message: Message, config: ChannelConfig,
             threaded: bool = False) -> LoopbackResult:
    """Run sender and receiver against one simulated backend.

    Each actor gets its own fork of the backend clock (same origin, so
    agree_start yields identical stamps).  Sequential mode replays the
    sender's timeline first; threaded mode runs both as real threads under
    the backend's two-actor rendezvous.  Both produce the same trace.
    """
    if backend.kind != KIND_SIMULATED:
        raise ValueError("loopback runs on a simulated backend; use send/recv on real mounts")
    sender_clock = backend.clock.fork()
    receiver_clock = backend.clock.fork()
    frame_len = len(config.frame(message.bits))
    est_samples = int(frame_len * config.bit_period / backend.profile.base_delay)
    max_samples = 2 * est_samples + 10_000

    if threaded:
        import threading

        holder: list[SendReport] = []

        def run_sender():
            with backend.actor(sender_clock):
                holder.append(send(backend, message, config, clock=sender_clock))

        sender = threading.Thread(target=run_sender)
        sender.start()
        try:
            trace = receive(backend, config, clock=receiver_clock, max_samples=max_samples)
        finally:
            sender.join()
        send_report = holder[0]
    else:
        send_report = send(backend, message, config, clock=sender_clock)
        trace = receive(backend, config, clock=receiver_clock, max_samples=max_samples)

    result = decode(trace, config)
    elapsed = trace.duration_seconds()
    report = evaluate(message, result.bits, elapsed)
    return LoopbackResult(report=report, decode=result, send_report=send_report, trace=trace)
