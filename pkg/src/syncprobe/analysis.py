"""Trace post-processing: spectrograms, SNR, spike detection, rate limiting.

The STFT mean-centers each window (removing the baseline-delay pedestal
that would otherwise bury every other bin), applies a periodic Hann
window and keeps linear magnitudes of the non-redundant DFT bins.
Spike detection uses median/MAD statistics so the spikes themselves
cannot contaminate the threshold.  All functions here are pure over
immutable traces.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, receive
from .errors import AnalysisError
from .traces import DelayTrace

SPECTROGRAM_MAGIC = b"SYNCSPC1"


@dataclass
class Spectrogram:
    magnitudes: np.ndarray  # [freq_bins, frames], linear scale
    window_size: int
    hop: int
    source_trace: str = "<memory>"

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        if self.magnitudes.ndim != 2:
            raise ValueError("magnitudes must be a 2-D [freq_bins, frames] matrix")
        if self.magnitudes.shape[0] != self.window_size // 2 + 1:
            raise ValueError("freq_bins must equal window_size // 2 + 1")
        if np.any(self.magnitudes < 0):
            raise ValueError("magnitudes must be non-negative")

    @property
    def freq_bins(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def frames(self) -> int:
        return self.magnitudes.shape[1]


@dataclass
class SnrReport:
    signal_variance: float
    noise_variance: float
    snr: float

    def to_dict(self) -> dict:
        return {
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "snr": self.snr,
        }


@dataclass
class SpikeEvent:
    index: int
    delay: int
    z_score: float


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (the STFT-appropriate, non-symmetric variant)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(trace: DelayTrace, window_size: int = 256, hop: int | None = None,
         source: str | None = None) -> Spectrogram:
    """Short-time Fourier transform over the delay values of a trace.

    Each frame is mean-centered, Hann-windowed and transformed; the
    magnitudes of the window_size//2 + 1 non-redundant bins are kept.
    Frames advance by ``hop`` (default window_size // 2).
    """
    if window_size < 2 or window_size & (window_size - 1):
        raise ValueError("window_size must be a power of two >= 2")
    if hop is None:
        hop = window_size // 2
    if not 1 <= hop <= window_size:
        raise ValueError("hop must satisfy 1 <= hop <= window_size")
    x = np.asarray(trace.delays, dtype=np.float64)
    if len(x) < window_size:
        raise AnalysisError(
            f"trace too short: {len(x)} samples < window size {window_size}"
        )
    n_frames = (len(x) - window_size) // hop + 1
    win = hann_window(window_size)
    mags = np.empty((window_size // 2 + 1, n_frames), dtype=np.float64)
    for f in range(n_frames):
        seg = x[f * hop : f * hop + window_size]
        seg = (seg - seg.mean()) * win
        mags[:, f] = np.abs(np.fft.rfft(seg))
    name = source if source is not None else trace.meta.get("source", "<memory>")
    return Spectrogram(mags, window_size=window_size, hop=hop, source_trace=name)


def snr(signal: DelayTrace, noise: DelayTrace) -> SnrReport:
    """Variance ratio Var(signal delays) / Var(noise delays)."""
    if len(signal) == 0 or len(noise) == 0:
        raise AnalysisError("snr needs non-empty signal and noise traces")
    sig_var = float(np.var(np.asarray(signal.delays, dtype=np.float64)))
    noise_var = float(np.var(np.asarray(noise.delays, dtype=np.float64)))
    if noise_var == 0.0:
        raise AnalysisError("noise trace has zero variance")
    return SnrReport(signal_variance=sig_var, noise_variance=noise_var,
                     snr=sig_var / noise_var)


def detect_spikes(trace: DelayTrace, z_threshold: float = 6.0,
                  min_separation: int = 16) -> list[SpikeEvent]:
    """Find isolated delay spikes (container mount/unmount signatures).

    Center and scale come from the median and the MAD scaled to sigma, so
    the spikes themselves do not shift the threshold.  Flagged samples
    closer than min_separation collapse into one event at the local
    maximum.  A flat trace yields no events.
    """
    if len(trace) < 16:
        raise AnalysisError("spike detection needs at least 16 samples")
    delays = np.asarray(trace.delays, dtype=np.float64)
    center = float(np.median(delays))
    mad = float(np.median(np.abs(delays - center)))
    scale = 1.4826 * mad
    dev = delays - center
    if scale == 0.0:
        z = np.where(dev == 0.0, 0.0, np.inf)
    else:
        z = dev / scale
    flagged = np.flatnonzero(z > z_threshold)
    events: list[SpikeEvent] = []
    group: list[int] = []
    for idx in flagged:
        if group and idx - group[-1] >= min_separation:
            events.append(_group_peak(group, trace, z))
            group = []
        group.append(int(idx))
    if group:
        events.append(_group_peak(group, trace, z))
    return events


def _group_peak(group, trace: DelayTrace, z) -> SpikeEvent:
    peak = max(group, key=lambda i: trace.delays[i])
    return SpikeEvent(index=peak, delay=int(trace.delays[peak]),
                      z_score=float(z[peak]))


def rate_limited_probe(backend, clock=None, max_rate: float | None = None,
                       n_samples: int = 1000) -> DelayTrace:
    """Receiver-style sampling loop capped at max_rate flush calls/second.

    max_rate None (or inf) samples flat out.  The achieved rate is
    recorded in the trace metadata.
    """
    # A sampling-only config: an unreachable threshold keeps the online
    # decoder from ever matching an end code, so only n_samples stops it.
    cfg = ChannelConfig(threshold=float("inf"), sync_offset=0)
    trace = receive(backend, cfg, clock=clock, max_samples=n_samples,
                    max_rate=max_rate)
    meta = dict(trace.meta)
    meta.pop("end_code_found", None)
    meta.pop("online_threshold", None)
    duration = trace.duration_seconds()
    if len(trace) > 1:
        span = (trace.timestamps[-1] - trace.timestamps[0]) / trace.calibration.cycles_per_second
        meta["achieved_rate"] = (len(trace) - 1) / span if span > 0 else float("inf")
    elif duration > 0:
        meta["achieved_rate"] = len(trace) / duration
    else:
        meta["achieved_rate"] = 0.0
    if max_rate is not None and math.isfinite(max_rate):
        meta["max_rate"] = max_rate
    return DelayTrace(trace.timestamps, trace.delays, trace.calibration,
                      trace.backend_kind, profile=trace.profile, meta=meta)


# -- spectrogram files ---------------------------------------------------------

def write_spectrogram(spec: Spectrogram, path, label: str | None = None):
    """SYNCSPC1: u32 freq_bins, frames, window, hop; f32 freq-major data."""
    mags = np.ascontiguousarray(spec.magnitudes, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(SPECTROGRAM_MAGIC)
        fh.write(struct.pack("<IIII", spec.freq_bins, spec.frames,
                             spec.window_size, spec.hop))
        fh.write(mags.tobytes())
    sidecar = {"source_trace": spec.source_trace, "label": label}
    with open(os.fspath(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_spectrogram(path) -> tuple[Spectrogram, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != SPECTROGRAM_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {SPECTROGRAM_MAGIC!r}")
        bins, frames, window, hop = struct.unpack("<IIII", fh.read(16))
        raw = fh.read(bins * frames * 4)
    if len(raw) != bins * frames * 4:
        raise ValueError(f"{path}: truncated spectrogram")
    mags = np.frombuffer(raw, dtype="<f4").reshape(bins, frames).astype(np.float64)
    sidecar = {}
    meta_path = os.fspath(path) + ".meta.json"
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
    spec = Spectrogram(mags, window_size=window, hop=hop,
                       source_trace=sidecar.get("source_trace", "<file>"))
    return spec, sidecar


def write_pgm(spec: Spectrogram, path):
    """Log-scaled, per-image min-max normalized 8-bit binary PGM (P5)."""
    img = np.log1p(spec.magnitudes)
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        img = (img - lo) / (hi - lo)
    else:
        img = np.zeros_like(img)
    data = (img * 255.0 + 0.5).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
