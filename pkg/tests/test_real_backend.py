"""Real-mount smoke tests (hardware-dependent, excluded from CI).

Run them against a writable directory on a real filesystem:

    SYNCPROBE_REAL_FS_DIR=/mnt/scratch pytest -m realfs -s

They verify the leak exists at all on the machine at hand: write-vs-
baseline variance separation (SNR > 1), and a two-process covert channel
moving 1,000 bits at <= 10% error.  Absolute bandwidths are machine-
dependent and deliberately not asserted.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from syncprobe.analysis import snr
from syncprobe.backend import IoKind, IoOp, RealBackend
from syncprobe.channel import Message
from syncprobe.errors import BackendOpenError
from syncprobe.traces import DelayTrace

REAL_DIR = os.environ.get("SYNCPROBE_REAL_FS_DIR")

pytestmark = [
    pytest.mark.realfs,
    pytest.mark.skipif(REAL_DIR is None,
                       reason="set SYNCPROBE_REAL_FS_DIR to a writable real mount"),
]


def _open_real():
    try:
        return RealBackend(REAL_DIR)
    except BackendOpenError as exc:
        pytest.skip(f"real backend unavailable: {exc}")


def _trace_from(backend, delays):
    ts = np.cumsum(np.asarray(delays, dtype=np.int64))
    ts = ts - ts[0] + np.arange(len(delays))  # strictly increasing
    from syncprobe.timekeeping import calibrate

    cal = calibrate(backend.clock, 50)
    return DelayTrace(ts, np.asarray(delays, dtype=np.int64), cal, "real")


def test_write_vs_baseline_snr_above_one():
    backend = _open_real()
    with backend:
        baseline, signal = [], []
        for _ in range(200):
            backend.flush_all()
            baseline.append(backend.flush_all())
        for _ in range(200):
            backend.flush_all()
            backend.perform_io(IoOp(IoKind.WRITE, 4096))
            signal.append(backend.flush_all())
        report = snr(_trace_from(backend, signal), _trace_from(backend, baseline))
        print(f"\nreal-mount SNR: {report.snr:.2f} "
              f"(signal mean {np.mean(signal):.0f}, baseline mean {np.mean(baseline):.0f})")
        assert report.snr > 1.0


def test_two_process_channel_error_rate():
    backend = _open_real()
    with backend:
        base = [backend.flush_all() for _ in range(50)]
        backend.perform_io(IoOp(IoKind.WRITE_SYNC, 64))
        dirty = backend.flush_all()
    bit_period = int(8 * max(float(np.percentile(base, 95)), float(dirty)))

    message = Message.random(1000 + 24, seed=77)  # 128 bytes
    payload_hex = message.payload.hex()
    sync_offset = int(4e9)
    common = ["--backend", f"real:{REAL_DIR}", "--i-understand-flush-scope",
              "--bit-period", str(bit_period), "--sync-offset", str(sync_offset)]
    report_path = os.path.join(REAL_DIR, "recv-report.json")
    recv = subprocess.Popen(
        [sys.executable, "-m", "syncprobe", "recv", *common,
         "--max-samples", "2000000", "--expect-hex", payload_hex,
         "--report", report_path],
    )
    send = subprocess.Popen(
        [sys.executable, "-m", "syncprobe", "send", *common,
         "--payload-hex", payload_hex],
    )
    assert send.wait(timeout=600) == 0
    assert recv.wait(timeout=600) == 0
    with open(report_path) as fh:
        report = json.load(fh)["report"]
    print(f"\nreal-mount channel: error_rate={report['error_rate']:.3f} "
          f"bandwidth={report['bandwidth_kbps']:.3f} kbps")
    assert report["error_rate"] <= 0.10
