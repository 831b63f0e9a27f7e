"""syncprobe: measure, simulate and exploit filesystem-wide flush delays."""

from .analysis import (
    SnrReport,
    Spectrogram,
    SpikeEvent,
    detect_spikes,
    rate_limited_probe,
    snr,
    stft,
)
from .backend import (
    BackendDescriptor,
    IoKind,
    IoOp,
    RealBackend,
    SimulatedBackend,
    open_backend,
)
from .channel import (
    ChannelConfig,
    ChannelReport,
    Message,
    agree_start,
    calibrate_threshold,
    decode,
    evaluate,
    levenshtein,
    loopback,
    receive,
    send,
)
from .kernels import IMPLEMENTATION as kernel_implementation
from .microbench import (
    BenchStats,
    SlopeFit,
    SweepCurve,
    fit_linear,
    run_concurrency_bench,
    run_footprint_bench,
    run_write_size_sweep,
)
from .simulator import (
    BenchTargets,
    DelayProfile,
    FsState,
    TimedEvent,
    calibrate_profile,
    inject_event,
    load_profile,
    model_delay,
)
from .timekeeping import (
    ClockCalibration,
    HardwareCounterClock,
    OsMonotonicClock,
    SimulatedClock,
    calibrate,
    make_clock,
)
from .traces import DelayTrace, read_trace, write_trace
from .workload import WorkloadScript, demo_scripts, export_dataset, run_script

__version__ = "0.1.0"
