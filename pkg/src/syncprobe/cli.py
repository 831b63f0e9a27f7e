"""Command-line surface: benchmarks, channel endpoints, simulation, analysis.

Exit codes: 0 success, 2 usage error, 3 I/O failure, 4 analysis error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import analysis, channel, microbench, workload
from .backend import BackendDescriptor, IoOp, open_backend
from .errors import (
    AnalysisError,
    BackendIoError,
    BackendOpenError,
    CalibrationError,
    ChannelError,
)
from .traces import read_trace, write_trace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_ANALYSIS = 4


def _parse_range(spec: str) -> list[int]:
    """start:stop[:step], inclusive of stop when it lands on the stride."""
    parts = spec.split(":")
    if len(parts) == 1:
        return [int(parts[0])]
    if len(parts) == 2:
        start, stop, step = int(parts[0]), int(parts[1]), 1
    elif len(parts) == 3:
        start, stop, step = (int(p) for p in parts)
    else:
        raise ValueError(f"bad range spec {spec!r}; want start:stop[:step]")
    if step <= 0 or stop < start:
        raise ValueError(f"bad range spec {spec!r}")
    return list(range(start, stop + 1, step))


def _open_backend(args, seed_offset: int = 0):
    desc = BackendDescriptor.parse(args.backend)
    if desc.kind == "real":
        _check_flush_scope(desc.working_path, args)
    noise = "off" if getattr(args, "noise", None) == "off" else None
    return open_backend(desc, seed=getattr(args, "seed", 0) + seed_offset, noise=noise)


def _check_flush_scope(path, args):
    # A filesystem-wide flush hits every co-tenant of the mount; refuse the
    # invoker's root filesystem unless they acknowledge that explicitly.
    if getattr(args, "i_understand_flush_scope", False):
        return
    try:
        on_root = os.stat(path).st_dev == os.stat("/").st_dev
    except OSError as exc:
        raise BackendOpenError(f"cannot stat {path!r}: {exc}") from exc
    if on_root:
        raise BackendOpenError(
            f"{path!r} is on the root filesystem; flushing it affects every "
            "process on this machine. Pass --i-understand-flush-scope to proceed."
        )


def _op_from_args(args) -> IoOp:
    size = getattr(args, "size", 0) or 0
    if size <= 0:
        # Default sizes follow the measurement setup: full-page async
        # writes, 64-byte synchronous writes.
        name = args.op.strip().lower()
        size = 4096 if name == "write" else 64
    return IoOp.parse(args.op, size)


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(payload: dict, out_path):
    _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", out_path)


def _channel_config(args) -> channel.ChannelConfig:
    threshold = None
    if getattr(args, "threshold", None) is not None:
        threshold = float(args.threshold)
    return channel.ChannelConfig(
        bit_period=args.bit_period,
        spin_one=args.spin_one,
        spin_zero=args.spin_zero,
        write_size=args.write_size,
        threshold=threshold,
        start_code=args.start_code,
        end_code=args.end_code,
        sync_offset=args.sync_offset,
        stuffing=not args.no_stuffing,
    )


def _payload_from_args(args) -> channel.Message:
    if getattr(args, "payload_hex", None):
        return channel.Message(bytes.fromhex(args.payload_hex))
    if getattr(args, "payload_file", None):
        with open(args.payload_file, "rb") as fh:
            return channel.Message(fh.read())
    if getattr(args, "random_bits", None):
        return channel.Message.random(args.random_bits, seed=getattr(args, "seed", 0))
    raise ValueError("need --payload-hex, --payload-file or --random-bits")


def _add_backend_args(p, default="sim:ext4-orin"):
    p.add_argument("--backend", default=default,
                   help="sim:<profile> or real:<path> (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="noise seed (simulated)")
    p.add_argument("--noise", choices=["on", "off"], default="on",
                   help="override profile noise (simulated)")
    p.add_argument("--i-understand-flush-scope", action="store_true",
                   help="allow a real backend on the root filesystem")


def _add_channel_args(p):
    p.add_argument("--bit-period", type=int, default=131072)
    p.add_argument("--spin-one", type=int, default=0)
    p.add_argument("--spin-zero", type=int, default=0)
    p.add_argument("--write-size", type=int, default=64)
    p.add_argument("--start-code", default="10101010")
    p.add_argument("--end-code", default="1111111111")
    p.add_argument("--sync-offset", type=int, default=1000)
    p.add_argument("--no-stuffing", action="store_true")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=float, default=None)
    g.add_argument("--auto-threshold", action="store_true",
                   help="calibrate the 0/1 threshold from the trace (default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="syncprobe",
        description="Measure, simulate and exploit filesystem-wide flush delays.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="microbenchmarks").add_subparsers(
        dest="bench_kind", required=True
    )
    fp = bench.add_parser("footprint", help="per-operation flush latency stats")
    fp.add_argument("--op", default="write",
                    help="baseline|write|write-sync|ftruncate|rename")
    fp.add_argument("--size", type=int, default=0, help="write size in bytes")
    fp.add_argument("--reps", type=int, default=1000)
    fp.add_argument("--out", default=None, help="CSV path (default stdout)")
    _add_backend_args(fp)
    fp.set_defaults(func=cmd_bench_footprint)

    cc = bench.add_parser("concurrency", help="flush latency vs file count")
    cc.add_argument("--op", default="write")
    cc.add_argument("--size", type=int, default=64)
    cc.add_argument("--counts", default="1:10", help="file counts, start:stop[:step]")
    cc.add_argument("--reps", type=int, default=1)
    cc.add_argument("--out", default=None)
    _add_backend_args(cc)
    cc.set_defaults(func=cmd_bench_concurrency)

    sw = bench.add_parser("sweep", help="flush latency vs write size")
    sw.add_argument("--below", default="64:4096:64")
    sw.add_argument("--above", default="4096:65536:4096")
    sw.add_argument("--reps", type=int, default=1)
    sw.add_argument("--out", default=None)
    _add_backend_args(sw)
    sw.set_defaults(func=cmd_bench_sweep)

    pr = sub.add_parser("probe", help="sampling loop, optionally rate-limited")
    pr.add_argument("--samples", type=int, required=True)
    pr.add_argument("--max-rate", type=float, default=None, help="flush calls/second")
    pr.add_argument("--out", required=True, help="trace file path")
    _add_backend_args(pr)
    pr.set_defaults(func=cmd_probe)

    snd = sub.add_parser("send", help="covert channel sender")
    snd.add_argument("--payload-hex", default=None)
    snd.add_argument("--payload-file", default=None)
    snd.add_argument("--report", default=None, help="send report JSON path")
    _add_backend_args(snd)
    _add_channel_args(snd)
    snd.set_defaults(func=cmd_send)

    rcv = sub.add_parser("recv", help="covert channel receiver")
    rcv.add_argument("--trace", default=None, help="write the raw trace here")
    rcv.add_argument("--report", default=None, help="decode report JSON path")
    rcv.add_argument("--max-samples", type=int, default=1_000_000)
    rcv.add_argument("--expect-hex", default=None,
                     help="known payload for error-rate reporting")
    _add_backend_args(rcv)
    _add_channel_args(rcv)
    rcv.set_defaults(func=cmd_recv)

    lb = sub.add_parser("loopback", help="sender+receiver on one simulated backend")
    lb.add_argument("--payload-hex", default=None)
    lb.add_argument("--payload-file", default=None)
    lb.add_argument("--random-bits", type=int, default=None)
    lb.add_argument("--trace", default=None)
    lb.add_argument("--report", default=None)
    lb.add_argument("--threaded", action="store_true",
                    help="run the two actors as real threads")
    _add_backend_args(lb)
    _add_channel_args(lb)
    lb.set_defaults(func=cmd_loopback)

    sim = sub.add_parser("sim", help="simulator utilities").add_subparsers(
        dest="sim_kind", required=True
    )
    run = sim.add_parser("run", help="run a workload script while sampling")
    run.add_argument("script", help="workload script JSON path")
    run.add_argument("--samples", type=int, default=2048)
    run.add_argument("--max-rate", type=float, default=None)
    run.add_argument("--start-jitter", type=int, default=0,
                     help="launch the script at a seed-derived offset in [0, N) cycles")
    run.add_argument("--out", required=True, help="trace file path")
    _add_backend_args(run)
    run.set_defaults(func=cmd_sim_run)

    st = sub.add_parser("stft", help="spectrogram of a trace")
    st.add_argument("trace")
    st.add_argument("--window", type=int, default=256)
    st.add_argument("--hop", type=int, default=None)
    st.add_argument("--out", required=True, help="spectrogram file path")
    st.add_argument("--pgm", default=None, help="also export a PGM image")
    st.add_argument("--label", default=None)
    st.set_defaults(func=cmd_stft)

    sn = sub.add_parser("snr", help="variance ratio of two traces")
    sn.add_argument("signal")
    sn.add_argument("noise")
    sn.add_argument("--out", default=None)
    sn.set_defaults(func=cmd_snr)

    dt = sub.add_parser("detect", help="spike events in a trace")
    dt.add_argument("trace")
    dt.add_argument("--z", type=float, default=6.0)
    dt.add_argument("--min-separation", type=int, default=16)
    dt.add_argument("--out", default=None)
    dt.set_defaults(func=cmd_detect)

    ex = sub.add_parser("export-dataset",
                        help="batch scripts into a labeled spectrogram dataset")
    ex.add_argument("--out", required=True)
    ex.add_argument("--scripts", default="demo",
                    help="'demo' for the built-in classes, or a directory of script JSONs")
    ex.add_argument("--profile", default="ext4-orin")
    ex.add_argument("--per-class", type=int, default=20)
    ex.add_argument("--samples", type=int, default=2048)
    ex.add_argument("--window", type=int, default=256)
    ex.add_argument("--hop", type=int, default=None)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--max-rate", type=float, default=None)
    ex.add_argument("--noise", choices=["on", "off"], default="on")
    ex.add_argument("--start-jitter", type=int, default=0,
                    help="per-trace victim launch offset in [0, N) cycles")
    ex.set_defaults(func=cmd_export_dataset)

    return parser


def cmd_bench_footprint(args) -> int:
    if args.reps < 2:
        raise ValueError("--reps must be >= 2")
    with _open_backend(args) as backend:
        stats = microbench.run_footprint_bench(backend, _op_from_args(args), args.reps)
    _emit(microbench.stats_csv(stats), args.out)
    return EXIT_OK


def cmd_bench_concurrency(args) -> int:
    counts = _parse_range(args.counts)
    with _open_backend(args) as backend:
        fit = microbench.run_concurrency_bench(
            backend, _op_from_args(args), counts, repetitions=args.reps
        )
    _emit(microbench.slope_csv(fit), args.out)
    return EXIT_OK


def cmd_bench_sweep(args) -> int:
    with _open_backend(args) as backend:
        curve = microbench.run_write_size_sweep(
            backend, _parse_range(args.below), _parse_range(args.above),
            repetitions=args.reps,
        )
    _emit(microbench.sweep_csv(curve), args.out)
    return EXIT_OK


def cmd_probe(args) -> int:
    with _open_backend(args) as backend:
        trace = analysis.rate_limited_probe(
            backend, max_rate=args.max_rate, n_samples=args.samples
        )
    write_trace(trace, args.out)
    return EXIT_OK


def cmd_send(args) -> int:
    message = _payload_from_args(args)
    config = _channel_config(args)
    with _open_backend(args) as backend:
        report = channel.send(backend, message, config)
    if args.report:
        _emit_json(vars(report), args.report)
    return EXIT_OK


def cmd_recv(args) -> int:
    config = _channel_config(args)
    with _open_backend(args) as backend:
        trace = channel.receive(backend, config, max_samples=args.max_samples)
    if args.trace:
        write_trace(trace, args.trace)
    result = channel.decode(trace, config)
    payload = {
        "bits": result.bits,
        "end_code_found": result.end_found,
        "threshold": result.threshold,
    }
    if args.expect_hex:
        expected = channel.Message(bytes.fromhex(args.expect_hex))
        report = channel.evaluate(expected, result.bits, trace.duration_seconds())
        payload["report"] = report.to_dict()
    _emit_json(payload, args.report)
    return EXIT_OK


def cmd_loopback(args) -> int:
    message = _payload_from_args(args)
    config = _channel_config(args)
    with _open_backend(args) as backend:
        result = channel.loopback(backend, message, config, threaded=args.threaded)
    if args.trace:
        write_trace(result.trace, args.trace)
    payload = result.report.to_dict()
    payload["end_code_found"] = result.decode.end_found
    payload["threshold"] = result.decode.threshold
    payload["overruns"] = result.send_report.overruns
    _emit_json(payload, args.report)
    return EXIT_OK


def cmd_sim_run(args) -> int:
    desc = BackendDescriptor.parse(args.backend)
    if desc.kind != "sim":
        raise ValueError("sim run needs a simulated backend")
    script = workload.load_script(args.script)
    with _open_backend(args) as backend:
        trace = workload.run_script(backend, script, args.samples,
                                    max_rate=args.max_rate,
                                    start_jitter=args.start_jitter)
    write_trace(trace, args.out)
    return EXIT_OK


def cmd_stft(args) -> int:
    trace = read_trace(args.trace)
    spec = analysis.stft(trace, window_size=args.window, hop=args.hop,
                         source=os.path.basename(args.trace))
    analysis.write_spectrogram(spec, args.out, label=args.label)
    if args.pgm:
        analysis.write_pgm(spec, args.pgm)
    return EXIT_OK


def cmd_snr(args) -> int:
    report = analysis.snr(read_trace(args.signal), read_trace(args.noise))
    _emit_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_detect(args) -> int:
    events = analysis.detect_spikes(read_trace(args.trace), z_threshold=args.z,
                                    min_separation=args.min_separation)
    payload = {
        "events": [
            {"index": e.index, "delay": e.delay, "z_score": e.z_score}
            for e in events
        ]
    }
    _emit_json(payload, args.out)
    return EXIT_OK


def cmd_export_dataset(args) -> int:
    if args.scripts == "demo":
        scripts = workload.demo_scripts()
    else:
        names = sorted(
            f for f in os.listdir(args.scripts) if f.endswith(".json")
        )
        if not names:
            raise ValueError(f"no script JSONs in {args.scripts!r}")
        scripts = [workload.load_script(os.path.join(args.scripts, f)) for f in names]
    manifest = workload.export_dataset(
        args.out, scripts, args.profile, args.per_class,
        n_samples=args.samples, window_size=args.window, hop=args.hop,
        seed=args.seed, max_rate=args.max_rate,
        noise="off" if args.noise == "off" else None,
        start_jitter=args.start_jitter,
    )
    sys.stdout.write(
        f"wrote {len(manifest['classes'])} classes x {args.per_class} traces "
        f"to {args.out}\n"
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ChannelError) as exc:
        # ChannelError from decode (start code missing) is an analysis failure;
        # bad arguments are usage failures.
        code = EXIT_ANALYSIS if isinstance(exc, ChannelError) else EXIT_USAGE
        print(f"syncprobe: {exc}", file=sys.stderr)
        return code
    except (AnalysisError, CalibrationError) as exc:
        print(f"syncprobe: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except (BackendOpenError, BackendIoError, OSError) as exc:
        print(f"syncprobe: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
