#!/usr/bin/env python3
"""Compare the compiled kernels against their pure-Python twins.

Runs the two hot paths, Levenshtein distance on channel-sized bit
strings and the flush-simulation chunk loop, through both
implementations and prints a timing table.  Results are asserted equal
while timing, so this doubles as an end-to-end equivalence check.

Usage: python benchmarks/bench_kernels.py [--bits N] [--flushes N]
"""

import argparse
import time

import numpy as np

from syncprobe import _kernels_py

try:
    from syncprobe import _kernels
except ImportError:
    _kernels = None


def time_call(fn, *args, repeat=3, **kwargs):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_levenshtein(n_bits):
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, size=n_bits).astype(np.uint8)
    b = a.copy()
    flips = rng.choice(n_bits, size=n_bits // 50, replace=False)
    b[flips] ^= 1
    rows = []
    t_pure, d_pure = time_call(_kernels_py.lev_distance, a, b, repeat=1)
    rows.append(("pure", t_pure, d_pure))
    if _kernels is not None:
        t_c, d_c = time_call(_kernels.lev_distance, a, b)
        assert d_c == d_pure, f"kernel mismatch: {d_c} != {d_pure}"
        rows.append(("compiled", t_c, d_c))
    return rows


def bench_chunk(n_flushes):
    rng = np.random.default_rng(1)
    n_io = n_flushes // 20
    io_times = np.sort(rng.integers(0, n_flushes * 3000, size=n_io)).astype(np.int64)
    io_bytes = np.zeros(n_io, dtype=np.int64)
    io_inodes = np.zeros(n_io, dtype=np.int64)
    io_journal = np.ones(n_io, dtype=np.int64)
    z = rng.standard_normal(n_flushes)
    empty_i = np.empty(0, dtype=np.int64)
    empty_f = np.empty(0, dtype=np.float64)

    def run(impl):
        out_ts = np.empty(n_flushes, dtype=np.int64)
        out_d = np.empty(n_flushes, dtype=np.int64)
        ret = impl.simulate_flush_chunk(
            n_flushes, 0, -1, 0, 0, 0, 0,
            2509.0, 57047.5, 7130.9375, 22638.5, 38897.0,
            1, 491.0**2, 73785590.0 / 4096.0, 35187606.0, 21567819.0,
            z, io_times, io_bytes, io_inodes, io_journal, 0,
            empty_i, empty_i, empty_f, out_ts, out_d,
        )
        return ret, out_ts, out_d

    rows = []
    t_pure, (ret_p, ts_p, d_p) = time_call(run, _kernels_py, repeat=1)
    rows.append(("pure", t_pure, int(d_p.sum())))
    if _kernels is not None:
        t_c, (ret_c, ts_c, d_c) = time_call(run, _kernels)
        assert np.array_equal(d_c, d_p) and np.array_equal(ts_c, ts_p)
        rows.append(("compiled", t_c, int(d_c.sum())))
    return rows


def print_table(title, rows, unit):
    print(f"\n{title}")
    base = rows[0][1]
    for name, secs, check in rows:
        speedup = base / secs if secs else float("inf")
        print(f"  {name:<9} {secs * 1000:9.2f} ms   ({speedup:5.1f}x)   checksum={check}")
    print(f"  [{unit}]")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--bits", type=int, default=10_000,
                        help="bit-string length for the Levenshtein benchmark")
    parser.add_argument("--flushes", type=int, default=500_000,
                        help="iterations for the flush-chunk benchmark")
    args = parser.parse_args()

    if _kernels is None:
        print("compiled kernels not built; timing the pure path only")

    print_table(
        f"Levenshtein distance, two {args.bits}-bit strings",
        bench_levenshtein(args.bits),
        "lower is better; checksum = edit distance",
    )
    print_table(
        f"Flush-simulation chunk, {args.flushes} iterations (noisy ext4-orin)",
        bench_chunk(args.flushes),
        "lower is better; checksum = total simulated cycles",
    )


if __name__ == "__main__":
    main()
