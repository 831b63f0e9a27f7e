"""Flush-latency microbenchmarks.

Three runnable experiments over any backend: per-operation footprint
statistics (clean flush, op, measured flush), concurrent-file slope
fits, and the write-size sweep across the page-size knee.  Every
measurement is preceded by a flush so each sample starts from a clean
filesystem state; outliers are kept, means are raw, stddev uses the
sample (n-1) estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .backend import IoKind, IoOp


@dataclass
class BenchStats:
    op: IoOp
    repetitions: int
    mean: float
    stddev: float


@dataclass
class SlopeFit:
    op: IoOp
    points: list[tuple[int, float]]
    slope: float
    intercept: float
    r_squared: float


@dataclass
class SweepCurve:
    sizes: list[int]
    means: list[float]
    below_fit: SlopeFit
    above_fit: SlopeFit


def fit_linear(points) -> tuple[float, float, float]:
    """Ordinary least squares through (x, y) pairs.

    Returns (slope, intercept, r_squared) with the constant-y convention
    r_squared = 1.  Raises ValueError when fewer than two points or all
    x coincide.
    """
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("fit_linear needs at least 2 points")
    n = len(pts)
    xs = [float(x) for x, _ in pts]
    ys = [float(y) for _, y in pts]
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    if sxx == 0:
        raise ValueError("degenerate x: all x values are equal")
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    if ss_tot == 0:
        return slope, intercept, 1.0
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    return slope, intercept, 1.0 - ss_res / ss_tot


def _mean_std(values) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def run_footprint_bench(backend, op: IoOp, repetitions: int) -> BenchStats:
    """Latency of a flush after one I/O operation, from a clean state.

    The FLUSH_ALL kind is the baseline variant: nothing dirties the state
    between the cleaning flush and the measured one.
    """
    if repetitions < 2:
        raise ValueError("repetitions must be >= 2")
    baseline = op.kind is IoKind.FLUSH_ALL
    delays = []
    for _ in range(repetitions):
        backend.flush_all()
        if not baseline:
            backend.perform_io(op)
        delays.append(backend.flush_all())
    mean, std = _mean_std(delays)
    return BenchStats(op=op, repetitions=repetitions, mean=mean, stddev=std)


def run_concurrency_bench(backend, op: IoOp, file_counts, repetitions: int = 1) -> SlopeFit:
    """Flush latency versus the number of files touched before the flush."""
    counts = sorted(set(int(k) for k in file_counts))
    if len(counts) < 3:
        raise ValueError("need at least 3 distinct file counts")
    if any(k < 1 for k in counts):
        raise ValueError("file counts must be >= 1")
    if op.kind is IoKind.FLUSH_ALL:
        raise ValueError("concurrency bench needs a dirtying operation")
    if hasattr(backend, "ensure_files"):
        backend.ensure_files(max(counts))
    points = []
    for k in counts:
        delays = []
        for _ in range(max(1, repetitions)):
            backend.flush_all()
            for i in range(k):
                backend.perform_io(op, file_index=i)
            delays.append(backend.flush_all())
        points.append((k, sum(delays) / len(delays)))
    slope, intercept, r2 = fit_linear(points)
    return SlopeFit(op=op, points=points, slope=slope, intercept=intercept, r_squared=r2)


def run_write_size_sweep(backend, below_sizes, above_sizes,
                         repetitions: int = 1) -> SweepCurve:
    """Mean flush delay per write size, fit separately in the two regimes."""
    below = sorted(set(int(s) for s in below_sizes))
    above = sorted(set(int(s) for s in above_sizes))
    if not below or not above:
        raise ValueError("both sweep ranges must be non-empty")
    if below[0] <= 0 or below[-1] > 4096:
        raise ValueError("below range must lie in (0, 4096]")
    if above[0] < 4096:
        raise ValueError("above range must lie in [4096, inf)")
    sizes = below + [s for s in above if s not in below]
    means = {}
    for size in sizes:
        delays = []
        for _ in range(max(1, repetitions)):
            backend.flush_all()
            backend.perform_io(IoOp(IoKind.WRITE, size))
            delays.append(backend.flush_all())
        means[size] = sum(delays) / len(delays)
    write = IoOp(IoKind.WRITE, 4096)
    bl_pts = [(s, means[s]) for s in below]
    ab_pts = [(s, means[s]) for s in above]
    bs, bi, br = fit_linear(bl_pts)
    as_, ai, ar = fit_linear(ab_pts)
    return SweepCurve(
        sizes=sizes,
        means=[means[s] for s in sizes],
        below_fit=SlopeFit(write, bl_pts, bs, bi, br),
        above_fit=SlopeFit(write, ab_pts, as_, ai, ar),
    )


# -- CSV emission -------------------------------------------------------------

def stats_csv(stats: BenchStats) -> str:
    return (
        "op,repetitions,mean_cycles,stddev_cycles\n"
        f"{stats.op.kind.value},{stats.repetitions},{stats.mean:.6f},{stats.stddev:.6f}\n"
    )


def slope_csv(fit: SlopeFit) -> str:
    lines = ["op,file_count,mean_cycles"]
    for k, mean in fit.points:
        lines.append(f"{fit.op.kind.value},{k},{mean:.6f}")
    lines.append(
        f"# slope={fit.slope:.6f},intercept={fit.intercept:.6f},r2={fit.r_squared:.6f}"
    )
    return "\n".join(lines) + "\n"


def sweep_csv(curve: SweepCurve) -> str:
    lines = ["size_bytes,mean_cycles"]
    for size, mean in zip(curve.sizes, curve.means):
        lines.append(f"{size},{mean:.6f}")
    for label, fit in (("below", curve.below_fit), ("above", curve.above_fit)):
        lines.append(
            f"# {label}: slope={fit.slope:.6f},intercept={fit.intercept:.6f},"
            f"r2={fit.r_squared:.6f}"
        )
    return "\n".join(lines) + "\n"
