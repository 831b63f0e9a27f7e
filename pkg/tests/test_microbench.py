import math

import numpy as np
import pytest

from conftest import make_backend
from syncprobe.backend import IoKind, IoOp
from syncprobe.microbench import (
    fit_linear,
    run_concurrency_bench,
    run_footprint_bench,
    run_write_size_sweep,
    slope_csv,
    stats_csv,
    sweep_csv,
)
from syncprobe.simulator import load_profile


class TestFitLinear:
    def test_exact_line(self):
        slope, intercept, r2 = fit_linear([(0, 0), (1, 2), (2, 4)])
        assert (slope, intercept, r2) == (2.0, 0.0, 1.0)

    def test_constant_y_convention(self):
        slope, intercept, r2 = fit_linear([(0, 1), (1, 1), (2, 1)])
        assert (slope, intercept, r2) == (0.0, 1.0, 1.0)

    def test_degenerate_x(self):
        with pytest.raises(ValueError, match="degenerate"):
            fit_linear([(1, 0), (1, 5), (1, 9)])

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_linear([(0, 1)])

    def test_against_lstsq_oracle(self):
        # Oracle: numpy's least-squares solver on the same noisy line.
        rng = np.random.default_rng(123)
        x = rng.uniform(0, 10, size=100)
        y = 3.0 * x + 7.0 + rng.normal(0, 0.5, size=100)
        slope, intercept, _ = fit_linear(zip(x, y))
        a = np.vstack([x, np.ones_like(x)]).T
        (o_slope, o_intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
        assert slope == pytest.approx(o_slope, abs=1e-9)
        assert intercept == pytest.approx(o_intercept, abs=1e-9)
        assert 2.9 <= slope <= 3.1


class TestFootprint:
    def test_write_reproduces_table_noise_off(self, orin_quiet):
        stats = run_footprint_bench(make_backend(orin_quiet), IoOp(IoKind.WRITE, 4096), 100)
        assert stats.mean == 121092
        assert stats.stddev == 0

    def test_baseline_noise_off(self, orin_quiet):
        stats = run_footprint_bench(make_backend(orin_quiet), IoOp(IoKind.FLUSH_ALL), 50)
        assert stats.mean == 2509

    def test_baseline_noisy_mean_within_clt_bound(self, orin_profile):
        stats = run_footprint_bench(
            make_backend(orin_profile, seed=77), IoOp(IoKind.FLUSH_ALL), 1000
        )
        assert abs(stats.mean - 2509) <= 3 * 491 / math.sqrt(1000)
        assert 0 < stats.stddev < 2 * 491

    def test_write_sync_noisy_mean_within_clt_bound(self, orin_profile):
        stats = run_footprint_bench(
            make_backend(orin_profile, seed=78), IoOp(IoKind.WRITE_SYNC, 64), 1000
        )
        assert abs(stats.mean - 41406) <= 3 * 4670 / math.sqrt(1000)

    @pytest.mark.parametrize(
        "op,mean,sigma",
        [
            (IoOp(IoKind.FLUSH_ALL), 2509, 491),
            (IoOp(IoKind.WRITE, 4096), 121092, 11436),
            (IoOp(IoKind.WRITE_SYNC, 64), 41406, 4670),
            # ftruncate and rename replay the averaged inode+journal solution,
            # in mean and in variance alike.
            (IoOp(IoKind.FTRUNCATE), 64044.5, math.sqrt((6916**2 + 8134**2) / 2)),
            (IoOp(IoKind.RENAME), 64044.5, math.sqrt((6916**2 + 8134**2) / 2)),
        ],
    )
    def test_noisy_fixed_point_all_scenarios(self, orin_profile, op, mean, sigma):
        stats = run_footprint_bench(make_backend(orin_profile, seed=5), op, 1000)
        assert abs(stats.mean - mean) <= 3 * sigma / math.sqrt(1000)
        assert stats.stddev == pytest.approx(sigma, rel=0.15)

    def test_single_rep_rejected(self, sim_backend):
        with pytest.raises(ValueError):
            run_footprint_bench(sim_backend, IoOp(IoKind.WRITE, 64), 1)

    def test_repeatable_noise_off(self, orin_quiet):
        a = run_footprint_bench(make_backend(orin_quiet), IoOp(IoKind.RENAME), 20)
        b = run_footprint_bench(make_backend(orin_quiet), IoOp(IoKind.RENAME), 20)
        assert (a.mean, a.stddev) == (b.mean, b.stddev)


class TestConcurrency:
    def test_xeon_write_slope(self, xeon_profile):
        fit = run_concurrency_bench(
            make_backend(xeon_profile), IoOp(IoKind.WRITE, 64), range(1, 11)
        )
        assert fit.slope == pytest.approx(48612, rel=0.01)
        assert fit.r_squared > 0.999

    def test_xeon_ftruncate_slope(self, xeon_profile):
        fit = run_concurrency_bench(
            make_backend(xeon_profile), IoOp(IoKind.FTRUNCATE), range(1, 11)
        )
        assert fit.slope == pytest.approx(9626, rel=0.01)

    def test_xeon_write_sync_slope(self, xeon_profile):
        fit = run_concurrency_bench(
            make_backend(xeon_profile), IoOp(IoKind.WRITE_SYNC, 64), range(1, 11)
        )
        assert fit.slope == pytest.approx(6163, rel=0.01)

    def test_constant_delays_give_zero_slope_unit_r2(self):
        be = make_backend(load_profile("flat-test"))
        fit = run_concurrency_bench(be, IoOp(IoKind.WRITE, 64), [1, 2, 3])
        assert fit.slope == 0
        assert fit.r_squared == 1.0

    def test_needs_three_distinct_counts(self, sim_backend):
        with pytest.raises(ValueError):
            run_concurrency_bench(sim_backend, IoOp(IoKind.WRITE, 64), [1, 2])

    def test_points_sorted(self, xeon_profile):
        fit = run_concurrency_bench(
            make_backend(xeon_profile), IoOp(IoKind.WRITE, 64), [5, 1, 3]
        )
        assert [k for k, _ in fit.points] == [1, 3, 5]


class TestSweep:
    def test_regimes_noise_off(self, orin_quiet):
        curve = run_write_size_sweep(
            make_backend(orin_quiet), range(64, 4097, 64), range(4096, 65537, 4096)
        )
        assert curve.below_fit.r_squared >= 0.999999
        assert curve.above_fit.slope < curve.below_fit.slope

    def test_small_write_jumps_over_baseline(self, orin_quiet):
        curve = run_write_size_sweep(
            make_backend(orin_quiet), [64, 128, 192], [4096, 8192, 12288]
        )
        assert curve.means[0] > 10 * 2509

    def test_empty_range_rejected(self, sim_backend):
        with pytest.raises(ValueError):
            run_write_size_sweep(sim_backend, [], [4096, 8192])

    def test_bad_bounds_rejected(self, sim_backend):
        with pytest.raises(ValueError):
            run_write_size_sweep(sim_backend, [64, 8192], [8192, 16384])
        with pytest.raises(ValueError):
            run_write_size_sweep(sim_backend, [64, 128], [1024, 2048])


class TestCsv:
    def test_stats_csv(self, orin_quiet):
        stats = run_footprint_bench(make_backend(orin_quiet), IoOp(IoKind.WRITE, 4096), 10)
        text = stats_csv(stats)
        assert text.splitlines()[0] == "op,repetitions,mean_cycles,stddev_cycles"
        assert text.splitlines()[1].startswith("write,10,121092.000000,")

    def test_slope_csv_has_fit_comment(self, xeon_profile):
        fit = run_concurrency_bench(
            make_backend(xeon_profile), IoOp(IoKind.WRITE, 64), [1, 2, 3]
        )
        lines = slope_csv(fit).splitlines()
        assert lines[0] == "op,file_count,mean_cycles"
        assert lines[-1].startswith("# slope=")

    def test_sweep_csv(self, orin_quiet):
        curve = run_write_size_sweep(
            make_backend(orin_quiet), [64, 128, 192], [4096, 8192, 12288]
        )
        lines = sweep_csv(curve).splitlines()
        assert lines[0] == "size_bytes,mean_cycles"
        assert any(line.startswith("# below:") for line in lines)
        assert any(line.startswith("# above:") for line in lines)
