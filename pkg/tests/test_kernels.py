"""Cross-checks between the compiled kernels and their pure twins."""

import numpy as np
import pytest

from syncprobe import _kernels_py, kernels

try:
    from syncprobe import _kernels
except ImportError:
    _kernels = None

needs_compiled = pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")


def test_implementation_tag_is_known():
    assert kernels.IMPLEMENTATION in ("compiled", "pure")


def test_lev_accepts_strings_and_bytes():
    assert kernels.lev_distance("kitten", "sitting") == 3
    assert kernels.lev_distance(b"flaw", b"lawn") == 2
    assert kernels.lev_distance("", "abc") == 3


@needs_compiled
def test_lev_compiled_equals_pure_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n, m = rng.integers(0, 60, size=2)
        a = rng.integers(0, 4, size=n).astype(np.uint8)
        b = rng.integers(0, 4, size=m).astype(np.uint8)
        assert _kernels.lev_distance(a, b) == _kernels_py.lev_distance(a, b)


def _chunk_args(rng, n=64, noisy=True):
    n_io = int(rng.integers(0, 20))
    io_times = np.sort(rng.integers(0, 500_000, size=n_io)).astype(np.int64)
    io_bytes = rng.integers(0, 8192, size=n_io).astype(np.int64)
    io_inodes = rng.integers(0, 2, size=n_io).astype(np.int64)
    io_journal = rng.integers(0, 2, size=n_io).astype(np.int64)
    n_spikes = int(rng.integers(0, 3))
    spike_at = np.sort(rng.integers(0, 400_000, size=n_spikes)).astype(np.int64)
    spike_end = spike_at + rng.integers(1000, 50_000, size=n_spikes).astype(np.int64)
    spike_extra = rng.uniform(1e4, 1e6, size=n_spikes)
    z = rng.standard_normal(n) if noisy else np.empty(0)
    return dict(
        max_n=n,
        t_now=0,
        last_start=-1,
        min_interval=int(rng.choice([0, 10_000])),
        dirty_bytes=int(rng.integers(0, 4096)),
        dirty_inodes=int(rng.integers(0, 3)),
        journal_entries=int(rng.integers(0, 3)),
        base_delay=2509.0,
        page_cost=57047.5,
        above_page_cost=7130.9375,
        inode_cost=22638.5,
        journal_cost=38897.0,
        noise_kind=1 if noisy else 0,
        var_base=491.0**2,
        var_page_per_byte=73785590.0 / 4096.0,
        var_inode=35187606.0,
        var_journal=21567819.0,
        z=z,
        io_times=io_times,
        io_bytes=io_bytes,
        io_inodes=io_inodes,
        io_journal=io_journal,
        io_idx=0,
        spike_at=spike_at,
        spike_end=spike_end,
        spike_extra=spike_extra,
    )


@needs_compiled
@pytest.mark.parametrize("noisy", [False, True])
def test_chunk_compiled_equals_pure(noisy):
    rng = np.random.default_rng(42)
    for trial in range(50):
        kwargs = _chunk_args(np.random.default_rng(trial), noisy=noisy)
        outs = []
        for impl in (_kernels, _kernels_py):
            ts = np.zeros(kwargs["max_n"], dtype=np.int64)
            ds = np.zeros(kwargs["max_n"], dtype=np.int64)
            ret = impl.simulate_flush_chunk(**kwargs, out_ts=ts, out_delay=ds)
            outs.append((ret, ts.copy(), ds.copy()))
        (ret_a, ts_a, ds_a), (ret_b, ts_b, ds_b) = outs
        assert tuple(ret_a) == tuple(ret_b)
        assert np.array_equal(ts_a, ts_b)
        assert np.array_equal(ds_a, ds_b)


def test_pure_chunk_respects_rate_limit():
    rng = np.random.default_rng(1)
    kwargs = _chunk_args(rng, n=32, noisy=False)
    kwargs["min_interval"] = 50_000
    ts = np.zeros(32, dtype=np.int64)
    ds = np.zeros(32, dtype=np.int64)
    _kernels_py.simulate_flush_chunk(**kwargs, out_ts=ts, out_delay=ds)
    assert (np.diff(ts) >= 50_000).all()


def test_pure_chunk_consumes_events_in_time_order():
    kwargs = _chunk_args(np.random.default_rng(2), n=16, noisy=False)
    kwargs.update(
        io_times=np.asarray([0, 10_000], dtype=np.int64),
        io_bytes=np.asarray([0, 0], dtype=np.int64),
        io_inodes=np.asarray([0, 0], dtype=np.int64),
        io_journal=np.asarray([1, 1], dtype=np.int64),
        io_idx=0,
        dirty_bytes=0,
        dirty_inodes=0,
        journal_entries=0,
        min_interval=0,
    )
    ts = np.zeros(16, dtype=np.int64)
    ds = np.zeros(16, dtype=np.int64)
    _kernels_py.simulate_flush_chunk(**kwargs, out_ts=ts, out_delay=ds)
    # First flush sees the t=0 journal entry, later one sees the t=10k entry.
    assert ds[0] == 41406
    assert 41406 in ds[1:].tolist()


def test_delay_floor_is_one():
    kwargs = _chunk_args(np.random.default_rng(3), n=8, noisy=True)
    kwargs.update(base_delay=1.0, var_base=1e8, page_cost=0.0, above_page_cost=0.0,
                  inode_cost=0.0, journal_cost=0.0, dirty_bytes=0, dirty_inodes=0,
                  journal_entries=0, var_page_per_byte=0.0, var_inode=0.0,
                  var_journal=0.0,
                  io_times=np.empty(0, np.int64), io_bytes=np.empty(0, np.int64),
                  io_inodes=np.empty(0, np.int64), io_journal=np.empty(0, np.int64),
                  spike_at=np.empty(0, np.int64), spike_end=np.empty(0, np.int64),
                  spike_extra=np.empty(0))
    ts = np.zeros(8, dtype=np.int64)
    ds = np.zeros(8, dtype=np.int64)
    _kernels_py.simulate_flush_chunk(**kwargs, out_ts=ts, out_delay=ds)
    assert (ds >= 1).all()
