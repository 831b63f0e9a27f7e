"""Pure-Python/numpy twins of the compiled kernels.

These are the reference implementations; syncprobe._kernels (Cython)
mirrors them operation-for-operation so both produce bit-identical
results from the same inputs.  Selection happens in syncprobe.kernels.
"""

from __future__ import annotations

import math

import numpy as np

IMPLEMENTATION = "pure"


def lev_distance(a, b) -> int:
    """Levenshtein distance between two uint8 arrays (unit edit costs).

    Row-vectorized DP: the horizontal (insertion) dependency is resolved
    with the prefix-minimum identity cur[j] = j + min_{k<=j}(cand[k] - k).
    """
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    offsets = np.arange(m + 1, dtype=np.int64)
    prev = offsets.copy()
    for i in range(1, n + 1):
        sub = prev[:-1] + (b != a[i - 1])
        cand = np.empty(m + 1, dtype=np.int64)
        cand[0] = i
        np.minimum(sub, prev[1:] + 1, out=cand[1:])
        prev = np.minimum.accumulate(cand - offsets) + offsets
    return int(prev[-1])


def simulate_flush_chunk(
    max_n,
    t_now,
    last_start,
    min_interval,
    dirty_bytes,
    dirty_inodes,
    journal_entries,
    base_delay,
    page_cost,
    above_page_cost,
    inode_cost,
    journal_cost,
    noise_kind,
    var_base,
    var_page_per_byte,
    var_inode,
    var_journal,
    z,
    io_times,
    io_bytes,
    io_inodes,
    io_journal,
    io_idx,
    spike_at,
    spike_end,
    spike_extra,
    out_ts,
    out_delay,
):
    """Run up to max_n flush iterations against scheduled I/O mutations.

    Each iteration: honor the rate limiter, fold scheduled mutations with
    timestamp <= flush start into the dirty counters, evaluate the delay
    model (plus one noise draw from z), record (start, delay), zero the
    dirty state and advance time by the delay.  Mutations landing during
    a flush stay pending for the next one.

    Returns (produced, t_now, last_start, io_idx, dirty_bytes,
    dirty_inodes, journal_entries).
    """
    n_io = len(io_times)
    n_spikes = len(spike_at)
    page_per_byte = page_cost / 4096.0
    above_per_byte = above_page_cost / 4096.0
    produced = 0
    for i in range(max_n):
        t = t_now
        if min_interval > 0 and last_start >= 0 and last_start + min_interval > t:
            t = last_start + min_interval
        while io_idx < n_io and io_times[io_idx] <= t:
            dirty_bytes += io_bytes[io_idx]
            dirty_inodes += io_inodes[io_idx]
            journal_entries += io_journal[io_idx]
            io_idx += 1
        if dirty_bytes <= 0:
            bterm = 0.0
        elif dirty_bytes <= 4096:
            bterm = dirty_bytes * page_per_byte
        else:
            bterm = page_cost + (dirty_bytes - 4096) * above_per_byte
        ev = 0.0
        for k in range(n_spikes):
            if spike_at[k] <= t <= spike_end[k]:
                ev += spike_extra[k]
        det = (
            base_delay
            + bterm
            + inode_cost * dirty_inodes
            + journal_cost * journal_entries
            + ev
        )
        if noise_kind != 0:
            sigma = math.sqrt(
                var_base
                + var_page_per_byte * dirty_bytes
                + var_inode * dirty_inodes
                + var_journal * journal_entries
            )
            if sigma > 0.0:
                if noise_kind == 1:
                    det = det + z[i] * sigma
                else:
                    s = sigma / det
                    det = det * math.exp(s * z[i] - 0.5 * s * s)
        d = int(math.floor(det + 0.5))
        if d < 1:
            d = 1
        out_ts[i] = t
        out_delay[i] = d
        produced += 1
        dirty_bytes = 0
        dirty_inodes = 0
        journal_entries = 0
        last_start = t
        t_now = t + d
    return produced, t_now, last_start, io_idx, dirty_bytes, dirty_inodes, journal_entries
