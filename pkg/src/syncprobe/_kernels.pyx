# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see _kernels_py.py for the reference semantics.

Float expressions mirror the pure twin term for term (and the extension
is built with -ffp-contract=off) so both paths return bit-identical
results for identical inputs.
"""

import numpy as np

from libc.math cimport exp, floor, sqrt

IMPLEMENTATION = "compiled"


def lev_distance(const unsigned char[::1] a, const unsigned char[::1] b):
    """Levenshtein distance between two uint8 sequences (unit costs)."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0:
        return m
    if m == 0:
        return n
    prev_arr = np.arange(m + 1, dtype=np.int64)
    cur_arr = np.empty(m + 1, dtype=np.int64)
    cdef long long[::1] prev = prev_arr
    cdef long long[::1] cur = cur_arr
    cdef long long[::1] tmp
    cdef Py_ssize_t i, j
    cdef long long best, cand
    cdef unsigned char ai
    for i in range(1, n + 1):
        ai = a[i - 1]
        cur[0] = i
        for j in range(1, m + 1):
            cand = prev[j - 1] + (1 if b[j - 1] != ai else 0)
            if prev[j] + 1 < cand:
                cand = prev[j] + 1
            if cur[j - 1] + 1 < cand:
                cand = cur[j - 1] + 1
            cur[j] = cand
        tmp = prev
        prev = cur
        cur = tmp
    best = prev[m]
    return best


def simulate_flush_chunk(
    Py_ssize_t max_n,
    long long t_now,
    long long last_start,
    long long min_interval,
    long long dirty_bytes,
    long long dirty_inodes,
    long long journal_entries,
    double base_delay,
    double page_cost,
    double above_page_cost,
    double inode_cost,
    double journal_cost,
    int noise_kind,
    double var_base,
    double var_page_per_byte,
    double var_inode,
    double var_journal,
    const double[::1] z,
    const long long[::1] io_times,
    const long long[::1] io_bytes,
    const long long[::1] io_inodes,
    const long long[::1] io_journal,
    Py_ssize_t io_idx,
    const long long[::1] spike_at,
    const long long[::1] spike_end,
    const double[::1] spike_extra,
    long long[::1] out_ts,
    long long[::1] out_delay,
):
    """Compiled twin of _kernels_py.simulate_flush_chunk."""
    cdef Py_ssize_t n_io = io_times.shape[0]
    cdef Py_ssize_t n_spikes = spike_at.shape[0]
    cdef double page_per_byte = page_cost / 4096.0
    cdef double above_per_byte = above_page_cost / 4096.0
    cdef Py_ssize_t produced = 0
    cdef Py_ssize_t i, k
    cdef long long t, d
    cdef double bterm, ev, det, sigma, s
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
            if spike_at[k] <= t and t <= spike_end[k]:
                ev += spike_extra[k]
        det = (
            base_delay
            + bterm
            + inode_cost * dirty_inodes
            + journal_cost * journal_entries
            + ev
        )
        if noise_kind != 0:
            sigma = sqrt(
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
                    det = det * exp(s * z[i] - 0.5 * s * s)
        d = <long long> floor(det + 0.5)
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
