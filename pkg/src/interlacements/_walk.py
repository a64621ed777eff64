"""Compiled inner loop for simple random walks against a box window."""

import numba
import numpy as np

STATUS_SHELL = 0      # left the truncation shell
STATUS_STARVED = 1    # ran out of pre-drawn directions
STATUS_TRACE_FULL = 2


@numba.njit(cache=True, nogil=True)
def run_walk(pos, dirs, lo, shape, center2, radius2, trace, n_trace, record_first):
    """Advance ``pos`` in place, consuming direction codes from ``dirs``.

    Direction code c moves coordinate c // 2 by +1 (c even) or -1 (c odd).
    Each visit to the window ``lo + [0, shape)`` appends the flat site index
    to ``trace``.  The walk stops once some |2 pos_j - center2_j| reaches
    ``radius2`` (doubled coordinates keep half-integer centers exact).

    ``record_first`` is False when resuming a walk whose current site was
    already traced.  Returns (status, directions consumed, new trace length).
    """
    d = pos.shape[0]
    k = 0
    n = dirs.shape[0]
    record = record_first
    while True:
        inside = record
        record = True
        flat = 0
        for j in range(d):
            r = pos[j] - lo[j]
            if r < 0 or r >= shape[j]:
                inside = False
                break
            flat = flat * shape[j] + r
        if inside:
            if n_trace >= trace.shape[0]:
                return STATUS_TRACE_FULL, k, n_trace
            trace[n_trace] = flat
            n_trace += 1
        for j in range(d):
            if abs(2 * pos[j] - center2[j]) >= radius2:
                return STATUS_SHELL, k, n_trace
        if k >= n:
            return STATUS_STARVED, k, n_trace
        c = dirs[k]
        k += 1
        if c % 2 == 0:
            pos[c // 2] += 1
        else:
            pos[c // 2] -= 1


@numba.njit(cache=True, nogil=True)
def min_merge(levels, trace, n_trace, label):
    """levels[site] = min(levels[site], label) for every traced site."""
    for i in range(n_trace):
        s = trace[i]
        if label < levels[s]:
            levels[s] = label


def warmup():
    pos = np.zeros(3, dtype=np.int64)
    run_walk(pos, np.zeros(1, dtype=np.int8), pos.copy(), np.ones(3, dtype=np.int64),
             np.zeros(3, dtype=np.int64), 2, np.empty(4, dtype=np.int64), 0, True)
