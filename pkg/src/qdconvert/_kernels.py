"""Compiled inner loops. All timestamps are int64 picoseconds."""

import numpy as np
from numba import njit

NEG_INF_PS = -(2**62)


@njit(cache=True, nogil=True)
def dead_time_mask(t, dead_time, last):
    keep = np.empty(t.size, dtype=np.bool_)
    for i in range(t.size):
        if t[i] - last >= dead_time:
            keep[i] = True
            last = t[i]
        else:
            keep[i] = False
    return keep, last


@njit(cache=True, nogil=True)
def window_histogram(t1, t2, j, tau_min, bin_width, counts):
    """Add pairs (i, k) with tau_min <= t2[k] - t1[i] < tau_max into ``counts``.

    Sliding two-pointer scan; ``j`` is the first candidate index in ``t2`` and
    the updated start pointer is returned so consecutive calls can chain.
    """
    nbins = counts.size
    span = nbins * bin_width
    n2 = t2.size
    for i in range(t1.size):
        lo = t1[i] + tau_min
        while j < n2 and t2[j] < lo:
            j += 1
        hi = lo + span
        k = j
        while k < n2 and t2[k] < hi:
            counts[(t2[k] - lo) // bin_width] += 1
            k += 1
    return j


@njit(cache=True, nogil=True)
def all_pairs_histogram(t1, t2, tau_min, tau_max, bin_width, counts):
    for i in range(t1.size):
        for k in range(t2.size):
            tau = t2[k] - t1[i]
            if tau >= tau_min and tau < tau_max:
                counts[(tau - tau_min) // bin_width] += 1
