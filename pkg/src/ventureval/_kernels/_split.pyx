# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled split-scan kernel; see fallback.py for the reference semantics.

The scan keeps the same sequential accumulation order as np.cumsum and the
same first-maximum tie rule, so results are bit-identical to the fallback.
"""

cimport numpy as cnp
from libc.math cimport INFINITY

import numpy as np

cnp.import_array()


def scan_split(
    cnp.ndarray[cnp.float64_t, ndim=1] values,
    cnp.ndarray[cnp.float64_t, ndim=1] grad,
    cnp.ndarray[cnp.float64_t, ndim=1] hess,
    double reg_lambda,
    double gamma,
    double min_child_weight,
):
    """Best binary split for rows pre-sorted by one feature.

    Returns ``(gain, cut_index)``; ``cut_index == -1`` when no admissible
    cut exists.
    """
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t i
    cdef double g_total = 0.0
    cdef double h_total = 0.0
    cdef double gl = 0.0
    cdef double hl = 0.0
    cdef double gr, hr, gain, parent
    cdef double best_gain = -INFINITY
    cdef Py_ssize_t best_cut = -1

    if n < 2:
        return float("-inf"), -1

    for i in range(n):
        g_total += grad[i]
        h_total += hess[i]

    parent = (g_total * g_total) / (h_total + reg_lambda)

    for i in range(n - 1):
        gl += grad[i]
        hl += hess[i]
        if values[i] == values[i + 1]:
            continue
        hr = h_total - hl
        if hl < min_child_weight or hr < min_child_weight:
            continue
        gr = g_total - gl
        gain = 0.5 * ((gl * gl) / (hl + reg_lambda) + (gr * gr) / (hr + reg_lambda) - parent) - gamma
        if gain > best_gain:
            best_gain = gain
            best_cut = i

    if best_cut < 0:
        return float("-inf"), -1
    return best_gain, best_cut
