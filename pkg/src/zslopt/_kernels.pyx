# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``.

Results are bit-identical to the numpy fallback: same summation order, no
floating-point contraction (the build passes ``-ffp-contract=off``).
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN_GAMMA = 0x9E3779B97F4A7C15ULL


def splitmix64_fill(state, Py_ssize_t n):
    """Return ``(draws, new_state)`` for ``n`` consecutive splitmix64 outputs."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    cdef uint64_t s = <uint64_t>(int(state) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t z
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] view = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            s += GOLDEN_GAMMA
            z = s
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
            view[i] = z ^ (z >> 31)
    return out, int(s)


def pairwise_sqdist(a, b):
    """Squared euclidean distances between rows of ``a`` (n×d) and ``b`` (m×d)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"pairwise_sqdist: incompatible shapes {a.shape} and {b.shape}")
    cdef const double[:, ::1] av = a
    # column-major copy of b keeps the innermost loop contiguous
    cdef const double[:, ::1] bt = np.ascontiguousarray(b.T)
    cdef Py_ssize_t n = av.shape[0], m = bt.shape[1], d = av.shape[1]
    out_arr = np.zeros((n, m))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double ai, diff
    with nogil:
        for i in range(n):
            for j in range(d):
                ai = av[i, j]
                for k in range(m):
                    diff = ai - bt[j, k]
                    out[i, k] = out[i, k] + diff * diff
    return out_arr


def masked_argmin(dist, mask):
    """Per-row argmin of ``dist`` restricted to entries where ``mask`` is true.

    Ties resolve to the lowest column. Rows without any eligible column get -1.
    """
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    mask_arr = np.ascontiguousarray(mask, dtype=np.uint8)
    if dist.shape != mask_arr.shape or dist.ndim != 2:
        raise ValueError(f"masked_argmin: shapes {dist.shape} and {mask_arr.shape} differ")
    cdef const double[:, ::1] dv = dist
    cdef const unsigned char[:, ::1] mv = mask_arr
    cdef Py_ssize_t n = dv.shape[0], m = dv.shape[1]
    idx_arr = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] idx = idx_arr
    cdef Py_ssize_t i, k
    cdef double best
    with nogil:
        for i in range(n):
            for k in range(m):
                if mv[i, k] and (idx[i] < 0 or dv[i, k] < best):
                    best = dv[i, k]
                    idx[i] = k
    return idx_arr
