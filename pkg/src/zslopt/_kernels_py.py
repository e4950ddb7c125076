"""Pure-Python (numpy) implementations of the hot kernels.

Every function here must produce bit-identical results to its counterpart in
``_kernels.pyx``; the test suite compares the two whenever the extension is
built.
"""

import numpy as np

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64_fill(state, n):
    """Return ``(draws, new_state)`` for ``n`` consecutive splitmix64 outputs."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    steps = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(state) + steps * GOLDEN_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    new_state = (int(state) + n * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    return z, new_state


def pairwise_sqdist(a, b):
    """Squared euclidean distances between rows of ``a`` (n×d) and ``b`` (m×d).

    Accumulates coordinate by coordinate in index order, so each entry is the
    same left-to-right sum a scalar loop would produce.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"pairwise_sqdist: incompatible shapes {a.shape} and {b.shape}")
    out = np.zeros((a.shape[0], b.shape[0]))
    for j in range(a.shape[1]):
        diff = a[:, j, None] - b[None, :, j]
        out += diff * diff
    return out


def masked_argmin(dist, mask):
    """Per-row argmin of ``dist`` restricted to entries where ``mask`` is true.

    Ties resolve to the lowest column. Rows without any eligible column get -1.
    """
    dist = np.asarray(dist, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if dist.shape != mask.shape or dist.ndim != 2:
        raise ValueError(f"masked_argmin: shapes {dist.shape} and {mask.shape} differ")
    masked = np.where(mask, dist, np.inf)
    idx = np.argmin(masked, axis=1).astype(np.int64)
    # argmin cannot tell an all-masked row from a row whose minimum is +inf
    idx[~mask.any(axis=1)] = -1
    return idx
