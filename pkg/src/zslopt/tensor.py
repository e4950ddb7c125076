"""Dense float64 matrix helpers and the splitmix64 generator.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order. The helpers below add shape checking with readable errors
and guarantee finite results.
"""

import math

import numpy as np

from . import kernels
from .errors import NonFiniteError, ShapeError

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
TWO_POW_64 = float(2**64)


def as_matrix(x, name="matrix"):
    """Return ``x`` as a C-contiguous float64 2-D array; 1-D input becomes a row."""
    if type(x) is np.ndarray and x.dtype == np.float64 and x.ndim == 2 and x.flags.c_contiguous:
        return x
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return np.ascontiguousarray(m)


def _finite(m, op):
    # any NaN/Inf entry makes the sum non-finite; the full scan rules out overflow
    if not math.isfinite(m.sum()) and not np.isfinite(m).all():
        raise NonFiniteError(f"{op} produced non-finite entries")
    return m


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return _finite(out, "matmul")


def relu(m):
    return np.maximum(as_matrix(m), 0.0)


def softmax_row(v):
    """Row-wise softmax with max subtraction; a 1×n input gives a 1×n output."""
    v = as_matrix(v, "v")
    if v.shape[1] < 1:
        raise ShapeError("softmax_row needs at least one column")
    e = np.exp(v - v.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def sqdist(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"sqdist: length mismatch {a.size} vs {b.size}")
    diff = a - b
    return float(diff @ diff)


def pairwise_sqdist(a, b):
    """All squared distances between rows of ``a`` and rows of ``b``."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"pairwise_sqdist: row lengths differ ({a.shape[1]} vs {b.shape[1]})")
    return kernels.pairwise_sqdist(a, b)


def splitmix64(x):
    """The splitmix64 output function applied to the 64-bit value ``x``."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class Rng:
    """splitmix64 generator; the whole state is one 64-bit integer.

    >>> Rng(0).next() == splitmix64(0x9E3779B97F4A7C15)
    True
    """

    __slots__ = ("state",)

    def __init__(self, seed=0):
        self.state = int(seed) & MASK64

    def __repr__(self):
        return f"Rng(state=0x{self.state:016x})"

    def substream(self, stream_id):
        """Independent generator seeded with ``splitmix64(state ^ stream_id)``.

        Does not advance this generator.
        """
        return Rng(splitmix64(self.state ^ (int(stream_id) & MASK64)))

    def next(self):
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return splitmix64(self.state)

    def next_many(self, n):
        draws, self.state = kernels.splitmix64_fill(self.state, int(n))
        return draws

    def uniform(self, lo=0.0, hi=1.0):
        if not lo < hi:
            raise ValueError(f"uniform requires lo < hi, got [{lo}, {hi})")
        x = lo + (self.next() / TWO_POW_64) * (hi - lo)
        # draws within 2**10 of 2**64 round up to exactly 1.0
        return x if x < hi else math.nextafter(hi, lo)

    def uniforms(self, n, lo=0.0, hi=1.0):
        """``n`` draws from [lo, hi); element i equals the i-th ``uniform`` call."""
        if not lo < hi:
            raise ValueError(f"uniform requires lo < hi, got [{lo}, {hi})")
        u = self.next_many(n).astype(np.float64) / TWO_POW_64
        x = lo + u * (hi - lo)
        return np.minimum(x, math.nextafter(hi, lo))

    def normals(self, n):
        """``n`` standard normal draws via Box-Muller on consecutive uniform pairs.

        Each pair (u1, u2) yields ``r·cos(2πu2)`` then ``r·sin(2πu2)`` with
        ``r = sqrt(-2 ln(1 - u1))``; an odd trailing sine is discarded.
        """
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * math.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return z.ravel()[:n]

    def below(self, n):
        """Integer uniform on ``range(n)``, as ``floor(u·n)``."""
        if n < 1:
            raise ValueError(f"below needs n >= 1, got {n}")
        return min(int(self.next() / TWO_POW_64 * n), n - 1)

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)`` (one draw per swap, high to low)."""
        perm = np.arange(n, dtype=np.int64)
        if n < 2:
            return perm
        u = self.uniforms(n - 1)
        for step, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[step] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def nearest_class(queries, class_embeddings, candidates):
    """For each query row, the candidate class whose embedding is nearest.

    ``class_embeddings`` is indexed by class id. Candidates are scanned in
    ascending id order so ties go to the lowest class id regardless of the
    order they were passed in.
    """
    cands = np.unique(np.asarray(candidates, dtype=np.int64))
    if cands.size == 0:
        raise ValueError("candidate class list is empty")
    dist = pairwise_sqdist(queries, np.asarray(class_embeddings)[cands])
    pick = kernels.masked_argmin(dist, np.ones(dist.shape, dtype=bool))
    return cands[pick]
