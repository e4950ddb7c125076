"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``ZSLOPT_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("ZSLOPT_BACKEND", "").lower() == "python":
        raise ImportError("fallback forced by ZSLOPT_BACKEND")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

splitmix64_fill = _impl.splitmix64_fill
pairwise_sqdist = _impl.pairwise_sqdist
masked_argmin = _impl.masked_argmin

__all__ = ["BACKEND", "splitmix64_fill", "pairwise_sqdist", "masked_argmin"]
