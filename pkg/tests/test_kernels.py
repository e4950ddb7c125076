import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zslopt import _kernels_py, kernels

compiled = pytest.importorskip("zslopt._kernels", reason="compiled extension not built")

floats = st.floats(-1e3, 1e3, allow_nan=False)


def test_backend_selection():
    forced = os.environ.get("ZSLOPT_BACKEND", "").lower() == "python"
    assert kernels.BACKEND == ("python" if forced else "cython")


@given(st.integers(0, 2**64 - 1), st.integers(0, 300))
@settings(max_examples=50, deadline=None)
def test_splitmix_fill_identical(state, n):
    a, sa = compiled.splitmix64_fill(state, n)
    b, sb = _kernels_py.splitmix64_fill(state, n)
    assert sa == sb
    assert np.array_equal(a, b)


@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 9), st.data())
@settings(max_examples=60, deadline=None)
def test_pairwise_sqdist_bit_identical(n, m, d, data):
    a = data.draw(arrays(np.float64, (n, d), elements=floats))
    b = data.draw(arrays(np.float64, (m, d), elements=floats))
    assert np.array_equal(compiled.pairwise_sqdist(a, b), _kernels_py.pairwise_sqdist(a, b))


@given(st.integers(1, 6), st.integers(1, 6), st.data())
@settings(max_examples=60, deadline=None)
def test_masked_argmin_identical(n, m, data):
    dist = data.draw(arrays(np.float64, (n, m), elements=st.sampled_from([0.0, 1.0, 2.0, 0.5])))
    mask = data.draw(arrays(np.bool_, (n, m)))
    assert np.array_equal(compiled.masked_argmin(dist, mask), _kernels_py.masked_argmin(dist, mask))


def test_masked_argmin_all_masked_row():
    dist = np.array([[1.0, 0.0], [3.0, 2.0]])
    mask = np.array([[False, False], [True, True]])
    for mod in (compiled, _kernels_py):
        assert mod.masked_argmin(dist, mask).tolist() == [-1, 1]


def test_fallback_end_to_end_matches(tmp_path):
    """Training under the forced fallback gives byte-identical checkpoints."""
    import subprocess
    import sys

    code = ("from zslopt.dataset import synth; from zslopt import vpb, kernels;"
            "ds = synth(seed=1, p=3, q=1, d=6, k=4, n_per_class=8);"
            "b, n, _ = vpb.train(ds, vpb.VpbConfig(hidden=5, rounds=2, proto_iters_per_round=5,"
            " embed_iters_per_round=5, batch_size=8, lr_embed=1e-2));"
            "vpb.save_model(__import__('sys').argv[1], b, n); print(kernels.BACKEND)")
    outs = []
    for backend in ("cython", "python"):
        path = tmp_path / f"{backend}.zslw"
        env = dict(os.environ, ZSLOPT_BACKEND=backend)
        res = subprocess.run([sys.executable, "-c", code, str(path)], env=env, capture_output=True, text=True,
                             check=True)
        assert res.stdout.strip() == backend
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_kernels_accept_read_only_inputs():
    a = np.arange(6.0).reshape(2, 3)
    a.setflags(write=False)
    mask = np.ones((2, 2), dtype=bool)
    mask.setflags(write=False)
    for mod in (compiled, _kernels_py):
        d = mod.pairwise_sqdist(a, a)
        d.setflags(write=False)
        assert mod.masked_argmin(d, mask).tolist() == [0, 1]
