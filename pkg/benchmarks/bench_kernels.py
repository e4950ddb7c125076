"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Shapes mirror a mining step at full feature size (B=100, L=2048) and one
million PRNG draws.
"""

import argparse
import timeit

import numpy as np

from zslopt import _kernels_py

try:
    from zslopt import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    a = rng.standard_normal((100, 2048))
    b = rng.standard_normal((100, 2048))
    dist = rng.standard_normal((100, 100))
    mask = rng.random((100, 100)) < 0.5
    return {
        "splitmix64_fill 1e6": lambda m: m.splitmix64_fill(12345, 1_000_000),
        "pairwise_sqdist 100x100x2048": lambda m: m.pairwise_sqdist(a, b),
        "masked_argmin 100x100": lambda m: m.masked_argmin(dist, mask),
    }


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = {"python": _kernels_py}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<30}" + "".join(f"{name:>12}" for name in backends) + "     speedup")
    for label, run in cases(np.random.default_rng(0)).items():
        times = {name: best_of(lambda m=mod: run(m), args.repeat) for name, mod in backends.items()}
        row = f"{label:<30}" + "".join(f"{1e3 * t:>10.2f}ms" for t in times.values())
        if "cython" in times:
            row += f"  {times['python'] / times['cython']:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
