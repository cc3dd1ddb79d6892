"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 64,256,1024]

Both backends are called on the same inputs and their outputs are checked
for equality before any timing is reported.
"""

import argparse
import sys
import timeit

import numpy as np

from topoattn import _fallback

try:
    from topoattn import _kernels
except ImportError:
    _kernels = None


def causal_map(rng, n):
    A = np.tril(rng.random((n, n)) ** 3)
    A[:, 0] += 2.0 * A.sum(axis=1)
    return A / A.sum(axis=1, keepdims=True)


def best_of(fn, repeat):
    timer = timeit.Timer(fn)
    loops, _ = timer.autorange()
    return min(timer.repeat(repeat, loops)) / loops


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="64,256,1024")
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1

    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'n':>6}{'numpy (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        A = causal_map(rng, n)
        B = (rng.random((n, n)) < 0.3).astype(np.uint8)
        cases = [
            ("sharpen_rows", lambda m: m.sharpen_rows(A, 0.3, 1e-12)),
            ("binary_close", lambda m: m.binary_close(B)),
        ]
        for name, call in cases:
            ref, got = call(_fallback), call(_kernels)
            same = all(np.array_equal(x, y) for x, y in zip(ref, got)) if isinstance(ref, tuple) \
                else np.array_equal(ref, got)
            if not same:
                print(f"{name} n={n}: backends disagree", file=sys.stderr)
                return 1
            t_py = best_of(lambda: call(_fallback), args.repeat)
            t_cy = best_of(lambda: call(_kernels), args.repeat)
            print(f"{name:<14}{n:>6}{t_py * 1e3:>14.3f}{t_cy * 1e3:>14.3f}{t_py / t_cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
