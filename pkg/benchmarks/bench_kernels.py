"""Time the compiled aggregation kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Prints one CSV row per (shape, kernel, backend) and the speedup of the
compiled backend. Also checks both backends agree.
"""
import argparse
import timeit

import numpy as np

from blockgcn import _kernels_py

try:
    from blockgcn import _ckernels
except ImportError:
    _ckernels = None

SHAPES = [  # (N, V, T, D)
    (32, 25, 16, 16),
    (32, 25, 8, 32),
    (8, 25, 64, 64),
]


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print("shape, kernel, numpy_ms, compiled_ms, speedup, max_abs_diff")
    for n, v, t, d in SHAPES:
        m = rng.normal(size=(n, v, v, d))
        h = rng.normal(size=(n, v, t, d))
        g = rng.normal(size=(n, v, t, d))
        shape = f"{n}x{v}x{t}x{d}"
        cases = {
            "forward": (lambda k: k.aggregate(m, h)),
            "backward": (lambda k: k.aggregate_backward(m, h, g)),
        }
        for name, call in cases.items():
            t_py = bench(lambda: call(_kernels_py), args.repeat) * 1e3
            if _ckernels is None:
                print(f"{shape}, {name}, {t_py:.3f}, nan, nan, nan")
                continue
            t_c = bench(lambda: call(_ckernels), args.repeat) * 1e3
            a, b = call(_kernels_py), call(_ckernels)
            if isinstance(a, tuple):
                diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
            else:
                diff = float(np.max(np.abs(a - b)))
            print(f"{shape}, {name}, {t_py:.3f}, {t_c:.3f}, {t_py / t_c:.2f}, {diff:.2e}")


if __name__ == "__main__":
    main()
