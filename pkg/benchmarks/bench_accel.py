"""Timing comparison of the numba kernels against the pure-numpy fallback.

Run with::

    python benchmarks/bench_accel.py [--repeat 5]

Imports both backend modules directly (ignoring DAGTUNE_NO_NUMBA), warms
the JIT once, and reports best-of-N wall times per kernel and size.
"""

import argparse
import time

import numpy as np

from dagtune._accel import numba_impl, numpy_impl
from dagtune.sobol import _direction_table

KIND = numpy_impl.KIND_MATERN52


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    v = _direction_table(16)
    x0 = np.zeros(16, dtype=np.uint64)
    yield "sobol_block 16d x 8192", {
        "numpy": lambda: numpy_impl.sobol_block(v, x0, 1, 8192),
        "numba": lambda: numba_impl.sobol_block(v, x0, 1, 8192),
    }

    x = rng.uniform(size=(200, 10))
    d2_np = numpy_impl.pairwise_sqdiff(x)
    yield "pairwise_sqdiff 200x10", {
        "numpy": lambda: numpy_impl.pairwise_sqdiff(x),
        "numba": lambda: numba_impl.pairwise_sqdiff(x),
    }

    ls = rng.uniform(0.3, 2.0, size=10)
    yield "kernel_from_sqdiff 200x200", {
        "numpy": lambda: numpy_impl.kernel_from_sqdiff(d2_np, ls, 1.0, KIND),
        "numba": lambda: numba_impl.kernel_from_sqdiff(d2_np, ls, 1.0, KIND),
    }

    w = rng.normal(size=(200, 200))
    yield "kernel_grad_sums 200x200x10", {
        "numpy": lambda: numpy_impl.kernel_grad_sums(d2_np, ls, 1.0, w, KIND),
        "numba": lambda: numba_impl.kernel_grad_sums(d2_np, ls, 1.0, w, KIND),
    }

    x1 = rng.uniform(size=(65536, 10))
    x2 = rng.uniform(size=(50, 10))
    yield "cross_kernel 65536x50x10", {
        "numpy": lambda: numpy_impl.cross_kernel(x1, x2, ls, 1.0, KIND),
        "numba": lambda: numba_impl.cross_kernel(x1, x2, ls, 1.0, KIND),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':36} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, impls in cases(rng):
        impls["numba"]()  # warm the JIT outside the timed region
        t_np = best_of(impls["numpy"], args.repeat)
        t_nb = best_of(impls["numba"], args.repeat)
        print(f"{name:36} {t_np * 1e3:10.3f} ms {t_nb * 1e3:10.3f} ms {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
