"""Numba-jitted twins of the kernels in ``numpy_impl``.

Same signatures, same semantics; loop bodies are fused so no (n, n, p)
intermediates are materialized. ``cache=True`` keeps recompilation out of
repeated short-lived runs.
"""

import numpy as np
from numba import config, njit, prange

# the portable threading layer; avoids probing TBB/OpenMP at import
config.THREADING_LAYER = "workqueue"

SQRT5 = np.sqrt(5.0)

KIND_MATERN52 = 0
KIND_RBF = 1

_SCALE = 2.0 ** -32


@njit(cache=True)
def _sobol_block(v, x, start, count):
    d = v.shape[0]
    x = x.copy()
    out = np.empty((count, d), dtype=np.float64)
    for i in range(count):
        prev = start + i - 1
        c = 1
        while prev & 1:
            prev >>= 1
            c += 1
        for j in range(d):
            x[j] ^= v[j, c]
            out[i, j] = x[j] * _SCALE
    return out, x


def sobol_block(v, x, start, count):
    return _sobol_block(v, x, np.int64(start), np.int64(count))


@njit(cache=True)
def pairwise_sqdiff(x):
    n, p = x.shape
    out = np.empty((p, n, n), dtype=np.float64)
    for j in range(p):
        for a in range(n):
            out[j, a, a] = 0.0
            for b in range(a + 1, n):
                diff = x[a, j] - x[b, j]
                out[j, a, b] = diff * diff
                out[j, b, a] = out[j, a, b]
    return out


@njit(cache=True)
def kernel_from_sqdiff(d2, ls, amp2, kind):
    p, n, _ = d2.shape
    inv = 1.0 / (ls * ls)
    out = np.empty((n, n), dtype=np.float64)
    for a in range(n):
        for b in range(a, n):
            s = 0.0
            for j in range(p):
                s += inv[j] * d2[j, a, b]
            if kind == KIND_RBF:
                k = amp2 * np.exp(-0.5 * s)
            else:
                r = np.sqrt(s)
                k = amp2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * s) * np.exp(-SQRT5 * r)
            out[a, b] = k
            out[b, a] = k
    return out


@njit(cache=True)
def kernel_grad_sums(d2, ls, amp2, w, kind):
    p, n, _ = d2.shape
    inv = 1.0 / (ls * ls)
    g_amp = 0.0
    g_ls = np.zeros(p, dtype=np.float64)
    for a in range(n):
        for b in range(n):
            s = 0.0
            for j in range(p):
                s += inv[j] * d2[j, a, b]
            if kind == KIND_RBF:
                k = amp2 * np.exp(-0.5 * s)
                base = k
            else:
                r = np.sqrt(s)
                e = np.exp(-SQRT5 * r)
                k = amp2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * s) * e
                base = amp2 * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e
            wab = w[a, b]
            g_amp += wab * k
            for j in range(p):
                g_ls[j] += wab * base * d2[j, a, b] * inv[j]
    return g_amp, g_ls


@njit(cache=True, parallel=True)
def cross_kernel(x1, x2, ls, amp2, kind):
    n1, p = x1.shape
    n2 = x2.shape[0]
    inv = 1.0 / (ls * ls)
    out = np.empty((n1, n2), dtype=np.float64)
    for a in prange(n1):
        for b in range(n2):
            s = 0.0
            for j in range(p):
                diff = x1[a, j] - x2[b, j]
                s += diff * diff * inv[j]
            if kind == KIND_RBF:
                out[a, b] = amp2 * np.exp(-0.5 * s)
            else:
                r = np.sqrt(s)
                out[a, b] = (
                    amp2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * s) * np.exp(-SQRT5 * r)
                )
    return out
