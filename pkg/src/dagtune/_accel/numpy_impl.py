"""Pure-numpy implementations of the hot numeric kernels.

Reference backend: every function here has a numba twin in
``numba_impl`` with identical signature and semantics. Keep the two in
lockstep; ``tests/test_accel.py`` asserts parity.
"""

import numpy as np

SQRT5 = np.sqrt(5.0)

KIND_MATERN52 = 0
KIND_RBF = 1

_SCALE = 2.0 ** -32


def sobol_block(v, x, start, count):
    """Generate Sobol points ``start .. start+count-1`` in Gray-code order.

    Parameters
    ----------
    v : (d, 33) uint64
        Direction numbers, columns 1..32 used (column 0 unused).
    x : (d,) uint64
        Integer state of point ``start - 1`` (point 0 is all zeros).
    start : int
        Index of the first point to emit, >= 1.
    count : int
        Number of points.

    Returns
    -------
    out : (count, d) float64 in [0, 1)
    x : (d,) uint64
        State of the last emitted point.
    """
    x = x.copy()
    out = np.empty((count, v.shape[0]), dtype=np.float64)
    for i in range(count):
        prev = start + i - 1
        c = 1
        while prev & 1:
            prev >>= 1
            c += 1
        x ^= v[:, c]
        out[i] = x
    out *= _SCALE
    return out, x


def pairwise_sqdiff(x):
    """Per-dimension squared differences, shape (p, n, n)."""
    d = x[:, None, :] - x[None, :, :]
    return np.ascontiguousarray(np.transpose(d * d, (2, 0, 1)))


def kernel_from_sqdiff(d2, ls, amp2, kind):
    """Noise-free covariance matrix from cached squared differences."""
    s = np.tensordot(1.0 / (ls * ls), d2, axes=1)
    if kind == KIND_RBF:
        return amp2 * np.exp(-0.5 * s)
    r = np.sqrt(s)
    return amp2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * s) * np.exp(-SQRT5 * r)


def kernel_grad_sums(d2, ls, amp2, w, kind):
    """Weighted sums of covariance derivatives in log-hyperparameter space.

    Returns ``(g_amp, g_ls)`` with ``g_amp = sum(w * K)`` (the derivative of
    K w.r.t. log amp2 is K itself) and
    ``g_ls[j] = sum(w * dK/dlog ls_j)``.
    """
    s = np.tensordot(1.0 / (ls * ls), d2, axes=1)
    if kind == KIND_RBF:
        k = amp2 * np.exp(-0.5 * s)
        base = k
    else:
        r = np.sqrt(s)
        e = np.exp(-SQRT5 * r)
        k = amp2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * s) * e
        base = amp2 * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e
    g_amp = float(np.sum(w * k))
    wb = w * base
    g_ls = np.array(
        [np.sum(wb * d2[j]) / (ls[j] * ls[j]) for j in range(d2.shape[0])]
    )
    return g_amp, g_ls


def cross_kernel(x1, x2, ls, amp2, kind):
    """Covariance matrix between two point sets, shape (n1, n2).

    Uses direct squared differences (chunked over rows of ``x1`` to bound
    memory) rather than the norm-expansion trick, so values match the numba
    twin to rounding error even for near-coincident points.
    """
    q1 = x1 / ls
    q2 = x2 / ls
    n1 = q1.shape[0]
    s = np.empty((n1, q2.shape[0]), dtype=np.float64)
    chunk = max(1, int(2**22 // max(q2.size, 1)))
    for lo in range(0, n1, chunk):
        hi = min(lo + chunk, n1)
        d = q1[lo:hi, None, :] - q2[None, :, :]
        s[lo:hi] = np.einsum("ijk,ijk->ij", d, d)
    if kind == KIND_RBF:
        return amp2 * np.exp(-0.5 * s)
    r = np.sqrt(s)
    return amp2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * s) * np.exp(-SQRT5 * r)
