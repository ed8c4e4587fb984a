"""Sobol low-discrepancy sequence sampler.

Direction numbers come from the frozen Joe-Kuo reference table
(``_sobol_dirs``); points are produced in Gray-code order, matching the
canonical generator. The stream starts at index 1 so the all-zeros point
is skipped, but ``seek(0)`` exposes the raw sequence for balance checks.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._sobol_dirs import MAX_DIM, POLY, VINIT

NBITS = 32


def _direction_table(dim: int) -> np.ndarray:
    """Direction numbers v_1..v_32 per dimension, shifted to 32-bit scale."""
    v = np.zeros((dim, NBITS + 1), dtype=np.uint64)
    for k in range(1, NBITS + 1):
        v[0, k] = 1 << (NBITS - k)
    for j in range(1, dim):
        poly = POLY[j]
        deg = poly.bit_length() - 1
        # interior coefficient bits a_1..a_{deg-1}
        a = (poly >> 1) & ((1 << (deg - 1)) - 1)
        m = VINIT[j]
        for k in range(1, deg + 1):
            v[j, k] = np.uint64(m[k - 1] << (NBITS - k))
        for k in range(deg + 1, NBITS + 1):
            vk = int(v[j, k - deg]) ^ (int(v[j, k - deg]) >> deg)
            for i in range(1, deg):
                if (a >> (deg - 1 - i)) & 1:
                    vk ^= int(v[j, k - i])
            v[j, k] = np.uint64(vk)
    return v


def _gray_state(v: np.ndarray, index: int) -> np.ndarray:
    """Integer state of point ``index`` directly: XOR of v columns on gray bits."""
    x = np.zeros(v.shape[0], dtype=np.uint64)
    gray = index ^ (index >> 1)
    k = 1
    while gray:
        if gray & 1:
            x ^= v[:, k]
        gray >>= 1
        k += 1
    return x


class SobolSampler:
    """Stateful Sobol stream over ``[0, 1)^dim``.

    Parameters
    ----------
    dim : int
        Number of dimensions, at most 128.
    scramble_seed : int, optional
        When given, applies a deterministic per-dimension digital XOR
        shift. Distinct seeds give distinct streams; the dyadic balance
        properties are preserved.
    """

    def __init__(self, dim: int, scramble_seed: int | None = None):
        if not 1 <= dim <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {dim}")
        self.dim = dim
        self.scramble_seed = scramble_seed
        self._v = _direction_table(dim)
        if scramble_seed is None:
            self._shift = np.zeros(dim, dtype=np.uint64)
        else:
            rng = np.random.default_rng(scramble_seed)
            self._shift = rng.integers(0, 1 << NBITS, size=dim, dtype=np.uint64)
        self._index = 1
        self._state = np.zeros(dim, dtype=np.uint64)

    @property
    def index(self) -> int:
        """Index of the next point to be emitted."""
        return self._index

    def seek(self, index: int) -> None:
        """Position the stream so the next point emitted is ``index``."""
        if index < 0:
            raise ValueError("index must be >= 0")
        self._index = index
        # predecessor state; unused when index == 0 (point 0 is emitted directly)
        self._state = _gray_state(self._v, max(index - 1, 0))

    def next(self, count: int) -> np.ndarray:
        """Next ``count`` points of the stream, shape ``(count, dim)``."""
        if count < 1:
            raise ValueError("count must be >= 1")
        out = np.empty((count, self.dim), dtype=np.float64)
        row = 0
        if self._index == 0:
            out[0] = 0.0
            self._state = np.zeros(self.dim, dtype=np.uint64)
            self._index = 1
            row = 1
        if row < count:
            block, self._state = _accel.sobol_block(
                self._v, self._state, self._index, count - row
            )
            out[row:] = block
            self._index += count - row
        if self.scramble_seed is None:
            return out
        # the float64 encoding of a 32-bit integer / 2**32 is exact, so the
        # digital shift can be applied losslessly after the fact
        raw = np.round(out * float(1 << NBITS)).astype(np.uint64)
        return ((raw ^ self._shift) / float(1 << NBITS)).astype(np.float64)


def sobol_next(sampler: SobolSampler, count: int) -> np.ndarray:
    """Functional alias for :meth:`SobolSampler.next`."""
    return sampler.next(count)
