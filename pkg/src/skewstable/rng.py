"""Counter-based random streams (Philox4x32-10).

Every draw is a pure function of ``(seed, stream_id, counter)``, so a path or
sample identified by ``stream_id`` produces the same numbers no matter which
worker generates it or in which order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

# stream tags keep independent purposes apart for the same index
TAG_INCREMENT = 1
TAG_ZETA = 2
TAG_HOLD = 3
TAG_ATOM = 4
TAG_SIGN = 5
TAG_AUX = 6

_INDEX_BITS = 40


@nb.njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(cache=True, inline="always")
def uniform_pair(k0, k1, s0, s1, j):
    """Two doubles in the open interval (0, 1) for counter ``j``."""
    c0 = np.uint64(j) & _MASK
    c1 = np.uint64(j) >> _S32
    a, b, c, d = philox4x32(c0, c1, s0, s1, k0, k1)
    u = ((a >> np.uint64(5)) * np.uint64(67108864) + (b >> np.uint64(6)))
    v = ((c >> np.uint64(5)) * np.uint64(67108864) + (d >> np.uint64(6)))
    scale = 1.0 / 9007199254740992.0
    return (np.float64(u) + 0.5) * scale, (np.float64(v) + 0.5) * scale


def split_key(seed: int) -> tuple[np.uint64, np.uint64]:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def stream_words(tag: int, index: int) -> tuple[np.uint64, np.uint64]:
    if index < 0 or index >= 1 << _INDEX_BITS:
        raise ValueError(f"stream index {index} out of range")
    sid = (int(tag) << _INDEX_BITS) | int(index)
    return np.uint64(sid & 0xFFFFFFFF), np.uint64(sid >> 32)


@nb.njit(cache=True, inline="always")
def stream_id_words(tag, index):
    sid = (np.uint64(tag) << np.uint64(_INDEX_BITS)) | np.uint64(index)
    return sid & _MASK, sid >> _S32


@nb.njit(cache=True)
def _fill_uniform_pairs(k0, k1, tag, indices, j, out):
    for i in range(indices.shape[0]):
        s0, s1 = stream_id_words(tag, indices[i])
        out[i, 0], out[i, 1] = uniform_pair(k0, k1, s0, s1, j)


@dataclass(frozen=True)
class Stream:
    """A family of counter-based substreams under one master seed.

    ``pairs(tag, indices, counter)`` returns, for each index, the two
    uniforms of that index's substream at position ``counter``.
    """

    seed: int

    @property
    def key(self) -> tuple[np.uint64, np.uint64]:
        return split_key(self.seed)

    def pairs(self, tag: int, indices, counter: int = 0) -> np.ndarray:
        idx = np.ascontiguousarray(indices, dtype=np.int64)
        out = np.empty((idx.shape[0], 2))
        k0, k1 = self.key
        _fill_uniform_pairs(k0, k1, np.int64(tag), idx, np.int64(counter), out)
        return out

    def uniform(self, tag: int, size: int, offset: int = 0, counter: int = 0) -> np.ndarray:
        """``size`` uniforms: first member of the pair for indices offset..offset+size."""
        return self.pairs(tag, np.arange(offset, offset + size), counter)[:, 0]

    def derive(self, *labels: int) -> "Stream":
        """Child stream keyed by integer labels (cells, replicates)."""
        ss = np.random.SeedSequence([int(self.seed) & 0xFFFFFFFFFFFFFFFF, *map(int, labels)])
        return Stream(int(ss.generate_state(1, dtype=np.uint64)[0]))
