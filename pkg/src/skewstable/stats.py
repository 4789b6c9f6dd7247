"""Chunked Monte Carlo moments.

Sample indices are cut into fixed-size chunks; each chunk yields raw sums and
chunks are merged in index order.  The floating-point summation order is thus
a function of the sample count only, which keeps results byte-identical no
matter how chunks are distributed over workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHUNK = 8192


def chunks(n: int, size: int = CHUNK) -> list[tuple[int, int]]:
    return [(o, min(size, n - o)) for o in range(0, n, size)]


@dataclass(frozen=True)
class Moments:
    """Sums for a pair of per-sample quantities (a, b): n, Σa, Σb, Σa², Σb², Σab."""

    sums: tuple[float, ...]

    @classmethod
    def of(cls, a, b=None) -> "Moments":
        a = np.asarray(a, dtype=float)
        b = np.zeros_like(a) if b is None else np.asarray(b, dtype=float)
        return cls((float(a.size), float(a.sum()), float(b.sum()), float(a @ a), float(b @ b), float(a @ b)))

    @classmethod
    def zero(cls) -> "Moments":
        return cls((0.0,) * 6)

    def __add__(self, other: "Moments") -> "Moments":
        return Moments(tuple(x + y for x, y in zip(self.sums, other.sums)))

    @property
    def n(self) -> int:
        return int(self.sums[0])

    def mean(self) -> float:
        return self.sums[1] / self.sums[0]

    def stderr(self) -> float:
        n, s, _, ss, _, _ = self.sums
        if n < 2:
            return 0.0
        var = max(ss - s * s / n, 0.0) / (n - 1)
        return float(np.sqrt(var / n))

    def ratio(self, add_num: float = 0.0, add_den: float = 0.0) -> tuple[float, float]:
        """(add_num + mean a)/(add_den + mean b) with a delta-method standard error."""
        n, sa, sb, saa, sbb, sab = self.sums
        ma, mb = sa / n, sb / n
        den = add_den + mb
        r = (add_num + ma) / den
        if n < 2:
            return r, 0.0
        va = max(saa / n - ma * ma, 0.0)
        vb = max(sbb / n - mb * mb, 0.0)
        cab = sab / n - ma * mb
        var = max(va - 2.0 * r * cab + r * r * vb, 0.0) * n / (n - 1)
        return r, float(np.sqrt(var / n) / abs(den))


def merge(parts) -> Moments:
    total = Moments.zero()
    for p in parts:
        total = total + p
    return total
