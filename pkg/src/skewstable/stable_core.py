"""Symmetric α-stable increments and paths, jump laws, and hitting of zero."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .rng import TAG_INCREMENT, TAG_ZETA, Stream


@dataclass(frozen=True)
class StableLaw:
    """Symmetric stable law with exponent |z|^α (increment over dt has CF exp(-dt|z|^α)).

    ``boundary=True`` admits α = 2 (Gaussian with variance 2 per unit time)
    for sanity checks; everything else requires 1 < α < 2.
    """

    alpha: float
    boundary: bool = False

    def __post_init__(self):
        a = float(self.alpha)
        ok = 1.0 < a < 2.0 or (self.boundary and a == 2.0)
        if not ok:
            raise ValueError(f"alpha must lie in (1, 2), got {self.alpha}")

    def cf(self, z, t: float = 1.0):
        return np.exp(-t * np.abs(z) ** self.alpha)


@dataclass(frozen=True)
class Grid:
    t_max: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 0 or (self.n_steps > 0 and not self.t_max > 0):
            raise ValueError("Grid needs t_max > 0 and n_steps >= 0")

    @classmethod
    def from_dt(cls, t_max: float, dt: float) -> "Grid":
        n = int(round(t_max / dt))
        if n < 1 or abs(n * dt - t_max) > 1e-9 * t_max:
            raise ValueError(f"t_max={t_max} is not a multiple of dt={dt}")
        return cls(float(t_max), n)

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps if self.n_steps else 0.0

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_steps + 1) if self.n_steps else np.zeros(1)


@dataclass(frozen=True)
class StablePath:
    law: StableLaw
    times: np.ndarray
    values: np.ndarray
    x0: float


@dataclass(frozen=True)
class HittingRule:
    """Absorption rule |X| <= h with a time cap.

    ``zoom`` controls the adaptive refinement used by the killed-path
    samplers: near 0 the step is at most (|X|/zoom)^α.  Grid-based detection
    (:func:`detect_hit_zero`) ignores it.
    """

    h: float
    t_cap: float
    zoom: float = 16.0

    def __post_init__(self):
        if not (self.h > 0 and self.t_cap > 0 and self.zoom > 0):
            raise ValueError("HittingRule needs h > 0, t_cap > 0, zoom > 0")

    @classmethod
    def default(cls, law: StableLaw, dt: float = 1e-3, lam: float = 1.0) -> "HittingRule":
        """Grid-scale threshold h = dt^{1/α} and t_cap = 40/λ."""
        return cls(dt ** (1.0 / law.alpha), 40.0 / lam)


@dataclass(frozen=True)
class TailLaw:
    """Exact Pareto magnitude P(|ζ|>x) = (x/x_min)^{-β} with independent sign."""

    beta: float
    c_minus: float = 0.5
    c_plus: float = 0.5
    x_min: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.c_minus < 0 or self.c_plus < 0 or abs(self.c_minus + self.c_plus - 1.0) > 1e-12:
            raise ValueError("c_minus, c_plus must be nonnegative and sum to 1")
        if not self.x_min > 0:
            raise ValueError("x_min must be positive")

    def survival(self, x):
        """P(|ζ| > x)."""
        x = np.asarray(x, dtype=float)
        return np.where(x < self.x_min, 1.0, (np.maximum(x, self.x_min) / self.x_min) ** (-self.beta))

    @property
    def code(self):
        return K.JUMP_PARETO, self.beta, self.x_min, self.c_plus


@dataclass(frozen=True)
class FiniteMeanLaw:
    """Jump law with E|ζ| < ∞: 'two-point' ±scale, 'exponential' magnitude, or 'constant' +scale."""

    kind: str = "two-point"
    scale: float = 1.0
    c_plus: float = 0.5

    def __post_init__(self):
        if self.kind not in ("two-point", "exponential", "constant"):
            raise ValueError(f"unknown finite-mean kind {self.kind!r}")
        if not self.scale > 0 or not 0 <= self.c_plus <= 1:
            raise ValueError("scale must be positive and c_plus in [0, 1]")

    @property
    def c_minus(self) -> float:
        return 1.0 - self.c_plus

    @property
    def code(self):
        k = {"two-point": K.JUMP_TWO_POINT, "exponential": K.JUMP_EXPONENTIAL, "constant": K.JUMP_CONSTANT}[self.kind]
        return k, self.scale, 0.0, self.c_plus


def sample_stable(law: StableLaw, dt: float, size: int, rng: Stream, offset: int = 0,
                  tag: int = TAG_INCREMENT) -> np.ndarray:
    """``size`` independent increments over ``dt``, one per substream index."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    out = np.empty(size)
    k0, k1 = rng.key
    K.fill_cms_indexed(float(law.alpha), k0, k1, tag, np.arange(offset, offset + size, dtype=np.int64), 0, out)
    return dt ** (1.0 / law.alpha) * out


def sample_stable_increment(law: StableLaw, dt: float, rng: Stream, index: int = 0) -> float:
    if not dt > 0:
        if dt == 0:
            return 0.0
        raise ValueError("dt must be positive")
    return float(sample_stable(law, dt, 1, rng, offset=index)[0])


def simulate_path(law: StableLaw, grid: Grid, x0: float, rng: Stream, index: int = 0) -> StablePath:
    """Cumulative sums of grid increments; path ``index`` has its own substream."""
    inc = np.empty(grid.n_steps)
    k0, k1 = rng.key
    K.fill_increments(float(law.alpha), grid.dt ** (1.0 / law.alpha) if grid.n_steps else 0.0,
                      k0, k1, TAG_INCREMENT, np.int64(index), 0, inc)
    values = np.concatenate(([float(x0)], float(x0) + np.cumsum(inc)))
    return StablePath(law, grid.times, values, float(x0))


def detect_hit_zero(path: StablePath, rule: HittingRule) -> Optional[float]:
    """First grid time with |value| <= h, or None if censored."""
    limit = min(path.times[-1], rule.t_cap)
    hits = np.flatnonzero((np.abs(path.values) <= rule.h) & (path.times <= limit))
    return float(path.times[hits[0]]) if hits.size else None


def sample_zeta(tail: TailLaw, rng: Stream, size: Optional[int] = None, offset: int = 0):
    n = 1 if size is None else size
    u = rng.pairs(TAG_ZETA, np.arange(offset, offset + n))
    mag = tail.x_min * u[:, 0] ** (-1.0 / tail.beta)
    z = np.where(u[:, 1] < tail.c_plus, mag, -mag)
    return float(z[0]) if size is None else z


def sample_zeta_finite_mean(rng: Stream, law: FiniteMeanLaw = FiniteMeanLaw(), size: Optional[int] = None,
                            offset: int = 0):
    n = 1 if size is None else size
    u = rng.pairs(TAG_ZETA, np.arange(offset, offset + n))
    if law.kind == "constant":
        z = np.full(n, law.scale)
    else:
        mag = np.full(n, law.scale) if law.kind == "two-point" else -law.scale * np.log(u[:, 0])
        z = np.where(u[:, 1] < law.c_plus, mag, -mag)
    return float(z[0]) if size is None else z


@dataclass(frozen=True)
class KilledSample:
    """Per-path output of the adaptive killed-path sampler."""

    integral: np.ndarray
    sigma: np.ndarray
    censored: np.ndarray
    steps: np.ndarray


def run_killed(law: StableLaw, x0, max_dt: float, rule: HittingRule, rng: Stream, n_paths: int,
               lam: float = 0.0, f_code=(0, 0.0, 0.0), offset: int = 0) -> KilledSample:
    """Simulate ``n_paths`` killed paths (indices offset..offset+n_paths-1).

    ``x0`` is a scalar or one start per path.  The step is ``max_dt`` away from
    the origin and shrinks adaptively near it (see :class:`HittingRule`).
    """
    if not max_dt > 0:
        raise ValueError("max_dt must be positive")
    x0s = np.broadcast_to(np.asarray(x0, dtype=float), (n_paths,)).copy()
    out_i, out_s = np.empty(n_paths), np.empty(n_paths)
    out_c, out_n = np.empty(n_paths, dtype=np.bool_), np.empty(n_paths, dtype=np.int64)
    k0, k1 = rng.key
    fk, fp0, fp1 = f_code
    K.killed_batch(float(law.alpha), x0s, float(lam), int(fk), float(fp0), float(fp1), float(max_dt),
                   float(rule.h), float(rule.zoom), float(rule.t_cap), k0, k1, TAG_INCREMENT,
                   np.arange(offset, offset + n_paths, dtype=np.int64), out_i, out_s, out_c, out_n)
    return KilledSample(out_i, out_s, out_c, out_n)


def sample_hitting_times(law: StableLaw, x0, max_dt: float, rule: HittingRule, rng: Stream, n_paths: int,
                         offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Hitting times σ̂ (t_cap where censored) and censoring flags."""
    s = run_killed(law, x0, max_dt, rule, rng, n_paths, offset=offset)
    return s.sigma, s.censored
