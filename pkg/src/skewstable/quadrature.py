"""Quadrature primitives for slowly decaying Fourier-type integrals.

The integrals in this package look like ``∫_0^∞ a(y) cos(y) dy`` where the
amplitude ``a`` decays like a power ``y^{-α}`` and may have a cusp at the
origin.  The strategy is:

* a head interval ``[0, Y]`` integrated with Gauss-Legendre panels on a
  geometric ladder towards 0 followed by panels of width at most π/2;
* a tail ``[Y, ∞)`` split into half-period cells between consecutive zeros of
  the trigonometric factor, whose alternating contributions are summed with
  the Cohen-Rodriguez Villegas-Zagier accelerator.

Every evaluation carries its own error estimate (two Gauss orders on the head,
two accelerator lengths on the tail) and raises :class:`QuadratureError` when
the estimate exceeds the requested tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when an integral cannot be resolved to the requested tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and tuning knobs for the oscillatory integrator.

    direct_cells: half-period cells integrated directly before series acceleration.
    accel_terms: number of cells fed to the alternating-series accelerator.
    split: the head/tail split is at least ``split`` times the amplitude's
        crossover scale (where the power-law expansion of the amplitude starts
        converging).
    """

    abs_tol: float = 1e-13
    rel_tol: float = 1e-10
    direct_cells: int = 2
    accel_terms: int = 24
    split: float = 2.0
    order: int = 20
    ladder: int = 56

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.accel_terms < 10 or self.order < 4 or self.direct_cells < 0:
            raise ValueError("accel_terms >= 10, order >= 4, direct_cells >= 0 required")
        if self.split < 1.0:
            raise ValueError("split must be >= 1")

    def tol(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


DEFAULT_SPEC = QuadratureSpec()


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def panel_rule(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Flattened composite Gauss-Legendre nodes/weights over consecutive edges."""
    t, w = gauss_legendre(order)
    a = edges[:-1, None]
    h = np.diff(edges)[:, None]
    return (a + h * t).ravel(), (h * w).ravel()


def head_edges(Y: float, ladder: int, first: float = np.pi / 2) -> np.ndarray:
    """Geometric ladder 0 < ... < first/2 < first, then steps of at most π/2 up to Y."""
    top = min(first, Y)
    geo = top * 0.5 ** np.arange(ladder, -1, -1)
    n_lin = int(np.ceil((Y - top) / (np.pi / 2))) if Y > top else 0
    lin = np.linspace(top, Y, n_lin + 1)[1:] if n_lin else np.empty(0)
    return np.concatenate(([0.0], geo, lin))


def crvz_sum(a: np.ndarray) -> float:
    """Sum of Σ (-1)^k a_k by the Cohen-Rodriguez Villegas-Zagier scheme."""
    n = len(a)
    d = (3.0 + np.sqrt(8.0)) ** n
    d = 0.5 * (d + 1.0 / d)
    b, c, s = -1.0, -d, 0.0
    for k in range(n):
        c = b - c
        s += c * a[k]
        b = (k + n) * (k - n) * b / ((k + 0.5) * (k + 1.0))
    return s / d


def _first_zero_at_least(y: float, kind: str) -> float:
    phase = 0.5 * np.pi if kind == "cos" else 0.0
    k = np.ceil((y - phase) / np.pi)
    return phase + max(k, 0.0) * np.pi


def oscillatory_tail(amp: Callable[[np.ndarray], np.ndarray], start: float, kind: str,
                     spec: QuadratureSpec = DEFAULT_SPEC) -> tuple[float, float]:
    """∫_start^∞ amp(y)·trig(y) dy where ``start`` is a zero of ``trig``.

    Returns (value, error estimate).
    """
    n = spec.accel_terms
    t, w = gauss_legendre(spec.order)
    edges = start + np.pi * np.arange(n + 1)
    y = edges[:-1, None] + np.pi * t
    trig = np.cos(y) if kind == "cos" else np.sin(y)
    cells = (amp(y) * trig) @ (np.pi * w)
    a = cells * (-1.0) ** np.arange(n)
    full = crvz_sum(a)
    short = crvz_sum(a[: n - 8])
    return full, abs(full - short)


def half_line(head: Callable[[np.ndarray], np.ndarray], tail_amp: Callable[[np.ndarray], np.ndarray],
              kind: str, scale: float, spec: QuadratureSpec = DEFAULT_SPEC,
              tail_offset: Callable[[float], float] | None = None, label: str = "integral") -> float:
    """Evaluate ``∫_0^Y head(y) dy + [tail_offset(Y)] + ∫_Y^∞ tail_amp(y) trig(y) dy``.

    ``head`` is the full integrand on the head interval; on the tail the
    integrand must equal ``tail_amp(y)·trig(y)`` plus whatever ``tail_offset``
    accounts for analytically.  ``scale`` is the crossover scale of the
    amplitude; the split point is placed at ``spec.split·scale`` or later.
    """
    Y = _first_zero_at_least(max(spec.split * scale, np.pi / 2), kind) + spec.direct_cells * np.pi
    edges = head_edges(Y, spec.ladder)
    y1, w1 = panel_rule(edges, spec.order)
    y2, w2 = panel_rule(edges, spec.order + 8)
    h1 = float(head(y1) @ w1)
    h2 = float(head(y2) @ w2)
    tail, tail_err = oscillatory_tail(tail_amp, Y, kind, spec)
    value = h2 + tail + (tail_offset(Y) if tail_offset is not None else 0.0)
    err = abs(h2 - h1) + tail_err
    if not np.isfinite(value) or err > spec.tol(value):
        raise QuadratureError(f"{label}: error estimate {err:.3e} exceeds tolerance {spec.tol(value):.3e}")
    return value


def log_panel_rule(lo: float, hi: float, width: float = 0.5, order: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Nodes x and weights for ∫_lo^hi g(x) dx written as ∫ g(e^s) e^s ds."""
    n = max(1, int(np.ceil((np.log(hi) - np.log(lo)) / width)))
    edges = np.linspace(np.log(lo), np.log(hi), n + 1)
    s, w = panel_rule(edges, order)
    x = np.exp(s)
    return x, w * x
