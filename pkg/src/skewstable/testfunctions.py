"""Bounded test functions with a compact numeric encoding for compiled kernels."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba as nb
import numpy as np

KIND_CONSTANT = 0
KIND_GAUSSIAN = 1
KIND_INDICATOR = 2
KIND_CAPPED_POWER = 3
KIND_CALLABLE = -1


@dataclass(frozen=True)
class BoundedTestFunction:
    """A bounded function f with declared bound ``sup|f|`` and a tag.

    ``kind``/``params`` let compiled simulation kernels evaluate the function;
    arbitrary callables are allowed for deterministic routines only.
    Limits at ±∞ (``far``) feed the asymptotic completion of η-pairings.
    """

    func: Callable[[np.ndarray], np.ndarray]
    bound: float
    tag: str
    kind: int = KIND_CALLABLE
    params: tuple[float, float] = (0.0, 0.0)
    far: tuple[float, float] = (0.0, 0.0)
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    @property
    def is_constant(self) -> bool:
        return self.kind == KIND_CONSTANT

    @property
    def code(self) -> tuple[int, float, float]:
        if self.kind == KIND_CALLABLE:
            raise TypeError(f"test function {self.tag!r} has no compiled encoding")
        return self.kind, float(self.params[0]), float(self.params[1])


def constant(c: float = 1.0) -> BoundedTestFunction:
    c = float(c)
    return BoundedTestFunction(lambda x: np.full(np.shape(x), c), abs(c), "constant" if c == 1.0 else f"constant[{c:g}]",
                               KIND_CONSTANT, (c, 0.0), (c, c))


def gaussian_bump(width: float = 1.0) -> BoundedTestFunction:
    """exp(-(x/width)^2)."""
    w = float(width)
    if w <= 0:
        raise ValueError("width must be positive")
    tag = "gaussian-bump" if w == 1.0 else f"gaussian-bump[{w:g}]"
    return BoundedTestFunction(lambda x: np.exp(-(x / w) ** 2), 1.0, tag, KIND_GAUSSIAN, (w, 0.0))


def indicator(a: float, b: float) -> BoundedTestFunction:
    """Indicator of [a, b] with the value ½ at finite endpoints.

    The half-weight convention makes time spent exactly at an endpoint (a
    holding state at 0, say) count symmetrically.
    """
    a, b = float(a), float(b)
    if not a < b:
        raise ValueError("indicator needs a < b")

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.where((x > a) & (x < b), 1.0, np.where((x == a) | (x == b), 0.5, 0.0))

    far = (1.0 if a == -np.inf else 0.0, 1.0 if b == np.inf else 0.0)
    return BoundedTestFunction(f, 1.0, f"indicator[{a:g},{b:g}]", KIND_INDICATOR, (a, b), far)


def capped_power(power: float) -> BoundedTestFunction:
    """min(|x|^power, 1)."""
    p = float(power)
    return BoundedTestFunction(lambda x: np.minimum(np.abs(x) ** p, 1.0), 1.0, f"capped-power[{p:g}]",
                               KIND_CAPPED_POWER, (p, 0.0), (1.0, 1.0))


def zero() -> BoundedTestFunction:
    return constant(0.0)


@nb.njit(cache=True, inline="always")
def feval(kind, p0, p1, x):
    if kind == KIND_CONSTANT:
        return p0
    if kind == KIND_GAUSSIAN:
        r = x / p0
        return np.exp(-r * r)
    if kind == KIND_INDICATOR:
        if x > p0 and x < p1:
            return 1.0
        if x == p0 or x == p1:
            return 0.5
        return 0.0
    if kind == KIND_CAPPED_POWER:
        return min(abs(x) ** p0, 1.0)
    return np.nan


def from_tag(tag: str) -> BoundedTestFunction:
    """Inverse of the tags produced above (used by configuration files)."""
    if tag == "constant":
        return constant()
    if tag == "zero":
        return zero()
    if tag == "gaussian-bump":
        return gaussian_bump()
    for prefix, make in (("constant[", constant), ("gaussian-bump[", gaussian_bump), ("capped-power[", capped_power)):
        if tag.startswith(prefix) and tag.endswith("]"):
            return make(float(tag[len(prefix):-1]))
    if tag.startswith("indicator[") and tag.endswith("]"):
        a, b = tag[len("indicator["):-1].split(",")
        return indicator(float(a), float(b))
    raise ValueError(f"unknown test function tag {tag!r}")
