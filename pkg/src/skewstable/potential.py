"""Resolvent kernel, hitting transforms, constants and η-pairings for U_α.

Notation: ``u_λ(x) = (1/π)∫_0^∞ cos(xθ)/(λ+θ^α) dθ`` is the λ-resolvent
density of the symmetric stable process, ``E^x e^{-λσ} = u_λ(x)/u_λ(0)``,
and ``V_λ`` is the resolvent of the process killed at its first visit to 0.

After the substitution y = |x|θ every kernel integral becomes a function of
κ = λ|x|^α alone, e.g. ``u_λ(x) = |x|^{α-1}/π · ∫cos y/(κ+y^α) dy``.
For κ < 1 the deficit ``u_λ(0) - u_λ(x)`` is integrated directly from the
non-negative integrand (1-cos y)/(κ+y^α), which avoids the cancellation that
ruins ``1 - E^x e^{-λσ}`` at small |x|.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, special

from .quadrature import (DEFAULT_SPEC, QuadratureError, QuadratureSpec, gauss_legendre, half_line,
                         head_edges, log_panel_rule, panel_rule)
from .stable_core import Grid, HittingRule, StableLaw, TailLaw, run_killed
from .testfunctions import (KIND_CONSTANT, KIND_GAUSSIAN, KIND_INDICATOR, BoundedTestFunction, constant)
from .rng import Stream

__all__ = [
    "EtaMeasure", "ResolventEstimate", "QuadratureSpec", "QuadratureError", "u_lambda", "u_lambda_zero",
    "integral_power_kernel", "integral_power_kernel_quad", "one_minus_cos_integral",
    "one_minus_cos_integral_quad", "laplace_hitting", "hitting_deficit", "v_lambda_one", "A_const",
    "A_const_printed", "B_const", "C_const", "free_resolvent", "v_lambda", "estimate_V_lambda",
    "eta_pairing", "limit_resolvent_at_zero", "reg_variation_ratio", "reg_variation_limit", "reg_variation_exact", "OuterSpec", "InnerMC", "VTable", "deficit_mass_above",
]


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class EtaMeasure:
    """Power measure with density (c₋1_{x<0} + c₊1_{x>0})|x|^{-1-β}, times a scale.

    normalization='star' uses scale 1; 'levy' rescales by C so that
    ∫E^x(1-e^{-σ}) η(dx) = 1 (this needs the stable law, see :meth:`scale`).
    """

    beta: float
    c_minus: float = 0.5
    c_plus: float = 0.5
    normalization: str = "star"

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.c_minus < 0 or self.c_plus < 0 or abs(self.c_minus + self.c_plus - 1.0) > 1e-12:
            raise ValueError("c_minus, c_plus must be nonnegative and sum to 1")
        if self.normalization not in ("star", "levy"):
            raise ValueError("normalization must be 'star' or 'levy'")

    def check_law(self, law: StableLaw):
        if not self.beta < law.alpha - 1.0:
            raise ValueError(f"integrability requires beta < alpha - 1 (got beta={self.beta}, alpha={law.alpha})")

    def scale(self, law: StableLaw) -> float:
        return 1.0 if self.normalization == "star" else C_const(law, self)

    def density(self, x, law: Optional[StableLaw] = None):
        x = np.asarray(x, dtype=float)
        c = np.where(x > 0, self.c_plus, np.where(x < 0, self.c_minus, 0.0))
        with np.errstate(divide="ignore"):
            d = c * np.abs(x) ** (-1.0 - self.beta)
        return d * (1.0 if law is None else self.scale(law))

    def mass_above(self, eps: float, law: Optional[StableLaw] = None) -> float:
        """η(|x| > eps)."""
        return (self.c_minus + self.c_plus) * eps ** (-self.beta) / self.beta * (1.0 if law is None else self.scale(law))


@dataclass(frozen=True)
class ResolventEstimate:
    value: float
    stderr: float = 0.0
    n_paths: int = 0
    lam: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be nonnegative")

    def interval(self, k: float = 3.0) -> tuple[float, float]:
        return self.value - k * self.stderr, self.value + k * self.stderr

    def covers(self, target: float, k: float = 3.0) -> bool:
        lo, hi = self.interval(k)
        return lo <= target <= hi


# ---------------------------------------------------------------------------
# kernel integrals in the scaled variable y

def _icos(kappa: float, alpha: float, spec: QuadratureSpec) -> float:
    """∫_0^∞ cos y / (κ + y^α) dy."""
    def head(y):
        return np.cos(y) / (kappa + y ** alpha)

    def amp(y):
        return 1.0 / (kappa + y ** alpha)

    return half_line(head, amp, "cos", kappa ** (1.0 / alpha), spec, label=f"cos-kernel(kappa={kappa:.3g})")


def _power_tail(Y: float, kappa: float, alpha: float) -> float:
    """∫_Y^∞ dy/(κ + y^α), valid for κ Y^{-α} < 1."""
    z = kappa * Y ** (-alpha)
    return Y ** (1.0 - alpha) / (alpha - 1.0) * special.hyp2f1(1.0, (alpha - 1.0) / alpha, (2.0 * alpha - 1.0) / alpha, -z)


def _g_deficit(kappa: float, alpha: float, spec: QuadratureSpec) -> float:
    """∫_0^∞ (1 - cos y)/(κ + y^α) dy (κ ≥ 0)."""
    def head(y):
        return 2.0 * np.sin(0.5 * y) ** 2 / (kappa + y ** alpha)

    def amp(y):
        return -1.0 / (kappa + y ** alpha)

    return half_line(head, amp, "cos", kappa ** (1.0 / alpha), spec,
                     tail_offset=lambda Y: _power_tail(Y, kappa, alpha), label=f"deficit-kernel(kappa={kappa:.3g})")


def _sine_step(kappa: float, alpha: float, spec: QuadratureSpec) -> float:
    """∫_0^∞ sin y / (y (κ + y^α)) dy."""
    def head(y):
        return np.sin(y) / (y * (kappa + y ** alpha))

    def amp(y):
        return 1.0 / (y * (kappa + y ** alpha))

    return half_line(head, amp, "sin", kappa ** (1.0 / alpha), spec, label=f"sine-kernel(kappa={kappa:.3g})")


def _sine_step_complement(kappa: float, alpha: float, spec: QuadratureSpec) -> float:
    """∫_0^∞ sin y · y^{α-1} / (κ (κ + y^α)) dy  (= π/(2κ) - _sine_step)."""
    def head(y):
        return np.sin(y) * y ** (alpha - 1.0) / (kappa * (kappa + y ** alpha))

    def amp(y):
        return y ** (alpha - 1.0) / (kappa * (kappa + y ** alpha))

    return half_line(head, amp, "sin", kappa ** (1.0 / alpha), spec, label=f"sine-complement(kappa={kappa:.3g})")


# ---------------------------------------------------------------------------
# resolvent kernel and hitting

def u_lambda_zero(lam: float, law: StableLaw) -> float:
    a = law.alpha
    return lam ** (1.0 / a - 1.0) / (a * np.sin(np.pi / a))


def _check_lam(lam):
    if not lam > 0:
        raise ValueError("lambda must be positive")


def _kernel_pair(x: float, lam: float, law: StableLaw, spec: QuadratureSpec) -> tuple[float, float]:
    """(u_λ(x), u_λ(0) - u_λ(x)) for a scalar x, each accurate in its own right."""
    u0 = u_lambda_zero(lam, law)
    ax = abs(float(x))
    if ax == 0.0:
        return u0, 0.0
    a = law.alpha
    kappa = lam * ax ** a
    pref = ax ** (a - 1.0) / np.pi
    if kappa < 1.0:
        d = pref * _g_deficit(kappa, a, spec)
        return u0 - d, d
    u = pref * _icos(kappa, a, spec)
    return u, u0 - u


def _vectorize(fun, x):
    x = np.asarray(x, dtype=float)
    out = np.array([fun(v) for v in x.ravel()])
    return out.reshape(x.shape) if x.ndim else float(out[0])


def u_lambda(x, lam: float, law: StableLaw, q: QuadratureSpec = DEFAULT_SPEC):
    """Resolvent density u_λ(x); accepts scalars or arrays."""
    _check_lam(lam)
    return _vectorize(lambda v: _kernel_pair(v, lam, law, q)[0], x)


def laplace_hitting(x, lam: float, law: StableLaw, q: QuadratureSpec = DEFAULT_SPEC):
    """E^x e^{-λσ} = u_λ(x)/u_λ(0)."""
    _check_lam(lam)
    u0 = u_lambda_zero(lam, law)
    return _vectorize(lambda v: _kernel_pair(v, lam, law, q)[0] / u0, x)


def hitting_deficit(x, lam: float, law: StableLaw, q: QuadratureSpec = DEFAULT_SPEC):
    """E^x(1 - e^{-λσ}), computed without cancellation at small |x|."""
    _check_lam(lam)
    u0 = u_lambda_zero(lam, law)
    return _vectorize(lambda v: _kernel_pair(v, lam, law, q)[1] / u0, x)


def v_lambda_one(x, lam: float, law: StableLaw, q: QuadratureSpec = DEFAULT_SPEC):
    """V_λ1(x) = (1 - E^x e^{-λσ})/λ."""
    d = hitting_deficit(x, lam, law, q)
    return d / lam


# ---------------------------------------------------------------------------
# closed forms and their raw-quadrature twins

def integral_power_kernel(gamma: float, lam: float, law: StableLaw) -> float:
    """∫_0^∞ θ^γ/(λ+θ^α) dθ = π/(α sin(π(γ+1)/α)) λ^{(γ+1)/α-1}."""
    a = law.alpha
    if not 0.0 <= gamma < a - 1.0:
        raise ValueError(f"gamma must lie in [0, alpha-1), got {gamma}")
    _check_lam(lam)
    return np.pi / (a * np.sin(np.pi * (gamma + 1.0) / a)) * lam ** ((gamma + 1.0) / a - 1.0)


def integral_power_kernel_quad(gamma: float, lam: float, law: StableLaw) -> float:
    """Adaptive quadrature of the same integral.

    [0,1] is integrated directly; on [1,∞) the substitution θ = v^{-1/δ},
    δ = α-1-γ, turns the slowly decaying tail into ∫_0^1 dv/(δ(1+λ v^{α/δ})).
    """
    a = law.alpha
    if not 0.0 <= gamma < a - 1.0:
        raise ValueError(f"gamma must lie in [0, alpha-1), got {gamma}")
    delta = a - 1.0 - gamma
    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=400)
    head = integrate.quad(lambda t: t ** gamma / (lam + t ** a), 0.0, 1.0, **opts)[0]
    tail = integrate.quad(lambda v: 1.0 / (delta * (1.0 + lam * v ** (a / delta))), 0.0, 1.0, **opts)[0]
    return head + tail


def one_minus_cos_integral(x: float, law: StableLaw) -> float:
    """∫_0^∞ (1 - cos(xy))/y^α dy = |x|^{α-1} Γ(2-α) sin(πα/2)/(α-1)."""
    a = law.alpha
    return abs(x) ** (a - 1.0) * special.gamma(2.0 - a) * np.sin(np.pi * a / 2.0) / (a - 1.0)


def one_minus_cos_integral_quad(x: float, law: StableLaw) -> float:
    """Adaptive quadrature: ten periods directly, then Y^{1-α}/(α-1) - ∫_Y^∞ cos(xy) y^{-α} (Fourier weight)."""
    a = law.alpha
    x = abs(float(x))
    if x == 0.0:
        return 0.0
    Y = max(1.0, 20.0 * np.pi / x)
    head, e1 = integrate.quad(lambda y: 2.0 * np.sin(0.5 * x * y) ** 2 / y ** a, 0.0, Y,
                              epsabs=1e-15, epsrel=1e-13, limit=2000, points=[min(1.0, 0.5 * Y)])
    flat = Y ** (1.0 - a) / (a - 1.0)
    with warnings.catch_warnings():
        # QUADPACK's Fourier routine flags slow cycle convergence even when its error estimate is tiny
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        osc, e3 = integrate.quad(lambda y: y ** (-a), Y, np.inf, weight="cos", wvar=x, epsabs=1e-15, limlst=200)
    if e1 + e3 > 1e-10:
        raise QuadratureError(f"raw (1-cos) quadrature error estimate {e1 + e3:.2e}")
    return head + flat - osc


def A_const(lam: float, law: StableLaw) -> float:
    """Small-x constant of λV_λ1(x) ~ A|x|^{α-1} (sin(π/α) form, positive on (1,2))."""
    a = law.alpha
    return (a * np.sin(np.pi / a) * special.gamma(2.0 - a) * np.sin(np.pi * a / 2.0)
            * lam ** (1.0 - 1.0 / a) / (np.pi * (a - 1.0)))


def A_const_printed(lam: float, law: StableLaw) -> float:
    """The variant with sin(πα) in place of α sin(π/α); negative on (1,2), kept for comparison."""
    a = law.alpha
    return (np.sin(np.pi * a) * special.gamma(2.0 - a) * np.sin(np.pi * a / 2.0)
            * lam ** (1.0 - 1.0 / a) / (np.pi * (a - 1.0)))


def B_const(law: StableLaw, form: str = "printed") -> float:
    """Tail constant of P¹(σ>y) ~ B y^{-(1-1/α)}.

    form='printed': sin(πα) sin(πα/2) Γ(1-α) / (π Γ(1-1/α)).
    form='derived': A(1)/Γ(1/α), the Tauberian image of the small-λ expansion
    1 - E e^{-λσ} ~ A(1) λ^{1-1/α}.
    """
    a = law.alpha
    if form == "printed":
        return np.sin(np.pi * a) * np.sin(np.pi * a / 2.0) * special.gamma(1.0 - a) / (np.pi * special.gamma(1.0 - 1.0 / a))
    if form == "derived":
        return A_const(1.0, law) / special.gamma(1.0 / a)
    raise ValueError("form must be 'printed' or 'derived'")


def C_const(law: StableLaw, eta: EtaMeasure) -> float:
    """C with 1/C = (c₋+c₊) Γ(1-β) cos(πβ/2) sin(π/α) / (β sin(π(β+1)/α)) = ∫E^x(1-e^{-σ})η*(dx)."""
    eta.check_law(law)
    a, b = law.alpha, eta.beta
    inv = ((eta.c_minus + eta.c_plus) * special.gamma(1.0 - b) * np.cos(np.pi * b / 2.0) * np.sin(np.pi / a)
           / (b * np.sin(np.pi * (b + 1.0) / a)))
    return 1.0 / inv


# ---------------------------------------------------------------------------
# free and killed resolvents of test functions

_GH_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _hermite(n: int):
    if n not in _GH_CACHE:
        _GH_CACHE[n] = np.polynomial.hermite.hermgauss(n)
    return _GH_CACHE[n]


def _gaussian_resolvent(x: float, width: float, lam: float, law: StableLaw, spec: QuadratureSpec) -> float:
    """∫u_λ(y-x) exp(-(y/w)^2) dy."""
    a = law.alpha
    ax = abs(x)
    if ax > 12.0 * width:
        # far from the bump u_λ is analytic across its support: Gauss-Hermite in y
        vals = []
        for n in (32, 48):
            t, w = _hermite(n)
            vals.append(width * float(w @ u_lambda(ax - width * t, lam, law, spec)))
        if abs(vals[1] - vals[0]) > spec.tol(vals[1]):
            raise QuadratureError(f"gaussian resolvent at x={x}: Hermite rules disagree")
        return vals[1]
    # Fourier side: (w/√π)∫cos(xθ) e^{-w²θ²/4}/(λ+θ^α) dθ on a finite range
    theta_max = 2.0 * np.sqrt(40.0) / width
    width_lin = min(0.5, np.pi / (2.0 * max(ax, 1e-300)))
    edges = head_edges(theta_max, spec.ladder, first=min(0.5, theta_max))
    if width_lin < 0.5:
        lin = np.arange(0.5, theta_max, width_lin)
        edges = np.unique(np.concatenate((edges[edges <= 0.5], lin, [theta_max])))
    vals = []
    for order in (spec.order, spec.order + 8):
        th, wt = panel_rule(edges, order)
        g = np.cos(x * th) * np.exp(-(width * th) ** 2 / 4.0) / (lam + th ** a)
        vals.append(width / np.sqrt(np.pi) * float(g @ wt))
    if abs(vals[1] - vals[0]) > spec.tol(vals[1]):
        raise QuadratureError(f"gaussian resolvent at x={x}: Gauss orders disagree")
    return vals[1]


def _step_resolvent(z: float, lam: float, law: StableLaw, spec: QuadratureSpec) -> float:
    """∫_0^z u_λ(w) dw (odd in z, tends to ±1/(2λ))."""
    if z == 0.0:
        return 0.0
    if np.isinf(z):
        return np.sign(z) / (2.0 * lam)
    a = law.alpha
    az = abs(z)
    kappa = lam * az ** a
    if kappa < 1.0:
        val = az ** a / np.pi * _sine_step(kappa, a, spec)
    else:
        val = 1.0 / (2.0 * lam) - az ** a / np.pi * _sine_step_complement(kappa, a, spec)
    return np.sign(z) * val


def free_resolvent(f: BoundedTestFunction, x, lam: float, law: StableLaw, q: QuadratureSpec = DEFAULT_SPEC):
    """R_λ^{U}f(x) = ∫u_λ(y - x) f(y) dy for the encoded test-function families."""
    _check_lam(lam)
    if f.kind == KIND_CONSTANT:
        return _vectorize(lambda v: f.params[0] / lam, x)
    if f.kind == KIND_GAUSSIAN:
        w = f.params[0]
        return _vectorize(lambda v: _gaussian_resolvent(v, w, lam, law, q), x)
    if f.kind == KIND_INDICATOR:
        a_, b_ = f.params
        return _vectorize(lambda v: _step_resolvent(b_ - v, lam, law, q) - _step_resolvent(a_ - v, lam, law, q), x)

    def generic(v):
        g = lambda y: u_lambda(y - v, lam, law, q) * float(f(y))
        left = integrate.quad(g, -np.inf, v, epsabs=1e-11, epsrel=1e-9, limit=400)[0]
        right = integrate.quad(g, v, np.inf, epsabs=1e-11, epsrel=1e-9, limit=400)[0]
        return left + right

    return _vectorize(generic, x)


def v_lambda(f: BoundedTestFunction, x, lam: float, law: StableLaw, q: QuadratureSpec = DEFAULT_SPEC):
    """Deterministic killed resolvent V_λf(x) = R^U f(x) - E^x e^{-λσ} R^U f(0).

    Written as (R^U f(x) - R^U f(0)) + E^x(1-e^{-λσ}) R^U f(0) to keep relative accuracy near 0.
    """
    if f.kind == KIND_CONSTANT:
        return f.params[0] * v_lambda_one(x, lam, law, q)
    r0 = float(free_resolvent(f, 0.0, lam, law, q))
    rx = free_resolvent(f, x, lam, law, q)
    return (rx - r0) + hitting_deficit(x, lam, law, q) * r0


# ---------------------------------------------------------------------------
# Monte Carlo killed resolvent

def estimate_V_lambda(f: BoundedTestFunction, x: float, lam: float, law: StableLaw, grid: Grid, rule: HittingRule,
                      n_paths: int, rng: Stream, offset: int = 0) -> ResolventEstimate:
    """MC mean of ∫_0^σ̂ e^{-λt} f(X_t) dt over killed paths with per-path substreams.

    ``grid.dt`` is the largest step; steps shrink near 0 (see :class:`HittingRule`).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    _check_lam(lam)
    if rule.t_cap < 40.0 / lam - 1e-12:
        raise ValueError("t_cap must be at least 40/lambda")
    s = run_killed(law, x, grid.dt, rule, rng, n_paths, lam=lam, f_code=f.code, offset=offset)
    v = s.integral
    se = float(v.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    meta = dict(method="mc-killed", censored=int(s.censored.sum()),
                truncation_bound=float(f.bound * np.exp(-lam * rule.t_cap) / lam), mean_steps=float(s.steps.mean()))
    return ResolventEstimate(float(v.mean()), se, n_paths, lam, meta)


# ---------------------------------------------------------------------------
# η-pairings

@dataclass(frozen=True)
class OuterSpec:
    """Logarithmic outer grid for η-pairings over |x| ∈ [lo, hi]."""

    lo: float = 1e-6
    hi: float = 1e3
    width: float = 0.5
    order: int = 12


@dataclass(frozen=True)
class InnerMC:
    """Inner Monte Carlo budget for ⟨η, V_λ f⟩ when f is not constant."""

    n_paths: int
    max_dt: float = 1e-2
    h_rel: float = 1e-5
    zoom: float = 16.0
    seed: int = 0


@lru_cache(maxsize=64)
def _pairing_one(alpha: float, beta: float, lam: float, lo: float, hi: float, width: float, order: int) -> float:
    """∫_0^∞ V_λ1(x) x^{-1-β} dx (one side, unit weight)."""
    law = StableLaw(alpha)
    x, w = log_panel_rule(lo, hi, width, order)
    v = v_lambda_one(x, lam, law)
    body = float((w * x ** (-1.0 - beta)) @ v)
    low = A_const(lam, law) / lam * lo ** (alpha - 1.0 - beta) / (alpha - 1.0 - beta)
    high = hi ** (-beta) / (beta * lam)
    return body + low + high


_SIDED_CACHE: dict = {}


def _sided_pairings(f: BoundedTestFunction, lam: float, law: StableLaw, beta: float, outer: OuterSpec,
                    q: QuadratureSpec) -> tuple[float, float]:
    """Quadrature of ∫_lo^hi V_λf(±x) x^{-1-β} dx for both signs (cached for encoded functions)."""
    key = None
    if f.kind >= 0:
        key = (f.kind, f.params, lam, law.alpha, beta, outer, q)
        if key in _SIDED_CACHE:
            return _SIDED_CACHE[key]
    x, w = log_panel_rule(outer.lo, outer.hi, outer.width, outer.order)
    wx = w * x ** (-1.0 - beta)
    plus = float(wx @ v_lambda(f, x, lam, law, q))
    even = f.kind == KIND_GAUSSIAN
    minus = plus if even else float(wx @ v_lambda(f, -x, lam, law, q))
    if key is not None:
        _SIDED_CACHE[key] = (plus, minus)
    return plus, minus


def eta_pairing(f: BoundedTestFunction, lam: float, law: StableLaw, eta: EtaMeasure, outer: OuterSpec = OuterSpec(),
                inner: Optional[InnerMC] = None, q: QuadratureSpec = DEFAULT_SPEC) -> ResolventEstimate:
    """⟨η, V_λ f⟩ by logarithmic outer quadrature with asymptotic completions.

    Below ``outer.lo`` the integrand follows V_λf ≈ (λR^U f(0)) V_λ1 ≈ λR^U f(0) A|x|^{α-1}/λ;
    above ``outer.hi`` V_λf ≈ f(±∞)/λ.  The inner values are deterministic
    quadrature unless ``inner`` is given, in which case each outer node gets
    an independent Monte Carlo estimate and the stderr is propagated.
    """
    eta.check_law(law)
    _check_lam(lam)
    a, b = law.alpha, eta.beta
    scale = eta.scale(law)
    if f.kind == KIND_CONSTANT:
        one = _pairing_one(a, b, float(lam), outer.lo, outer.hi, outer.width, outer.order)
        val = scale * f.params[0] * (eta.c_minus + eta.c_plus) * one
        return ResolventEstimate(val, 0.0, 0, lam, dict(method="quadrature"))
    rho = lam * float(free_resolvent(f, 0.0, lam, law, q))
    low = rho * A_const(lam, law) / lam * outer.lo ** (a - 1.0 - b) / (a - 1.0 - b) * (eta.c_minus + eta.c_plus)
    high = (eta.c_plus * f.far[1] + eta.c_minus * f.far[0]) / lam * outer.hi ** (-b) / b
    if inner is None:
        plus, minus = _sided_pairings(f, float(lam), law, b, outer, q)
        body = eta.c_plus * plus + eta.c_minus * minus
        return ResolventEstimate(scale * (body + low + high), 0.0, 0, lam, dict(method="quadrature"))
    # stratified Monte Carlo inner values
    x, w = log_panel_rule(outer.lo, outer.hi, outer.width, outer.order)
    wx = w * x ** (-1.0 - b)
    rng = Stream(inner.seed)
    body, var, total = 0.0, 0.0, 0
    for side, c in ((1.0, eta.c_plus), (-1.0, eta.c_minus)):
        if c == 0:
            continue
        for i, (xi, wi) in enumerate(zip(x, wx)):
            rule = HittingRule(min(1e-8, inner.h_rel * xi), 40.0 / lam, inner.zoom)
            s = run_killed(law, side * xi, inner.max_dt, rule, rng.derive(int(side > 0), i), inner.n_paths,
                           lam=lam, f_code=f.code)
            body += c * wi * s.integral.mean()
            var += (c * wi) ** 2 * s.integral.var(ddof=1) / inner.n_paths
            total += inner.n_paths
    return ResolventEstimate(scale * (body + low + high), scale * float(np.sqrt(var)), total, lam,
                             dict(method="stratified-mc", nodes=int(len(x))))


def limit_resolvent_at_zero(f: BoundedTestFunction, lam: float, law: StableLaw, eta: EtaMeasure,
                            outer: OuterSpec = OuterSpec(), inner: Optional[InnerMC] = None,
                            q: QuadratureSpec = DEFAULT_SPEC) -> ResolventEstimate:
    """⟨η,V_λf⟩/⟨η,V_λ1⟩; the denominator is always deterministic."""
    num = eta_pairing(f, lam, law, eta, outer, inner, q)
    den = eta_pairing(constant(1.0), lam, law, eta, outer, None, q)
    if f.kind == KIND_CONSTANT:
        return ResolventEstimate(f.params[0], 0.0, 0, lam, dict(method="identity"))
    return ResolventEstimate(num.value / den.value, num.stderr / den.value, num.n_paths, lam, dict(num.meta))


# ---------------------------------------------------------------------------
# regular variation (ratio E g(ζ/n) / P(|ζ|>n))

def reg_variation_ratio(g: BoundedTestFunction, tail: TailLaw, n: float, n_samples: int, rng: Stream) -> ResolventEstimate:
    from .stable_core import sample_zeta

    z = sample_zeta(tail, rng, size=n_samples)
    vals = g(z / n) / float(tail.survival(n))
    return ResolventEstimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples)), n_samples, 0.0,
                             dict(method="mc", n=n))


def reg_variation_exact(power: float, tail: TailLaw, n: float) -> float:
    """Exact E min(|ζ/n|^p,1)/P(|ζ|>n) for the Pareto law with x_min <= n."""
    b, xm = tail.beta, tail.x_min
    if n < xm:
        raise ValueError("needs n >= x_min")
    # ∫_{xm}^{n} (x/n)^p β xm^β x^{-β-1} dx + P(|ζ|>n)
    body = b * xm ** b * n ** (-power) * (n ** (power - b) - xm ** (power - b)) / (power - b)
    tail_n = (n / xm) ** (-b)
    return (body + tail_n) / tail_n


def reg_variation_limit(power: float, beta: float) -> float:
    """Limit of the ratio for g = min(|x|^p, 1): β(1/(p-β) + 1/β)."""
    return beta * (1.0 / (power - beta) + 1.0 / beta)


# ---------------------------------------------------------------------------
# tabulated killed resolvents (fast evaluation at many random points)

class VTable:
    """Cubic interpolant of V_λf(±|x|) in log|x| over [lo, hi].

    Below ``lo`` the value follows λR^U f(0)·V_λ1(x) with the A-law; above
    ``hi`` it is frozen at the boundary value.  Intended for averaging V_λf
    over many jump sizes, where an interpolation error near 1e-8 is far below
    Monte Carlo noise.
    """

    def __init__(self, f: BoundedTestFunction, lam: float, law: StableLaw, lo: float = 1e-6, hi: float = 1e3,
                 per_decade: int = 40, q: QuadratureSpec = DEFAULT_SPEC):
        from scipy.interpolate import CubicSpline

        self.f, self.lam, self.law, self.lo, self.hi = f, float(lam), law, lo, hi
        n = int(round(np.log10(hi / lo) * per_decade)) + 1
        self.x = np.logspace(np.log10(lo), np.log10(hi), n)
        s = np.log(self.x)
        self.rho = self.lam * float(free_resolvent(f, 0.0, lam, law, q))
        plus = np.asarray(v_lambda(f, self.x, lam, law, q))
        minus = plus if f.kind in (KIND_CONSTANT, KIND_GAUSSIAN) else np.asarray(v_lambda(f, -self.x, lam, law, q))
        self._plus = CubicSpline(s, plus)
        self._minus = CubicSpline(s, minus)
        self._small = A_const(lam, law) / self.lam * self.rho
        self._edge = (float(plus[-1]), float(minus[-1]))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        out = np.empty_like(ax)
        mid = (ax >= self.lo) & (ax <= self.hi)
        s = np.log(np.where(mid, ax, 1.0))
        out = np.where(x >= 0, self._plus(s), self._minus(s))
        out = np.where(ax < self.lo, self._small * ax ** (self.law.alpha - 1.0), out)
        out = np.where(ax > self.hi, np.where(x > 0, self._edge[0], self._edge[1]), out)
        return out


def deficit_mass_above(eps: float, law: StableLaw, eta: EtaMeasure, lam: float = 1.0, hi: float = 1e3,
                       width: float = 0.25, order: int = 12) -> float:
    """∫_{|x|>eps} E^x(1-e^{-λσ}) η(dx)."""
    eta.check_law(law)
    b = eta.beta
    x, w = log_panel_rule(eps, hi, width, order)
    body = float((w * x ** (-1.0 - b)) @ hitting_deficit(x, lam, law))
    high = hi ** (-b) / b
    return eta.scale(law) * (eta.c_minus + eta.c_plus) * (body + high)
