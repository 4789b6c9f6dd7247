"""Stable processes perturbed at zero (X_ζ) and holding-and-jumping processes (X_{ζ,m}).

X_ζ runs as U_α until it touches 0 and then restarts from ζ_k/n; X_{ζ,m}
additionally waits an Exp(m) time at 0 before each jump.  The resolvent of
X_{ζ,m} at 0 has the renewal form

    λR_λ f(0) = (f(0)/m + E V_λf(ζ/n)) / (1/m + E V_λ1(ζ/n)),

which is the main instrument for the convergence experiments; trajectory
Monte Carlo serves as a validator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels as K
from .potential import (EtaMeasure, ResolventEstimate, VTable, free_resolvent, limit_resolvent_at_zero)
from .rng import TAG_INCREMENT, Stream
from .stable_core import (FiniteMeanLaw, Grid, HittingRule, StableLaw, TailLaw, run_killed, sample_zeta,
                          sample_zeta_finite_mean)
from .stats import Moments, chunks, merge
from .testfunctions import KIND_CONSTANT, BoundedTestFunction

JumpLaw = Union[TailLaw, FiniteMeanLaw]


@dataclass(frozen=True)
class PerturbedSpec:
    law: StableLaw
    jump: JumpLaw
    n: float = 1.0
    m: Optional[float] = None
    x0: float = 1.0

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError("n must be positive (jumps are zeta/n)")
        if self.m is not None and not self.m > 0:
            raise ValueError("holding rate m must be positive when present")

    @property
    def scale(self) -> float:
        return 1.0 / self.n

    def with_(self, **kw) -> "PerturbedSpec":
        d = dict(law=self.law, jump=self.jump, n=self.n, m=self.m, x0=self.x0)
        d.update(kw)
        return PerturbedSpec(**d)


@dataclass(frozen=True)
class PerturbedPath:
    times: np.ndarray
    values: np.ndarray
    touch_times: np.ndarray
    jumps_used: np.ndarray
    held_time: float = 0.0
    censored_segments: int = 0
    meta: dict = field(default_factory=dict, compare=False)


def _simulate(spec: PerturbedSpec, grid: Grid, rule: HittingRule, rng: Stream, index: int) -> PerturbedPath:
    jk, jp0, jp1, jc = spec.jump.code
    cap = 1024
    k0, k1 = rng.key
    while True:
        vals = np.empty(grid.n_steps + 1)
        tt, jj = np.empty(cap), np.empty(cap)
        _, nt, nj, held, cens, steps = K.perturbed_one(
            float(spec.law.alpha), float(spec.x0), float(spec.n), float(spec.m or 0.0), jk, float(jp0), float(jp1),
            float(jc), 0.0, 0, 0.0, 0.0, float(grid.t_max), float(grid.dt), grid.n_steps, float(grid.dt),
            float(rule.h), float(rule.zoom), float(rule.t_cap), k0, k1, np.int64(index), vals, tt, jj, cap)
        if max(nt, nj) <= cap:
            break
        cap = 2 * max(nt, nj)
    return PerturbedPath(grid.times, vals, tt[:nt].copy(), jj[:nj].copy(), float(held), int(cens),
                         dict(steps=int(steps)))


def simulate_X_zeta(spec: PerturbedSpec, grid: Grid, rule: HittingRule, rng: Stream, index: int = 0) -> PerturbedPath:
    """X_ζ on the grid; touches are detected by the threshold rule with adaptive steps."""
    if spec.m is not None:
        raise ValueError("simulate_X_zeta takes a spec without holding rate (use simulate_X_zeta_m)")
    if spec.x0 == 0:
        raise ValueError("X_zeta needs x0 != 0")
    return _simulate(spec, grid, rule, rng, index)


def simulate_X_zeta_m(spec: PerturbedSpec, grid: Grid, rule: HittingRule, rng: Stream, index: int = 0) -> PerturbedPath:
    """X_{ζ,m}: Exp(m) hold at 0 before each jump; x0 = 0 starts with a hold."""
    if spec.m is None:
        raise ValueError("simulate_X_zeta_m needs a holding rate m")
    return _simulate(spec, grid, rule, rng, index)


# ---------------------------------------------------------------------------
# resolvent at 0

@lru_cache(maxsize=16)
def _vtable(f_code: tuple, tag: str, lam: float, alpha: float) -> VTable:
    from .testfunctions import from_tag

    return VTable(from_tag(tag), lam, StableLaw(alpha))


def _zeta_draws(spec: PerturbedSpec, rng: Stream, count: int, offset: int) -> np.ndarray:
    if isinstance(spec.jump, TailLaw):
        z = sample_zeta(spec.jump, rng, size=count, offset=offset)
    else:
        z = sample_zeta_finite_mean(rng, spec.jump, size=count, offset=offset)
    return z / spec.n


@dataclass(frozen=True)
class InnerRule:
    """Killed-path settings for inner V_λf estimates inside the renewal formula."""

    max_dt: float = 1e-2
    h: float = 1e-8
    zoom: float = 16.0


def formula_moments(f: BoundedTestFunction, lam: float, spec: PerturbedSpec, rng: Stream, offset: int, count: int,
                    inner: str = "mc", inner_rule: InnerRule = InnerRule()) -> Moments:
    """Sums of (V_λf(ζ_i/n), V_λ1(ζ_i/n)) for draws offset..offset+count-1."""
    z = _zeta_draws(spec, rng, count, offset)
    v1 = _vtable((KIND_CONSTANT, 1.0), "constant", float(lam), float(spec.law.alpha))(z)
    if f.kind == KIND_CONSTANT:
        vf = f.params[0] * v1 if f.params[0] != 1.0 else v1
    elif inner == "quadrature":
        vf = _vtable(f.code, f.tag, float(lam), float(spec.law.alpha))(z)
    elif inner == "mc":
        rule = HittingRule(inner_rule.h, 40.0 / lam, inner_rule.zoom)
        vf = run_killed(spec.law, z, inner_rule.max_dt, rule, rng, count, lam=lam, f_code=f.code, offset=offset).integral
    else:
        raise ValueError("inner must be 'mc' or 'quadrature'")
    return Moments.of(vf, v1)


def finish_formula(f: BoundedTestFunction, lam: float, spec: PerturbedSpec, mom: Moments, inner: str) -> ResolventEstimate:
    m = spec.m
    f0 = float(f(0.0))
    r, se = mom.ratio(f0 / m, 1.0 / m)
    if f.kind == KIND_CONSTANT:
        se = 0.0
    return ResolventEstimate(r, se, mom.n, lam, dict(method=f"renewal-formula/{inner}"))


def resolvent_zero_formula(f: BoundedTestFunction, lam: float, spec: PerturbedSpec, n_paths: int, rng: Stream,
                           inner: str = "mc", inner_rule: InnerRule = InnerRule()) -> ResolventEstimate:
    """λR_λ^{ζ/n,m} f(0) from the renewal identity with fresh ζ draws.

    V_λ1 is deterministic (tabulated quadrature); V_λf is one killed path per
    draw (inner='mc') or the tabulated quadrature (inner='quadrature').
    """
    if spec.m is None:
        raise ValueError("the renewal formula needs a holding rate m")
    parts = [formula_moments(f, lam, spec, rng, o, c, inner, inner_rule) for o, c in chunks(n_paths)]
    return finish_formula(f, lam, spec, merge(parts), inner)


def resolvent_zero_exact(f: BoundedTestFunction, lam: float, spec: PerturbedSpec, hi: float = 1e3,
                         width: float = 0.5, order: int = 12) -> float:
    """λR_λ^{ζ/n,m} f(0) with E V_λ(ζ/n) integrated by quadrature instead of sampled.

    For the Pareto law E V(ζ/n) = β x_min^β n^{-β} Σ± c± ∫_{x_min/n}^∞ u^{-β-1} V(±u) du,
    evaluated on a logarithmic grid with the far field V -> f(±∞)/λ; point-mass
    laws are evaluated directly.  Deterministic finite-n reference for the
    convergence experiments.
    """
    from .potential import v_lambda
    from .quadrature import log_panel_rule
    from .testfunctions import constant

    if spec.m is None:
        raise ValueError("the renewal formula needs a holding rate m")
    law, jump, n = spec.law, spec.jump, spec.n

    def mean_v(g):
        if isinstance(jump, TailLaw):
            b, lo = jump.beta, jump.x_min / n
            if lo >= hi:
                raise ValueError("x_min/n must lie below the quadrature cutoff")
            u, w = log_panel_rule(lo, hi, width, order)
            wu = w * u ** (-1.0 - b)
            body = jump.c_plus * float(wu @ v_lambda(g, u, lam, law)) + jump.c_minus * float(wu @ v_lambda(g, -u, lam, law))
            far = (jump.c_plus * g.far[1] + jump.c_minus * g.far[0]) / lam * hi ** (-b) / b
            return b * jump.x_min ** b * n ** (-b) * (body + far)
        if jump.kind in ("two-point", "constant"):
            z = jump.scale / n
            plus = float(v_lambda(g, z, lam, law))
            if jump.kind == "constant":
                return plus
            return jump.c_plus * plus + jump.c_minus * float(v_lambda(g, -z, lam, law))
        raise ValueError("exact evaluation covers the Pareto, two-point and constant laws")

    m = spec.m
    if f.kind == KIND_CONSTANT:
        return float(f.params[0])
    return (float(f(0.0)) / m + mean_v(f)) / (1.0 / m + mean_v(constant(1.0)))


def trajectory_moments(f: BoundedTestFunction, lam: float, spec: PerturbedSpec, grid: Grid, rule: HittingRule,
                       horizon: float, rng: Stream, offset: int, count: int) -> Moments:
    jk, jp0, jp1, jc = spec.jump.code
    fk, fp0, fp1 = f.code
    out_i, out_t, out_h = np.empty(count), np.empty(count, dtype=np.int64), np.empty(count)
    k0, k1 = rng.key
    K.perturbed_integrals(float(spec.law.alpha), float(spec.x0), float(spec.n), float(spec.m or 0.0), jk, float(jp0),
                          float(jp1), float(jc), float(lam), fk, float(fp0), float(fp1), float(horizon), float(grid.dt),
                          float(rule.h), float(rule.zoom), float(rule.t_cap), k0, k1,
                          np.arange(offset, offset + count, dtype=np.int64), out_i, out_t, out_h)
    return Moments.of(out_i, out_t.astype(float))


def resolvent_mc(f: BoundedTestFunction, lam: float, spec: PerturbedSpec, grid: Grid, rule: HittingRule,
                 n_paths: int, rng: Stream, horizon: Optional[float] = None) -> ResolventEstimate:
    """R_λf(x0) from discounted integrals along simulated trajectories (not multiplied by λ)."""
    horizon = 40.0 / lam if horizon is None else horizon
    mom = merge(trajectory_moments(f, lam, spec, grid, rule, horizon, rng, o, c) for o, c in chunks(n_paths))
    return ResolventEstimate(mom.mean(), mom.stderr(), mom.n, lam,
                             dict(method="trajectory-mc", horizon=horizon, mean_touches=mom.sums[2] / mom.n))


# ---------------------------------------------------------------------------
# convergence experiments

def m_rule_value(rule: str, n: float, law: StableLaw, jump: JumpLaw) -> float:
    if rule == "a":
        if not isinstance(jump, TailLaw):
            raise ValueError("regime (a) needs a Pareto TailLaw")
        return n ** (jump.beta + 0.5) * jump.x_min ** jump.beta
    if rule == "b":
        return n ** (law.alpha - 0.5)
    raise ValueError("m_rule must be 'a' or 'b'")


def check_regime(rule: str, law: StableLaw, jump: JumpLaw):
    if rule == "a":
        if not isinstance(jump, TailLaw) or not jump.beta < law.alpha - 1.0:
            raise ValueError("regime (a) precondition violated: requires a Pareto tail with beta < alpha - 1")
    elif rule == "b":
        if isinstance(jump, TailLaw) and not jump.beta > law.alpha - 1.0:
            raise ValueError("regime (b) precondition violated: requires beta > alpha - 1 or a finite-mean law")
    else:
        raise ValueError("m_rule must be 'a' or 'b'")


def convergence_target(f: BoundedTestFunction, lam: float, law: StableLaw, jump: JumpLaw, rule: str) -> float:
    if rule == "a":
        eta = EtaMeasure(jump.beta, jump.c_minus, jump.c_plus)
        return limit_resolvent_at_zero(f, lam, law, eta).value
    return lam * float(free_resolvent(f, 0.0, lam, law))


def convergence_experiment(f: BoundedTestFunction, lam: float, base: PerturbedSpec, n_list, m_rule: str,
                           n_paths: int, seed: int, inner: str = "mc",
                           mapper: Callable = map) -> list[dict]:
    """Rows (n, m_n, lambda, f_tag, estimate, stderr, target, gap, n_paths, seed), one per n.

    Each n owns the derived stream ``Stream(seed).derive(i)``; ``mapper`` may
    be a parallel map over the chunk tasks.
    """
    check_regime(m_rule, base.law, base.jump)
    target = convergence_target(f, lam, base.law, base.jump, m_rule)
    tasks = []
    specs = []
    for i, n in enumerate(n_list):
        spec = base.with_(n=float(n), m=m_rule_value(m_rule, n, base.law, base.jump), x0=0.0)
        specs.append(spec)
        cell = Stream(seed).derive(i)
        # encoded functions travel by tag so tasks stay picklable for process pools
        ref = f if f.kind < 0 else f.tag
        tasks.extend((ref, lam, spec, cell, o, c, inner) for o, c in chunks(n_paths))
    results = list(mapper(_formula_task, tasks))
    rows = []
    per = len(chunks(n_paths))
    for i, (n, spec) in enumerate(zip(n_list, specs)):
        est = finish_formula(f, lam, spec, merge(results[i * per:(i + 1) * per]), inner)
        rows.append(dict(n=n, m_n=spec.m, **{"lambda": lam}, f_tag=f.tag, estimate=est.value, stderr=est.stderr,
                         target=target, gap=est.value - target, n_paths=n_paths, seed=seed))
    return rows


def _formula_task(args):
    f, lam, spec, cell, o, c, inner = args
    if isinstance(f, str):
        from .testfunctions import from_tag

        f = from_tag(f)
    return formula_moments(f, lam, spec, cell, o, c, inner)
