"""Itô synthesis of the skew stable process from a truncated Poisson measure of excursions.

Atoms (s_k, x_k) live on the local-time axis.  Jump atoms have marks from the
Lévy-normalized power measure θ restricted to |x| > ε; the continuous part of
the entrance law, which has no exact sampler, is approximated by excursions
started at ±δ whose intensity q_ε restores the total (1-e^{-σ})-mass to one.
Excursions are killed stable paths glued in local-time order, so that

    X(t) = x_k + U_k(t - τ(s_k-)),   τ(s) = Σ_{s_k<=s} σ_k,   φ = τ^{-1},

and the subordinator S_θ(s) = Σ_{jump atoms, s_k<=s} x_k is kept as a
cumulative record, making S_θ(φ(t)) a lookup.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numba as nb
import numpy as np
from scipy import stats as sps

from . import _kernels as K
from .potential import (EtaMeasure, ResolventEstimate, deficit_mass_above, hitting_deficit, limit_resolvent_at_zero,
                        v_lambda)
from .rng import TAG_ATOM, TAG_AUX, TAG_INCREMENT, TAG_SIGN, Stream, stream_id_words, stream_words, uniform_pair
from .stable_core import Grid, HittingRule, StableLaw, run_killed
from .stats import Moments, chunks, merge
from .testfunctions import KIND_CONSTANT, BoundedTestFunction, constant


@dataclass(frozen=True)
class ThetaMeasure:
    """θ = C·η* (so ∫E^x(1-e^{-σ})θ(dx) = 1) truncated to |x| > eps."""

    eta: EtaMeasure
    eps: float
    law: StableLaw

    def __post_init__(self):
        if self.eta.normalization != "levy":
            raise ValueError("ThetaMeasure needs an EtaMeasure with normalization='levy'")
        self.eta.check_law(self.law)
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def mass(self) -> float:
        """M_ε = θ(|x| > ε)."""
        return self.eta.mass_above(self.eps, self.law)

    @property
    def beta(self) -> float:
        return self.eta.beta

    def truncated(self, eps: float) -> "ThetaMeasure":
        return ThetaMeasure(self.eta, eps, self.law)

    def deficit_mass(self) -> float:
        """∫_{|x|>ε} E^x(1-e^{-σ}) θ(dx)."""
        return deficit_mass_above(self.eps, self.law, self.eta)


@dataclass(frozen=True)
class MixtureSpec:
    p: float
    delta: float
    q_eps: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if not self.delta > 0 or not self.q_eps >= 0:
            raise ValueError("delta must be positive and q_eps nonnegative")

    @classmethod
    def calibrated(cls, theta: ThetaMeasure, p: float, delta: Optional[float] = None) -> "MixtureSpec":
        """q_ε = (1 - p∫_{|x|>ε}E^x(1-e^{-σ})θ(dx)) / E^δ(1-e^{-σ}), δ defaulting to ε/10."""
        delta = theta.eps / 10.0 if delta is None else delta
        missing = max(1.0 - p * theta.deficit_mass(), 0.0)
        return cls(float(p), float(delta), float(missing / float(hitting_deficit(delta, 1.0, theta.law))))


@dataclass(frozen=True)
class ExcursionAtom:
    s: float
    x0: float
    times: np.ndarray
    values: np.ndarray
    sigma: float
    censored: bool = False


@dataclass(frozen=True)
class SkewPath:
    times: np.ndarray
    values: np.ndarray
    phi: np.ndarray
    sub_values: np.ndarray
    atom_s: np.ndarray
    atom_x: np.ndarray
    atom_jump: np.ndarray
    atom_t0: np.ndarray      # real time at which each atom's excursion starts
    atom_sigma: np.ndarray
    p: float
    delta: float
    eps: float
    t_eff: float
    censored: bool
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def tau(self) -> tuple[np.ndarray, np.ndarray]:
        """Atom coordinates s_k and τ(s_k) = cumulative excursion length."""
        return self.atom_s, np.cumsum(self.atom_sigma)

    @property
    def residual(self) -> np.ndarray:
        """U(t) = X(t) - S_θ(φ(t)) on the grid."""
        return self.values - self.sub_values

    def export(self, csv_path, sidecar: Optional[dict] = None):
        """Columnar CSV (t, X, phi, S_at_phi) plus a JSON sidecar next to it."""
        csv_path = Path(csv_path)
        lines = ["t,X,phi,S_at_phi"]
        for row in zip(self.times, self.values, self.phi, self.sub_values):
            lines.append(",".join(repr(float(v)) for v in row))
        csv_path.write_text("\n".join(lines) + "\n", newline="\n")
        info = dict(p=self.p, delta=self.delta, eps=self.eps, t_eff=self.t_eff, censored=self.censored,
                    n_atoms=int(self.atom_s.size), n_jump_atoms=int(self.atom_jump.sum()), **self.meta)
        if sidecar:
            info.update(sidecar)
        csv_path.with_suffix(".json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
        return csv_path


# ---------------------------------------------------------------------------

@nb.njit(cache=True)
def _killed_record(alpha, x0, dtmax, h, zoom, tcap, k0, k1, s0, s1, out_dt, out_t, out_v):
    """Killed path from x0 sampled at multiples of out_dt plus its end point."""
    t = 0.0
    x = x0
    n = 0
    g = 0
    j = 0
    cap = out_t.shape[0]
    ia = 1.0 / alpha
    while True:
        while g * out_dt <= t and n < cap - 1:
            out_t[n] = g * out_dt
            out_v[n] = x
            n += 1
            g += 1
        d = K.adaptive_step(alpha, x, dtmax, zoom)
        tn = t + d
        if tn >= g * out_dt:
            tn = g * out_dt
        d = tn - t
        u1, u2 = uniform_pair(k0, k1, s0, s1, j)
        j += 1
        x = x + d ** ia * K.cms(alpha, u1, u2)
        t = tn
        if abs(x) <= h or t >= tcap or n >= cap - 1:
            out_t[n] = t
            out_v[n] = x
            return n + 1, t, not abs(x) <= h


def sample_excursion_from(x0: float, law: StableLaw, grid: Grid, rule: HittingRule, rng: Stream, index: int = 0,
                          s: float = np.nan) -> ExcursionAtom:
    """Killed stable excursion from x0 (recorded on grid.dt multiples, adaptive steps in between)."""
    if abs(x0) <= rule.h:
        raise ValueError(f"|x0|={abs(x0)} <= h={rule.h}: degenerate atom (eps must exceed h)")
    cap = int(min(rule.t_cap / grid.dt, 10_000_000)) + 2
    out_t, out_v = np.empty(cap), np.empty(cap)
    s0, s1 = stream_words(TAG_INCREMENT, index)
    k0, k1 = rng.key
    n, sigma, cens = _killed_record(float(law.alpha), float(x0), float(grid.dt), float(rule.h), float(rule.zoom),
                                    float(rule.t_cap), k0, k1, s0, s1, float(grid.dt), out_t, out_v)
    return ExcursionAtom(s, float(x0), out_t[:n].copy(), out_v[:n].copy(), float(sigma), bool(cens))


def sample_atom_marks(theta: ThetaMeasure, s_max: float, rng: Stream, index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Poisson points on [0, s_max] with intensity ds × θ^{(ε)}(dx)."""
    if s_max <= 0:
        return np.empty(0), np.empty(0)
    M = theta.mass
    count = int(sps.poisson.ppf(rng.pairs(TAG_AUX, [index])[0, 0], M * s_max))
    u = _pairs_along(rng, TAG_ATOM, index, count)
    v = _pairs_along(rng, TAG_SIGN, index, count)
    s = np.sort(s_max * u[:, 0])
    mag = theta.eps * v[:, 0] ** (-1.0 / theta.beta)
    x = np.where(v[:, 1] < theta.eta.c_plus, mag, -mag)
    return s, x


@nb.njit(cache=True)
def _fill_along(k0, k1, s0, s1, count, out):
    for j in range(count):
        out[j, 0], out[j, 1] = uniform_pair(k0, k1, s0, s1, j)


def _pairs_along(rng: Stream, tag: int, index: int, count: int) -> np.ndarray:
    """The first ``count`` Philox pairs of one substream."""
    out = np.empty((count, 2))
    s0, s1 = stream_words(tag, index)
    k0, k1 = rng.key
    _fill_along(k0, k1, s0, s1, count, out)
    return out


def synthesize(theta: ThetaMeasure, mix: MixtureSpec, T: float, law: StableLaw, grid: Grid, rule: HittingRule,
               rng: Stream, index: int = 0, lam: float = 1.0, f: Optional[BoundedTestFunction] = None) -> SkewPath:
    """Glue excursions in local-time order until τ exceeds T (grid output every grid.dt)."""
    _check_eps(theta, mix, rule)
    if not T > 0:
        raise ValueError("T must be positive")
    f = constant(0.0) if f is None else f
    n_out = int(round(T / grid.dt))
    rate_j, rate_c = mix.p * theta.mass, mix.q_eps
    if rate_j + rate_c <= 0:
        raise ValueError("no atoms: p*M_eps + q_eps must be positive")
    cap = 256
    k0, k1 = rng.key
    fk, fp0, fp1 = f.code
    while True:
        ox, op, osb = np.empty(n_out + 1), np.empty(n_out + 1), np.empty(n_out + 1)
        a_s, a_x, a_t, a_sig = np.empty(cap), np.empty(cap), np.empty(cap), np.empty(cap)
        a_j = np.empty(cap, dtype=np.bool_)
        acc, na, nj, t_eff, cens, steps = K.synth_one(
            float(law.alpha), rate_j, rate_c, float(theta.eps), float(theta.beta), float(theta.eta.c_plus),
            float(mix.delta), float(lam), fk, fp0, fp1, float(T), float(grid.dt), n_out, float(grid.dt),
            float(rule.h), float(rule.zoom), float(rule.t_cap), k0, k1, np.int64(index), ox, op, osb,
            a_s, a_x, a_j, a_t, a_sig, cap)
        if na <= cap:
            break
        cap = 2 * na
    times = np.arange(n_out + 1) * grid.dt
    return SkewPath(times, ox, op, osb, a_s[:na].copy(), a_x[:na].copy(), a_j[:na].copy(), a_t[:na].copy(),
                    a_sig[:na].copy(), mix.p, mix.delta, theta.eps, float(t_eff), bool(cens),
                    dict(discounted_integral=float(acc), steps=int(steps), q_eps=mix.q_eps, M_eps=theta.mass))


def _check_eps(theta: ThetaMeasure, mix: MixtureSpec, rule: HittingRule):
    if not theta.eps > rule.h:
        raise ValueError(f"eps={theta.eps} must exceed the absorption half-width h={rule.h}")
    if not mix.delta > rule.h:
        raise ValueError(f"delta={mix.delta} must exceed the absorption half-width h={rule.h}")


def local_time_from_tau(s_atoms: np.ndarray, sigmas: np.ndarray, t) -> np.ndarray:
    """φ(t) = inf{s : τ(s) > t} for τ(s) = Σ_{s_k<=s} σ_k; beyond the last atom φ stays at its coordinate."""
    tau = np.cumsum(sigmas)
    k = np.searchsorted(tau, np.asarray(t, dtype=float), side="right")
    return s_atoms[np.minimum(k, len(s_atoms) - 1)]


def local_time(path: SkewPath) -> np.ndarray:
    """φ on the output grid (recorded during synthesis)."""
    return path.phi


def zero_sojourn_fraction(path: SkewPath, h_probe: float) -> float:
    valid = (path.times > 0) & (path.times <= path.t_eff)
    return float(np.mean(np.abs(path.values[valid]) <= h_probe))


# ---------------------------------------------------------------------------
# batch studies

@dataclass(frozen=True)
class SynthBatch:
    x: np.ndarray          # (reps, probes) X at probe times
    phi: np.ndarray
    sub: np.ndarray
    integral: np.ndarray
    atoms: np.ndarray
    jump_atoms: np.ndarray
    t_eff: np.ndarray
    sojourn: np.ndarray    # (reps, len(h_probes)) grid counts with |X| <= h
    n_grid: int
    probe_times: np.ndarray
    h_probes: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.x - self.sub

    @staticmethod
    def concat(parts: Sequence["SynthBatch"]) -> "SynthBatch":
        f = lambda name: np.concatenate([getattr(p, name) for p in parts])
        p0 = parts[0]
        return SynthBatch(f("x"), f("phi"), f("sub"), f("integral"), f("atoms"), f("jump_atoms"), f("t_eff"),
                          f("sojourn"), p0.n_grid, p0.probe_times, p0.h_probes)


def synth_batch(theta: ThetaMeasure, mix: MixtureSpec, T: float, law: StableLaw, grid: Grid, rule: HittingRule,
                rng: Stream, offset: int, count: int, probe_times=(), h_probes=(), lam: float = 1.0,
                f: Optional[BoundedTestFunction] = None) -> SynthBatch:
    """Summaries of syntheses offset..offset+count-1 (each its own substream family)."""
    _check_eps(theta, mix, rule)
    f = constant(0.0) if f is None else f
    n_out = int(round(T / grid.dt))
    probe_times = np.asarray(probe_times, dtype=float)
    probe_idx = np.round(probe_times / grid.dt).astype(np.int64)
    if np.any(probe_idx > n_out):
        raise ValueError("probe times beyond the horizon")
    h_probes = np.asarray(h_probes, dtype=float)
    P, H = len(probe_idx), len(h_probes)
    rx, rp, rs = np.empty((count, P)), np.empty((count, P)), np.empty((count, P))
    ri, ra, rj, rt = np.empty(count), np.empty(count, dtype=np.int64), np.empty(count, dtype=np.int64), np.empty(count)
    rso = np.empty((count, H), dtype=np.int64)
    k0, k1 = rng.key
    fk, fp0, fp1 = f.code
    K.synth_batch(float(law.alpha), mix.p * theta.mass, mix.q_eps, float(theta.eps), float(theta.beta),
                  float(theta.eta.c_plus), float(mix.delta), float(lam), fk, fp0, fp1, float(T), float(grid.dt), n_out,
                  float(grid.dt), float(rule.h), float(rule.zoom), float(rule.t_cap), k0, k1,
                  np.arange(offset, offset + count, dtype=np.int64), probe_idx, h_probes, rx, rp, rs, ri, ra, rj, rt, rso)
    return SynthBatch(rx, rp, rs, ri, ra, rj, rt, rso, n_out + 1, probe_times, h_probes)


def run_synth(theta, mix, T, law, grid, rule, rng, n_reps, **kw) -> SynthBatch:
    return SynthBatch.concat([synth_batch(theta, mix, T, law, grid, rule, rng, o, c, **kw) for o, c in chunks(n_reps)])


def cf_deviation(samples: np.ndarray, t: float, alpha: float, zs=(0.5, 1.0, 2.0)) -> tuple[float, float]:
    """(max |empirical CF - exp(-t|z|^α)| over zs, tolerance 4/√N)."""
    samples = samples[np.isfinite(samples)]
    dev = max(abs(np.mean(np.cos(z * samples)) - np.exp(-t * abs(z) ** alpha)) for z in zs)
    return float(dev), 4.0 / np.sqrt(samples.size)


@dataclass(frozen=True)
class ExcursionResolvent:
    formula: ResolventEstimate        # ⟨θ,V_λf⟩/⟨θ,V_λ1⟩ with the full θ
    truncated: float                  # the same ratio for the ε-synthesized process (θ^ε plus ±δ atoms)
    trajectory: ResolventEstimate     # λ × discounted integral along synthesized paths from 0
    eps: float
    delta: float


def truncated_resolvent(f: BoundedTestFunction, lam: float, theta: ThetaMeasure, mix: MixtureSpec,
                        hi: float = 1e3, width: float = 0.25, order: int = 12) -> float:
    """λR_λf(0) of the ε-synthesized process: [p⟨θ^ε,V_λf⟩ + q_ε V̄_λf(δ)]/[p⟨θ^ε,V_λ1⟩ + q_ε V̄_λ1(δ)]
    where V̄ averages ±δ."""
    from .quadrature import log_panel_rule

    law, eta = theta.law, theta.eta
    x, w = log_panel_rule(theta.eps, hi, width, order)
    wx = w * x ** (-1.0 - eta.beta) * eta.scale(law)

    def pair(g):
        body = eta.c_plus * float(wx @ v_lambda(g, x, lam, law)) + eta.c_minus * float(wx @ v_lambda(g, -x, lam, law))
        tail = (eta.c_plus * g.far[1] + eta.c_minus * g.far[0]) / lam * hi ** (-eta.beta) / eta.beta * eta.scale(law)
        vd = 0.5 * (float(v_lambda(g, mix.delta, lam, law)) + float(v_lambda(g, -mix.delta, lam, law)))
        return mix.p * (body + tail) + mix.q_eps * vd

    if f.kind == KIND_CONSTANT:
        return f.params[0]
    return lam * pair(f) / (lam * pair(constant(1.0)))


def resolvent_at_zero_from_excursions(f: BoundedTestFunction, lam: float, theta: ThetaMeasure, law: StableLaw,
                                      n_paths: int, rng: Stream, grid: Grid, rule: HittingRule, p: float = 1.0,
                                      delta: Optional[float] = None, horizon: Optional[float] = None,
                                      with_truncated: bool = True) -> ExcursionResolvent:
    """Formula ⟨θ,V_λf⟩/⟨θ,V_λ1⟩ next to the trajectory estimate from synthesized paths started at 0."""
    formula = limit_resolvent_at_zero(f, lam, law, theta.eta)
    mix = MixtureSpec.calibrated(theta, p, delta)
    horizon = 40.0 / lam if horizon is None else horizon
    grid_h = Grid(horizon, max(1, int(round(horizon / grid.dt))))
    parts = [Moments.of(synth_batch(theta, mix, horizon, law, grid_h, rule, rng, o, c, lam=lam, f=f).integral)
             for o, c in chunks(n_paths)]
    mom = merge(parts)
    traj = ResolventEstimate(lam * mom.mean(), lam * mom.stderr(), mom.n, lam, dict(method="synthesis"))
    trunc = truncated_resolvent(f, lam, theta, mix) if with_truncated else float("nan")
    return ExcursionResolvent(formula, trunc, traj, theta.eps, mix.delta)


def extrapolate_sojourn(fractions: np.ndarray, h_probes, exponent: float) -> tuple[float, float]:
    """Per-replicate least-squares line of fraction vs h^exponent; mean intercept and its stderr."""
    xs = np.asarray(h_probes, dtype=float) ** exponent
    X = np.vstack([np.ones_like(xs), xs]).T
    coef = np.linalg.lstsq(X, np.asarray(fractions, dtype=float).T, rcond=None)[0]
    b0 = coef[0]
    return float(b0.mean()), float(b0.std(ddof=1) / np.sqrt(b0.size))


# ---------------------------------------------------------------------------
# subordinator checks

@nb.njit(cache=True)
def _compound_sums(eps, beta, c_plus, counts, thin_p, k0, k1, tag_m, tag_t, indices, out):
    for i in range(indices.shape[0]):
        sm0, sm1 = stream_id_words(tag_m, indices[i])
        st0, st1 = stream_id_words(tag_t, indices[i])
        acc = 0.0
        for k in range(counts[i]):
            u1, u2 = uniform_pair(k0, k1, sm0, sm1, k)
            if thin_p < 1.0:
                w1, w2 = uniform_pair(k0, k1, st0, st1, k)
                if w1 >= thin_p:
                    continue
            mag = eps * u1 ** (-1.0 / beta)
            acc += mag if u2 < c_plus else -mag
        out[i] = acc


def subordinator_samples(theta: ThetaMeasure, s_max: float, n: int, rng: Stream, thin_p: float = 1.0,
                         offset: int = 0) -> np.ndarray:
    """S^{(ε)}(s_max) over n replicates, keeping each atom with probability thin_p."""
    idx = np.arange(offset, offset + n, dtype=np.int64)
    counts = sps.poisson.ppf(rng.pairs(TAG_AUX, idx)[:, 0], theta.mass * s_max).astype(np.int64)
    out = np.empty(n)
    k0, k1 = rng.key
    _compound_sums(float(theta.eps), float(theta.beta), float(theta.eta.c_plus), counts, float(thin_p), k0, k1,
                   TAG_SIGN, TAG_ATOM, idx, out)
    return out


def thinning_scaling_ks(theta: ThetaMeasure, p: float, s_max: float, n: int, rng: Stream):
    """Two-sample KS of S(s_max) at p-thinned atoms against p^{1/β}·S(s_max) (independent replicates).

    Scaling the ε-truncated atoms by c = p^{1/β} yields p·θ restricted to
    |x| > cε, so the scaled sample is drawn at truncation ε/c; with matched
    truncations the two laws coincide exactly rather than only as ε -> 0.
    """
    c = p ** (1.0 / theta.beta)
    thinned = subordinator_samples(theta, s_max, n, rng.derive(1), thin_p=p)
    scaled = c * subordinator_samples(theta.truncated(theta.eps / c), s_max, n, rng.derive(2))
    return sps.ks_2samp(thinned, scaled)


def nested_tau_gaps(theta: ThetaMeasure, eps_levels: Sequence[float], s_max: float, law: StableLaw,
                    rule: HittingRule, max_dt: float, rng: Stream) -> list[float]:
    """sup_s |τ^{(ε)}(s) - τ^{(ε')}(s)| for each ε in eps_levels against the finest level ε'.

    All levels share one atom sample at the finest ε'; each excursion length is
    drawn as |x|^α σ^{(1)} from a killed path started at sign(x) (self-similarity).
    """
    finest = min(eps_levels)
    s, x = sample_atom_marks(theta.truncated(finest), s_max, rng)
    if x.size == 0:
        return [0.0 for _ in eps_levels]
    unit = run_killed(law, np.sign(x), max_dt, rule, rng, x.size)
    sigma = np.abs(x) ** law.alpha * unit.sigma
    # τ differences are monotone in s, so the sup over s <= s_max is the total over dropped atoms
    return [float(sigma[np.abs(x) <= e].sum()) for e in eps_levels]
