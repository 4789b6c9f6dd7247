"""Declarative experiments: configuration, validation, execution and tables.

Each experiment kind maps a parameter block to ordered result tables (lists
of row dicts) and optional acceptance gates.  Monte Carlo work is cut into
fixed-size chunk tasks whose sums merge in index order, so tables do not
depend on how many workers evaluate the tasks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .excursion import (MixtureSpec, SynthBatch, ThetaMeasure, cf_deviation, extrapolate_sojourn, synth_batch)
from .potential import (A_const, B_const, C_const, EtaMeasure, eta_pairing, hitting_deficit, integral_power_kernel,
                        integral_power_kernel_quad, laplace_hitting, one_minus_cos_integral,
                        one_minus_cos_integral_quad, reg_variation_exact, reg_variation_limit, reg_variation_ratio,
                        u_lambda_zero)
from .perturbed import PerturbedSpec, convergence_experiment
from .rng import Stream
from .stable_core import FiniteMeanLaw, Grid, HittingRule, StableLaw, TailLaw, run_killed
from .stats import Moments, chunks, merge
from .testfunctions import capped_power, constant, from_tag

KINDS = ("constants", "quadrature-check", "hitting-calibration", "resolvent-converge", "excursion-synthesize",
         "reg-variation", "report")


class ConfigError(ValueError):
    """Invalid experiment configuration (exit status 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)
    master_seed: int = 0
    out: str = "runs/out"
    gates: bool = False
    raw: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {"kind", "params", "master_seed", "out", "gates"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kind = d.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"kind: must be one of {list(KINDS)}, got {kind!r}")
        seed = d.get("master_seed", 0)
        if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ConfigError("master_seed: must be an integer in [0, 2^64)")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params: must be an object")
        cfg = cls(kind, params, seed, str(d.get("out", "runs/out")), bool(d.get("gates", False)), dict(d))
        validate(cfg)
        return cfg

    def with_(self, **kw) -> "ExperimentConfig":
        raw = dict(self.raw)
        raw.update({k: v for k, v in kw.items() if k in ("master_seed", "out")})
        d = dict(kind=self.kind, params=self.params, master_seed=self.master_seed, out=self.out, gates=self.gates)
        d.update(kw)
        return ExperimentConfig(raw=raw, **d)


@dataclass
class Result:
    tables: dict                      # name -> list of row dicts (ordered columns)
    gates: list = field(default_factory=list)   # (name, passed, detail)
    cell_seeds: dict = field(default_factory=dict)
    censoring: dict = field(default_factory=dict)
    extra_files: dict = field(default_factory=dict)  # relative name -> text

    @property
    def passed(self) -> bool:
        return all(g[1] for g in self.gates)


# ---------------------------------------------------------------------------
# parameters

DEFAULTS = {
    "constants": dict(alpha=1.5, beta=0.25, c_minus=0.5, c_plus=0.5, lam=1.0),
    "quadrature-check": dict(alphas=[1.2, 1.5, 1.8], gamma_offsets=[0.0, 0.1, "max"], lams=[0.5, 1.0, 2.0],
                             xs=[0.5, 1.0, 2.0], tol=1e-8),
    "hitting-calibration": dict(alpha=1.5, lam=1.0, x0=1.0, n_paths=100_000, levels=[[1e-2, 1e-4], [5e-3, 5e-5]],
                                zoom=16.0, t_cap=40.0),
    "resolvent-converge": dict(alpha=1.5, beta=0.25, c_minus=0.5, c_plus=0.5, x_min=1.0, jump="pareto", lam=1.0,
                               f="gaussian-bump", n_list=[10, 100, 1000], m_rule="a", n_paths=100_000, inner="mc"),
    "excursion-synthesize": dict(alpha=1.5, beta=0.25, c_minus=0.5, c_plus=0.5, eps=0.1, p=1.0, delta=None, T=1.0,
                                 dt=1e-2, h=1e-5, t_cap=40.0, n_reps=4000, probe_times=[0.5, 1.0],
                                 h_probes=[0.1, 0.05, 0.01, 0.005, 0.002, 0.001], sojourn_exponent=None,
                                 sojourn_fit_max=None, export_paths=1),
    "reg-variation": dict(power=0.5, beta=0.25, x_min=1.0, n_list=[10, 100, 1000, 10000], n_samples=1_000_000,
                          rel_tol=0.05),
    "report": dict(run_dir=None),
}


def params_of(cfg: ExperimentConfig) -> dict:
    p = dict(DEFAULTS[cfg.kind])
    unknown = set(cfg.params) - set(p)
    if unknown:
        raise ConfigError(f"params: unknown keys {sorted(unknown)} for kind {cfg.kind!r}")
    p.update(cfg.params)
    return p


def _need(cond: bool, name: str, reason: str):
    if not cond:
        raise ConfigError(f"{name}: {reason}")


def validate(cfg: ExperimentConfig):
    p = params_of(cfg)
    alpha = p.get("alpha")
    if alpha is not None:
        _need(isinstance(alpha, (int, float)) and 1.0 < alpha < 2.0, "alpha", "must lie in (1, 2)")
    for key in ("lam", "x0", "T", "dt", "h", "t_cap", "eps", "x_min"):
        if p.get(key) is not None and key in p:
            _need(isinstance(p[key], (int, float)) and p[key] > 0, key, "must be positive")
    for key in ("n_paths", "n_reps", "n_samples"):
        if key in p:
            _need(isinstance(p[key], int) and p[key] >= 2, key, "must be an integer >= 2")
    if "beta" in p and cfg.kind != "reg-variation":
        _need(0.0 < p["beta"] < 1.0, "beta", "must lie in (0, 1)")
    if cfg.kind in ("constants", "excursion-synthesize"):
        _need(p["beta"] < p["alpha"] - 1.0, "beta", "needs beta < alpha - 1 (the eta-measure pairing diverges otherwise)")
    if cfg.kind == "resolvent-converge":
        _need(p["m_rule"] in ("a", "b"), "m_rule", "must be 'a' or 'b'")
        _need(p["inner"] in ("mc", "quadrature"), "inner", "must be 'mc' or 'quadrature'")
        _need(p["jump"] in ("pareto", "two-point", "exponential", "constant"), "jump", "unknown jump law")
        if p["m_rule"] == "a":
            _need(p["jump"] == "pareto" and p["beta"] < p["alpha"] - 1.0, "beta",
                  "regime (a) precondition violated: requires a Pareto tail with beta < alpha - 1")
        elif p["jump"] == "pareto":
            _need(p["beta"] > p["alpha"] - 1.0, "beta",
                  "regime (b) precondition violated: requires beta > alpha - 1 or a finite-mean law")
        _need(len(p["n_list"]) >= 1 and all(n > 0 for n in p["n_list"]), "n_list", "needs positive entries")
        try:
            from_tag(p["f"])
        except ValueError as e:
            raise ConfigError(f"f: {e}") from None
    if cfg.kind == "excursion-synthesize":
        _need(0.0 <= p["p"] <= 1.0, "p", "must lie in [0, 1]")
        _need(p["eps"] > p["h"], "eps", "must exceed the absorption half-width h")
        if p["delta"] is not None:
            _need(p["delta"] > p["h"], "delta", "must exceed the absorption half-width h")
        _need(all(0 <= t <= p["T"] for t in p["probe_times"]), "probe_times", "must lie in [0, T]")
        _need(all(hp > 0 for hp in p["h_probes"]), "h_probes", "must be positive")
    if cfg.kind == "hitting-calibration":
        _need(len(p["levels"]) >= 1 and all(len(l) == 2 and l[0] > 0 and l[1] > 0 for l in p["levels"]),
              "levels", "must be a list of positive [max_dt, h] pairs")
    if cfg.kind == "reg-variation":
        _need(0.0 < p["beta"] < p["power"], "beta", "needs 0 < beta < power")
        _need(all(n >= p["x_min"] for n in p["n_list"]), "n_list", "entries must be >= x_min")
    if cfg.kind == "report":
        _need(isinstance(p["run_dir"], str), "run_dir", "must name a run directory")


# ---------------------------------------------------------------------------
# experiments

def _eta(p, normalization="star") -> EtaMeasure:
    return EtaMeasure(p["beta"], p["c_minus"], p["c_plus"], normalization)


def run_constants(cfg, p, mapper) -> Result:
    law, lam = StableLaw(p["alpha"]), p["lam"]
    a = law.alpha
    eta = _eta(p)
    rows = []

    def row(name, value, oracle, method, tol):
        diff = None if oracle is None else abs(value - oracle)
        rows.append(dict(quantity=name, value=value, oracle=oracle, oracle_method=method, abs_diff=diff, tol=tol))

    row("u_lambda(0)", u_lambda_zero(lam, law), integral_power_kernel_quad(0.0, lam, law) / math.pi,
        "adaptive quadrature of the power kernel", 1e-8)
    inv_c = 1.0 / C_const(law, eta)
    pairing = eta_pairing(constant(1.0), 1.0, law, eta).value
    row("1/C", inv_c, pairing, "log-grid quadrature of E^x(1-e^-sigma) against eta*", 1e-6 * inv_c)
    row("C", 1.0 / inv_c, 1.0 / pairing, "reciprocal of the pairing quadrature", 1e-6 / inv_c)
    xs = 1e-7
    A = A_const(lam, law)
    row("A(lambda)", A, float(hitting_deficit(xs, lam, law)) / xs ** (a - 1.0),
        f"lambda V_lambda 1(x)/|x|^(alpha-1) at x={xs:g}", 1e-3 * A)
    small = 1e-10
    Bd = B_const(law, "derived")
    row("B(derived)", Bd, float(hitting_deficit(1.0, small, law)) / small ** (1.0 - 1.0 / a) / math.gamma(1.0 / a),
        f"small-lambda deficit at lambda={small:g} over Gamma(1/alpha)", 1e-3 * Bd)
    row("B(printed form)", B_const(law, "printed"), None, "none (reported for comparison)", None)
    row("u_lambda(-1)/u_lambda(0)", float(laplace_hitting(1.0, lam, law)), None, "quadrature value", None)
    gates = [(r["quantity"], r["abs_diff"] <= r["tol"], f"|diff|={r['abs_diff']:.3e} tol={r['tol']:.1e}")
             for r in rows if r["tol"] is not None]
    return Result({"constants": rows}, gates)


def lattice(p) -> list[dict]:
    rows = []
    for alpha in p["alphas"]:
        law = StableLaw(alpha)
        for g in p["gamma_offsets"]:
            gamma = alpha - 1.0 - 0.05 if g == "max" else float(g)
            for lam in p["lams"]:
                closed, quad = integral_power_kernel(gamma, lam, law), integral_power_kernel_quad(gamma, lam, law)
                rows.append(dict(form="power-kernel", alpha=alpha, gamma=gamma, lam=lam, x=None, closed=closed,
                                 quadrature=quad, abs_diff=abs(closed - quad)))
        for x in p["xs"]:
            closed, quad = one_minus_cos_integral(x, law), one_minus_cos_integral_quad(x, law)
            rows.append(dict(form="one-minus-cos", alpha=alpha, gamma=None, lam=None, x=x, closed=closed,
                             quadrature=quad, abs_diff=abs(closed - quad)))
    return rows


def run_quadrature_check(cfg, p, mapper) -> Result:
    rows = lattice(p)
    worst = max(r["abs_diff"] for r in rows)
    return Result({"lattice": rows}, [("lattice", worst < p["tol"], f"max |diff|={worst:.3e}")])


def _hitting_task(args):
    alpha, lam, x0, dt, h, zoom, t_cap, cell, o, c = args
    law = StableLaw(alpha)
    s = run_killed(law, np.full(c, x0), dt, HittingRule(h, t_cap, zoom), cell, c, offset=o)
    e = np.where(s.censored, 0.0, np.exp(-lam * s.sigma))
    return Moments.of(e, s.censored.astype(float)), float(s.steps.sum())


def run_hitting_calibration(cfg, p, mapper) -> Result:
    law = StableLaw(p["alpha"])
    target = float(laplace_hitting(p["x0"], p["lam"], law))
    tasks, seeds = [], {}
    per = len(chunks(p["n_paths"]))
    for i, (dt, h) in enumerate(p["levels"]):
        cell = Stream(cfg.master_seed).derive(i)
        seeds[f"level{i}"] = cell.seed
        tasks.extend((p["alpha"], p["lam"], p["x0"], dt, h, p["zoom"], p["t_cap"], cell, o, c)
                     for o, c in chunks(p["n_paths"]))
    out = list(mapper(_hitting_task, tasks))
    rows, cens = [], {}
    for i, (dt, h) in enumerate(p["levels"]):
        part = out[i * per:(i + 1) * per]
        mom = merge(m for m, _ in part)
        steps = sum(s for _, s in part)
        mean, se = mom.mean(), mom.stderr()
        rows.append(dict(level=i, max_dt=dt, h=h, n_paths=mom.n, mean_exp_sigma=mean, stderr=se, target=target,
                         gap=mean - target, censored_fraction=mom.sums[2] / mom.n, mean_steps=steps / mom.n))
        cens[f"level{i}"] = mom.sums[2] / mom.n
    last = rows[-1]
    gates = [("final gap < 3 stderr", abs(last["gap"]) < 3.0 * last["stderr"],
              f"gap={last['gap']:.3e} stderr={last['stderr']:.3e}")]
    return Result({"hitting": rows}, gates, seeds, cens)


def _jump_law(p):
    if p["jump"] == "pareto":
        return TailLaw(p["beta"], p["c_minus"], p["c_plus"], p["x_min"])
    return FiniteMeanLaw(p["jump"], p["x_min"], p["c_plus"])


def run_resolvent_converge(cfg, p, mapper) -> Result:
    law = StableLaw(p["alpha"])
    base = PerturbedSpec(law, _jump_law(p))
    f = from_tag(p["f"])
    rows = convergence_experiment(f, p["lam"], base, p["n_list"], p["m_rule"], p["n_paths"], cfg.master_seed,
                                  inner=p["inner"], mapper=mapper)
    gaps = [abs(r["gap"]) for r in rows]
    dec = all(b < a for a, b in zip(gaps, gaps[1:]))
    last = rows[-1]
    gates = [("gaps decreasing", dec, " ".join(f"{g:.3e}" for g in gaps)),
             ("final gap < 3 stderr", gaps[-1] < 3.0 * last["stderr"],
              f"gap={last['gap']:.3e} stderr={last['stderr']:.3e}")]
    seeds = {f"n={n}": Stream(cfg.master_seed).derive(i).seed for i, n in enumerate(p["n_list"])}
    return Result({"convergence": rows}, gates, seeds)


def _synth_task(args):
    theta, mix, T, law, grid, rule, cell, o, c, probes, h_probes = args
    return synth_batch(theta, mix, T, law, grid, rule, cell, o, c, probe_times=probes, h_probes=h_probes)


def run_excursion_synthesize(cfg, p, mapper) -> Result:
    from .excursion import synthesize

    law = StableLaw(p["alpha"])
    theta = ThetaMeasure(_eta(p, "levy"), p["eps"], law)
    mix = MixtureSpec.calibrated(theta, p["p"], p["delta"])
    grid = Grid(p["T"], int(round(p["T"] / p["dt"])))
    rule = HittingRule(p["h"], p["t_cap"])
    cell = Stream(cfg.master_seed).derive(0)
    tasks = [(theta, mix, p["T"], law, grid, rule, cell, o, c, tuple(p["probe_times"]), tuple(p["h_probes"]))
             for o, c in chunks(p["n_reps"])]
    b = SynthBatch.concat(list(mapper(_synth_task, tasks)))
    rows, gates = [], []
    for k, t in enumerate(b.probe_times):
        ok = np.isfinite(b.x[:, k])
        u, s, ph = b.residual[ok, k], b.sub[ok, k], b.phi[ok, k]
        n = int(ok.sum())
        if t > 0:
            dev, tol = cf_deviation(u, t, law.alpha)
        else:
            dev, tol = float("nan"), float("nan")
        corr = float(np.corrcoef(u, s)[0, 1]) if np.std(s) > 0 and np.std(u) > 0 else 0.0
        rows.append(dict(t=float(t), n=n, cf_deviation=dev, cf_tol=tol, corr_U_S=corr, corr_tol=3.0 / math.sqrt(n),
                         mean_phi=float(ph.mean()), stderr_phi=float(ph.std(ddof=1) / math.sqrt(n))))
        if t > 0:
            gates.append((f"residual CF at t={t:g}", dev < tol, f"dev={dev:.3e} tol={tol:.3e}"))
            gates.append((f"corr(U,S) at t={t:g}", abs(corr) < 3.0 / math.sqrt(n), f"corr={corr:.3e}"))
    # grid times in (0, t_eff]
    valid = np.minimum(np.floor(b.t_eff / p["dt"] + 1e-9).astype(int), b.n_grid - 1)
    frac = b.sojourn / valid[:, None]
    # Below the entrance offset delta the occupation of the synthesized process near 0 is that of killed
    # stable excursions, whose Green density ~|y|^(alpha-1) makes the fraction ~h^alpha; the fit uses those probes.
    expo = p["sojourn_exponent"] if p["sojourn_exponent"] is not None else law.alpha
    fit_max = p["sojourn_fit_max"] if p["sojourn_fit_max"] is not None else mix.delta / 2.0
    soj = [dict(h_probe=float(hp), mean_fraction=float(frac[:, k].mean()),
                stderr=float(frac[:, k].std(ddof=1) / math.sqrt(frac.shape[0])), used_in_fit=bool(hp <= fit_max))
           for k, hp in enumerate(b.h_probes)]
    use = b.h_probes <= fit_max
    if use.sum() >= 2:
        icpt, ise = extrapolate_sojourn(frac[:, use], b.h_probes[use], expo)
        soj.append(dict(h_probe=0.0, mean_fraction=icpt, stderr=ise, used_in_fit=False))
        gates.append(("extrapolated sojourn < 2 stderr", abs(icpt) < 2.0 * ise, f"{icpt:.3e} +- {ise:.3e}"))
    summary = [dict(eps=theta.eps, p=mix.p, delta=mix.delta, q_eps=mix.q_eps, M_eps=theta.mass, n_reps=p["n_reps"],
                    mean_atoms=float(b.atoms.mean()), mean_jump_atoms=float(b.jump_atoms.mean()),
                    censored_fraction=float(np.mean(b.t_eff < p["T"])))]
    extra = {}
    for i in range(int(p["export_paths"])):
        path = synthesize(theta, mix, p["T"], law, grid, rule, Stream(cfg.master_seed).derive(1), index=i)
        lines = ["t,X,phi,S_at_phi"] + [",".join(_fmt(v) for v in row) for row in
                                          zip(path.times, path.values, path.phi, path.sub_values)]
        extra[f"path_{i}.csv"] = "\n".join(lines) + "\n"
    return Result({"decomposition": rows, "sojourn": soj, "synthesis": summary}, gates, {"reps": cell.seed},
                  {"censored_fraction": summary[0]["censored_fraction"]}, extra)


def _regvar_task(args):
    power, tail, n, n_samples, cell = args
    return reg_variation_ratio(capped_power(power), tail, n, n_samples, cell)


def run_reg_variation(cfg, p, mapper) -> Result:
    tail = TailLaw(p["beta"], 0.5, 0.5, p["x_min"])
    limit = reg_variation_limit(p["power"], p["beta"])
    tasks = [(p["power"], tail, float(n), p["n_samples"], Stream(cfg.master_seed).derive(i))
             for i, n in enumerate(p["n_list"])]
    rows = []
    for n, est in zip(p["n_list"], mapper(_regvar_task, tasks)):
        rows.append(dict(n=n, estimate=est.value, stderr=est.stderr,
                         exact_finite_n=reg_variation_exact(p["power"], tail, float(n)), limit=limit,
                         rel_gap=abs(est.value - limit) / limit))
    last = rows[-1]
    return Result({"reg_variation": rows}, [("final within rel_tol of limit", last["rel_gap"] < p["rel_tol"],
                                             f"rel_gap={last['rel_gap']:.3e}")])


RUNNERS: dict[str, Callable] = {
    "constants": run_constants,
    "quadrature-check": run_quadrature_check,
    "hitting-calibration": run_hitting_calibration,
    "resolvent-converge": run_resolvent_converge,
    "excursion-synthesize": run_excursion_synthesize,
    "reg-variation": run_reg_variation,
}


def execute(cfg: ExperimentConfig, mapper: Callable = map) -> Result:
    p = params_of(cfg)
    try:
        return RUNNERS[cfg.kind](cfg, p, mapper)
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


# ---------------------------------------------------------------------------
# CSV

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    for r in rows[1:]:
        cols.extend(k for k in r if k not in cols)
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(_csv_cell(_fmt(r.get(c))) for c in cols))
    return "\n".join(lines) + "\n"


def _csv_cell(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s
