"""Golden-value store: independently computed reference values with tolerances.

``regenerate`` recomputes entries with tighter budgets and refuses to replace
a stored value that moved by more than three standard errors (or beyond the
stored tolerance for deterministic entries) unless forced.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .potential import (EtaMeasure, OuterSpec, eta_pairing, free_resolvent, hitting_deficit, integral_power_kernel_quad,
                        laplace_hitting, limit_resolvent_at_zero, v_lambda)
from .quadrature import QuadratureSpec
from .stable_core import StableLaw
from .testfunctions import constant, gaussian_bump

GOLDEN_PATH = Path(__file__).with_name("data") / "golden.json"

LAW = StableLaw(1.5)
ETA = EtaMeasure(0.25, 0.5, 0.5)


class DriftError(RuntimeError):
    """A regenerated value disagrees with the stored one beyond 3 sigma."""


@dataclass(frozen=True)
class Oracle:
    compute: Callable[[bool], tuple[float, float]]   # high_budget -> (value, stderr)
    tol: float
    description: str


def _u1_zero(high):
    return integral_power_kernel_quad(0.0, 1.0, LAW) / math.pi, 0.0


def _laplace_x1(high):
    q = QuadratureSpec(rel_tol=1e-12, abs_tol=1e-15) if high else QuadratureSpec()
    return float(laplace_hitting(1.0, 1.0, LAW, q)), 0.0


def _inv_c(high):
    outer = OuterSpec(lo=1e-8, hi=1e5, width=0.25, order=16) if high else OuterSpec()
    return eta_pairing(constant(1.0), 1.0, LAW, ETA, outer).value, 0.0


def _gauss_limit(high):
    outer = OuterSpec(lo=1e-7, hi=1e4, width=0.25, order=16) if high else OuterSpec()
    return limit_resolvent_at_zero(gaussian_bump(), 1.0, LAW, ETA, outer).value, 0.0


def _gauss_free(high):
    return float(free_resolvent(gaussian_bump(), 0.0, 1.0, LAW)), 0.0


def _small_x_A(high):
    x = 1e-8 if high else 1e-7
    return float(hitting_deficit(x, 1.0, LAW)) / x ** 0.5, 0.0


def _v_gauss_x1(high):
    q = QuadratureSpec(rel_tol=1e-12, abs_tol=1e-15) if high else QuadratureSpec()
    return float(v_lambda(gaussian_bump(), 1.0, 1.0, LAW, q)), 0.0


def _identity(which):
    def run(high):
        from .excursion import ThetaMeasure, truncated_resolvent, MixtureSpec
        from .perturbed import PerturbedSpec, resolvent_zero_formula
        from .rng import Stream
        from .stable_core import TailLaw

        one = constant(1.0)
        if which == "formula":
            spec = PerturbedSpec(LAW, TailLaw(0.25), n=10.0, m=10.0 ** 0.75, x0=0.0)
            return resolvent_zero_formula(one, 1.0, spec, 10_000 if high else 1000, Stream(0)).value, 0.0
        if which == "limit":
            return limit_resolvent_at_zero(one, 1.0, LAW, ETA).value, 0.0
        theta = ThetaMeasure(EtaMeasure(0.25, 0.5, 0.5, "levy"), 0.1, LAW)
        return truncated_resolvent(one, 1.0, theta, MixtureSpec.calibrated(theta, 1.0)), 0.0
    return run


ORACLES: dict[str, Oracle] = {
    "u1_zero_alpha1.5": Oracle(_u1_zero, 1e-8, "adaptive quadrature of 1/(1+theta^alpha) over pi"),
    "laplace_hitting_x1_alpha1.5": Oracle(_laplace_x1, 1e-9, "u_1(-1)/u_1(0) by ladder + alternating-tail quadrature"),
    "inv_C_alpha1.5_beta0.25": Oracle(_inv_c, 1e-6, "log-grid pairing of E^x(1-e^-sigma) with eta*"),
    "A_small_x_alpha1.5": Oracle(_small_x_A, 1e-3, "lambda V_lambda 1(x)/x^(alpha-1) at tiny x"),
    "v_gauss_x1_alpha1.5": Oracle(_v_gauss_x1, 1e-9, "killed resolvent of exp(-x^2) at x=1 by quadrature"),
    "limit_gauss_alpha1.5_beta0.25": Oracle(_gauss_limit, 1e-6,
                                             "<eta*,V f>/<eta*,V 1> for exp(-x^2) by log-grid quadrature"),
    "free_resolvent_gauss_alpha1.5": Oracle(_gauss_free, 1e-9, "R^U_1 exp(-x^2) at 0 by Fourier quadrature"),
    "identity_formula_one": Oracle(_identity("formula"), 0.0, "renewal formula with f=1"),
    "identity_limit_one": Oracle(_identity("limit"), 0.0, "limit ratio with f=1"),
    "identity_excursion_one": Oracle(_identity("excursion"), 0.0, "truncated excursion resolvent with f=1"),
}


def load_store(path: Path = GOLDEN_PATH) -> dict:
    path = Path(path)
    return json.loads(path.read_text()) if path.exists() else {}


def save_store(store: dict, path: Path = GOLDEN_PATH):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(store, indent=2, sort_keys=True) + "\n")


def drift(old: dict, value: float, stderr: float) -> Optional[str]:
    """A message when value disagrees with the stored entry, None otherwise."""
    sig = math.hypot(old.get("stderr", 0.0), stderr)
    if sig > 0:
        limit = 3.0 * sig
    else:
        limit = max(old.get("tol", 0.0), 0.0)
    diff = abs(value - old["value"])
    if diff > limit:
        return (f"stored {old['value']!r} vs new {value!r}: |diff|={diff:.3e} exceeds "
                f"{'3 sigma' if sig > 0 else 'tolerance'} {limit:.3e}")
    return None


def regenerate(keys, high_budget: bool = True, force: bool = False, path: Path = GOLDEN_PATH) -> dict:
    """Recompute the named entries; raise DriftError on disagreement unless forced."""
    keys = list(ORACLES) if keys in (None, "all") or list(keys) == ["all"] else list(keys)
    unknown = [k for k in keys if k not in ORACLES]
    if unknown:
        raise KeyError(f"unknown golden keys {unknown}; known: {sorted(ORACLES)}")
    store = load_store(path)
    fresh, alarms = {}, []
    for k in keys:
        o = ORACLES[k]
        value, se = o.compute(high_budget)
        value = float(value)
        if k in store:
            msg = drift(store[k], value, se)
            if msg:
                alarms.append(f"{k}: {msg}")
        fresh[k] = dict(value=value, stderr=float(se), tol=o.tol, oracle=o.description,
                        timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    if alarms and not force:
        raise DriftError("drift alarm, store left unchanged:\n  " + "\n  ".join(alarms))
    store.update(fresh)
    save_store(store, path)
    return fresh


def golden(key: str, path: Path = GOLDEN_PATH) -> float:
    return float(load_store(path)[key]["value"])
