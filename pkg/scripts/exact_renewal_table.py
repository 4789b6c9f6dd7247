"""Deterministic finite-n renewal values of lambda R f(0) for both convergence regimes.

Prints n, the renewal value and its gap to the limiting target, showing how
slowly the finite-n resolvent at 0 approaches its limit.
"""
import argparse

from skewstable.golden import golden
from skewstable.perturbed import PerturbedSpec, m_rule_value, resolvent_zero_exact
from skewstable.stable_core import StableLaw, TailLaw
from skewstable.testfunctions import gaussian_bump


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=float, nargs="+", default=[10, 1e2, 1e3, 1e4, 1e5, 1e6])
    args = ap.parse_args()
    law, f = StableLaw(1.5), gaussian_bump()
    targets = {"a": golden("limit_gauss_alpha1.5_beta0.25"), "b": golden("free_resolvent_gauss_alpha1.5")}
    print("regime,beta,n,m_n,renewal_value,target,gap")
    for rule, beta in (("a", 0.25), ("b", 0.75)):
        tail = TailLaw(beta)
        for n in args.n:
            m = m_rule_value(rule, n, law, tail)
            v = resolvent_zero_exact(f, 1.0, PerturbedSpec(law, tail, n=n, m=m, x0=0.0))
            print(f"{rule},{beta},{n:g},{m:.6g},{v!r},{targets[rule]!r},{v - targets[rule]:+.6f}", flush=True)


if __name__ == "__main__":
    main()
