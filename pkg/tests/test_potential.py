import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skewstable.golden import golden
from skewstable.potential import (A_const, A_const_printed, B_const, C_const, EtaMeasure, InnerMC, OuterSpec,
                                  ResolventEstimate, VTable, estimate_V_lambda, eta_pairing, free_resolvent,
                                  hitting_deficit, integral_power_kernel, integral_power_kernel_quad, laplace_hitting,
                                  limit_resolvent_at_zero, one_minus_cos_integral, one_minus_cos_integral_quad,
                                  reg_variation_exact, reg_variation_limit, reg_variation_ratio, u_lambda,
                                  u_lambda_zero, v_lambda, v_lambda_one)
from skewstable.quadrature import QuadratureError, QuadratureSpec
from skewstable.rng import Stream
from skewstable.stable_core import Grid, HittingRule, StableLaw, TailLaw
from skewstable.testfunctions import capped_power, constant, gaussian_bump, indicator, zero

LAW = StableLaw(1.5)
ETA = EtaMeasure(0.25, 0.5, 0.5)


def test_u_zero_closed_form_and_golden():
    assert abs(u_lambda_zero(1.0, LAW) - 0.7698004) < 5e-8
    assert abs(u_lambda(0.0, 1.0, LAW) - golden("u1_zero_alpha1.5")) < 1e-8


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_u_zero_scaling(lam):
    assert abs(float(u_lambda(0.0, lam, LAW)) - lam ** (1 / 1.5 - 1) * u_lambda_zero(1.0, LAW)) < 1e-8


@given(st.floats(-50, 50), st.floats(0.1, 10))
def test_u_symmetric_and_dominated(x, lam):
    a, b = float(u_lambda(x, lam, LAW)), float(u_lambda(-x, lam, LAW))
    assert a == pytest.approx(b, abs=1e-12)
    assert a <= u_lambda_zero(lam, LAW) + 1e-12


def test_power_kernel_examples():
    assert integral_power_kernel(0.0, 1.0, StableLaw(2.0, boundary=True)) == pytest.approx(math.pi / 2, abs=1e-14)
    assert integral_power_kernel(0.25, 2.0, LAW) == pytest.approx(3.73179, abs=5e-6)
    assert integral_power_kernel(0.25, 2.0, LAW) == pytest.approx(integral_power_kernel_quad(0.25, 2.0, LAW), abs=1e-8)
    assert integral_power_kernel(0.0, 1.0, LAW) == pytest.approx(math.pi * u_lambda_zero(1.0, LAW), abs=1e-13)
    with pytest.raises(ValueError):
        integral_power_kernel(0.5, 1.0, LAW)


def test_one_minus_cos_examples():
    assert one_minus_cos_integral(0.0, LAW) == 0.0
    assert one_minus_cos_integral(1.0, LAW) == pytest.approx(math.sqrt(2 * math.pi), abs=1e-12)
    assert one_minus_cos_integral_quad(1.0, LAW) == pytest.approx(math.sqrt(2 * math.pi), abs=1e-8)
    assert one_minus_cos_integral(1.0, StableLaw(1.999)) == pytest.approx(math.pi / 2, abs=1e-2)


@given(st.sampled_from([1.2, 1.5, 1.8]), st.floats(0.2, 5.0))
def test_one_minus_cos_closed_vs_quad(alpha, x):
    law = StableLaw(alpha)
    assert abs(one_minus_cos_integral(x, law) - one_minus_cos_integral_quad(x, law)) < 1e-8


def test_laplace_hitting_values():
    assert laplace_hitting(0.0, 1.0, LAW) == 1.0
    assert float(laplace_hitting(1.0, 1.0, LAW)) == pytest.approx(golden("laplace_hitting_x1_alpha1.5"), abs=1e-9)
    assert float(laplace_hitting(-1.3, 1.0, LAW)) == pytest.approx(float(laplace_hitting(1.3, 1.0, LAW)), abs=1e-13)


@given(st.floats(1e-4, 100.0), st.floats(1.01, 3.0))
def test_laplace_hitting_in_unit_interval_and_decreasing(x, factor):
    a, b = float(laplace_hitting(x, 1.0, LAW)), float(laplace_hitting(x * factor, 1.0, LAW))
    assert 0 < b < a <= 1


def test_v_lambda_one_limits():
    assert v_lambda_one(0.0, 1.0, LAW) == 0.0
    assert abs(float(v_lambda_one(1e3, 2.0, LAW)) - 0.5) < 1e-3
    assert float(hitting_deficit(0.7, 1.0, LAW)) == pytest.approx(float(v_lambda_one(0.7, 1.0, LAW)), abs=1e-14)


def test_small_x_constant_approach():
    ratios = [float(hitting_deficit(x, 1.0, LAW)) / x ** 0.5 / A_const(1.0, LAW) for x in (1e-2, 1e-3, 1e-4)]
    gaps = [abs(r - 1) for r in ratios]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-2
    assert A_const(1.0, LAW) == pytest.approx(golden("A_small_x_alpha1.5"), rel=1e-3)
    assert A_const_printed(1.0, LAW) < 0 < A_const(1.0, LAW)


def test_tail_constant_forms():
    # the derived form is the Tauberian image of the small-lambda expansion
    lam = 1e-10
    small = float(hitting_deficit(1.0, lam, LAW)) / lam ** (1 / 3) / math.gamma(1 / 1.5)
    assert B_const(LAW, "derived") == pytest.approx(small, rel=1e-6)
    assert B_const(LAW, "printed") == pytest.approx(0.2978361, abs=1e-7)
    with pytest.raises(ValueError):
        B_const(LAW, "other")


def test_C_constant_and_levy_normalization():
    assert C_const(LAW, ETA) == pytest.approx(0.127491, abs=1e-6)
    inv = eta_pairing(constant(1.0), 1.0, LAW, ETA).value
    assert inv == pytest.approx(1 / C_const(LAW, ETA), rel=1e-6)
    assert inv == pytest.approx(golden("inv_C_alpha1.5_beta0.25"), rel=1e-6)
    levy = EtaMeasure(0.25, 0.5, 0.5, "levy")
    assert eta_pairing(constant(1.0), 1.0, LAW, levy).value == pytest.approx(1.0, abs=1e-6)


def test_pairing_lambda_scaling():
    r = eta_pairing(constant(1.0), 2.0, LAW, ETA).value / eta_pairing(constant(1.0), 1.0, LAW, ETA).value
    assert r == pytest.approx(2.0 ** (0.25 / 1.5 - 1.0), rel=1e-4)


def test_eta_measure_validation():
    with pytest.raises(ValueError):
        EtaMeasure(0.25, 0.5, 0.5).check_law(StableLaw(1.2))
    with pytest.raises(ValueError):
        EtaMeasure(0.25, 0.7, 0.7)
    assert EtaMeasure(0.25, 0.3, 0.7).density(-2.0) == pytest.approx(0.3 * 2 ** -1.25)


def test_limit_resolvent_identities():
    assert limit_resolvent_at_zero(constant(1.0), 1.0, LAW, ETA).value == 1.0
    half = limit_resolvent_at_zero(indicator(0.0, np.inf), 1.0, LAW, ETA).value
    assert half == pytest.approx(0.5, abs=1e-8)
    g = limit_resolvent_at_zero(gaussian_bump(), 1.0, LAW, ETA).value
    assert g == pytest.approx(golden("limit_gauss_alpha1.5_beta0.25"), abs=1e-6)


def test_limit_resolvent_with_inner_mc_brackets_quadrature():
    f = gaussian_bump()
    q = limit_resolvent_at_zero(f, 1.0, LAW, ETA).value
    mc = limit_resolvent_at_zero(f, 1.0, LAW, ETA, OuterSpec(width=1.0, order=6), InnerMC(200, seed=3))
    assert mc.stderr > 0 and mc.covers(q)


def test_free_and_killed_resolvent_relations():
    f = gaussian_bump()
    assert float(free_resolvent(f, 0.0, 1.0, LAW)) == pytest.approx(golden("free_resolvent_gauss_alpha1.5"), abs=1e-9)
    v = float(v_lambda(f, 1.0, 1.0, LAW))
    assert v == pytest.approx(golden("v_gauss_x1_alpha1.5"), abs=1e-9)
    assert 0 < v < float(v_lambda_one(1.0, 1.0, LAW))
    assert float(v_lambda(constant(1.0), 1.0, 1.0, LAW)) == pytest.approx(float(v_lambda_one(1.0, 1.0, LAW)), abs=1e-13)
    # generic callable path agrees with the encoded one
    from skewstable.testfunctions import BoundedTestFunction

    g = BoundedTestFunction(lambda x: np.exp(-x * x), 1.0, "callable-gauss")
    assert float(free_resolvent(g, 0.3, 1.0, LAW)) == pytest.approx(float(free_resolvent(f, 0.3, 1.0, LAW)), abs=1e-7)


def test_estimate_V_lambda_matches_quadrature():
    rule = HittingRule(1e-5, 40.0)
    est = estimate_V_lambda(constant(1.0), 1.0, 1.0, LAW, Grid.from_dt(1.0, 1e-2), rule, 20_000, Stream(4))
    assert est.covers(float(v_lambda_one(1.0, 1.0, LAW)))
    z = estimate_V_lambda(zero(), 1.0, 1.0, LAW, Grid.from_dt(1.0, 1e-2), rule, 100, Stream(4))
    assert z.value == 0 and z.stderr == 0
    with pytest.raises(ValueError):
        estimate_V_lambda(constant(1.0), 1.0, 1.0, LAW, Grid.from_dt(1.0, 1e-2), HittingRule(1e-5, 5.0), 10, Stream(0))


@given(st.sampled_from(["gauss", "ind", "power"]), st.floats(-3, 3))
def test_estimate_domination(kind, x):
    f = {"gauss": gaussian_bump(), "ind": indicator(-0.5, 2.0), "power": capped_power(0.5)}[kind]
    est = estimate_V_lambda(f, x, 1.0, LAW, Grid.from_dt(1.0, 1e-2), HittingRule(1e-4, 40.0), 300, Stream(5))
    assert abs(est.value) <= f.bound * float(v_lambda_one(x, 1.0, LAW)) + 3 * est.stderr + 1e-12


def test_independent_runs_overlap():
    rule, grid = HittingRule(1e-5, 40.0), Grid.from_dt(1.0, 1e-2)
    a = estimate_V_lambda(gaussian_bump(), 0.5, 1.0, LAW, grid, rule, 5000, Stream(6))
    b = estimate_V_lambda(gaussian_bump(), 0.5, 1.0, LAW, grid, rule, 5000, Stream(7))
    assert abs(a.value - b.value) < 3 * math.hypot(a.stderr, b.stderr)


def test_reg_variation():
    tail = TailLaw(0.25)
    g = capped_power(0.5)
    assert reg_variation_ratio(zero(), tail, 100.0, 1000, Stream(0)).value == 0
    assert reg_variation_limit(0.5, 0.25) == pytest.approx(2.0)
    assert reg_variation_exact(0.5, tail, 1e4) == pytest.approx(1.9, abs=1e-12)
    est = reg_variation_ratio(g, tail, 100.0, 200_000, Stream(1))
    assert est.covers(reg_variation_exact(0.5, tail, 100.0))
    a = reg_variation_exact(0.5, tail, 1e6)
    b = reg_variation_exact(0.5, tail, 2e6)
    assert abs(a - b) < 0.01


def test_vtable_matches_direct():
    t = VTable(gaussian_bump(), 1.0, LAW, lo=1e-3, hi=10.0, per_decade=20)
    xs = np.array([-3.3, -0.02, 0.004, 0.5, 2.2])
    assert np.allclose(t(xs), np.asarray(v_lambda(gaussian_bump(), xs, 1.0, LAW)), atol=1e-6)


def test_resolvent_estimate_interval():
    r = ResolventEstimate(1.0, 0.1, 10, 1.0, {})
    assert r.interval() == (pytest.approx(0.7), pytest.approx(1.3)) and r.covers(1.29) and not r.covers(1.31)


def test_quadrature_failure_is_explicit():
    with pytest.raises(QuadratureError):
        u_lambda(1.0, 1.0, LAW, QuadratureSpec(abs_tol=1e-300, rel_tol=1e-300, accel_terms=10))
