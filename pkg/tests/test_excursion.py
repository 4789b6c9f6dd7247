import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from skewstable.excursion import (MixtureSpec, ThetaMeasure, cf_deviation, extrapolate_sojourn, local_time_from_tau,
                                  nested_tau_gaps, run_synth, sample_atom_marks, sample_excursion_from, synth_batch,
                                  synthesize, thinning_scaling_ks, truncated_resolvent, zero_sojourn_fraction)
from skewstable.potential import EtaMeasure, hitting_deficit
from skewstable.rng import Stream
from skewstable.stable_core import Grid, HittingRule, StableLaw, run_killed
from skewstable.testfunctions import constant, gaussian_bump, indicator

LAW = StableLaw(1.5)
ETA = EtaMeasure(0.25, 0.5, 0.5, "levy")
THETA = ThetaMeasure(ETA, 0.1, LAW)
RULE = HittingRule(1e-4, 40.0)
GRID = Grid.from_dt(1.0, 1e-2)


def test_local_time_hand_example():
    phi = local_time_from_tau(np.array([1.0, 2.0]), np.array([1.0, 1.5]), [0.5, 1.5, 3.0])
    assert phi.tolist() == [1.0, 2.0, 2.0]


@given(st.lists(st.floats(1e-3, 10.0), min_size=1, max_size=30), st.floats(0.0, 1.0))
def test_local_time_inverts_tau(sigmas, frac):
    sigmas = np.array(sigmas)
    s = np.cumsum(np.full(sigmas.size, 0.5))
    tau = np.cumsum(sigmas)
    t = frac * tau[-1] * 0.999
    k = int(np.searchsorted(s, local_time_from_tau(s, sigmas, t)))
    assert tau[k] > t
    assert k == 0 or tau[k - 1] <= t


def test_theta_validation():
    with pytest.raises(ValueError):
        ThetaMeasure(EtaMeasure(0.25, 0.5, 0.5), 0.1, LAW)
    with pytest.raises(ValueError):
        ThetaMeasure(ETA, 0.0, LAW)
    with pytest.raises(ValueError):
        MixtureSpec(1.5, 0.01, 1.0)
    with pytest.raises(ValueError, match="must exceed"):
        synthesize(THETA, MixtureSpec.calibrated(THETA, 1.0), 1.0, LAW, GRID, HittingRule(0.2, 40.0), Stream(0))
    with pytest.raises(ValueError):
        sample_excursion_from(1e-5, LAW, GRID, RULE, Stream(0))


def test_calibration_identity_for_any_delta():
    for p in (0.0, 0.4, 1.0):
        for delta in (None, 0.05, 0.003):
            mix = MixtureSpec.calibrated(THETA, p, delta)
            total = p * THETA.deficit_mass() + mix.q_eps * float(hitting_deficit(mix.delta, 1.0, LAW))
            assert total == pytest.approx(1.0, rel=1e-12)
    assert MixtureSpec.calibrated(THETA, 1.0).delta == pytest.approx(0.01)


def test_marks_count_and_tail():
    assert all(a.size == 0 for a in sample_atom_marks(THETA, 0.0, Stream(0)))
    counts, mags = [], []
    for i in range(3000):
        s, x = sample_atom_marks(THETA, 2.0, Stream(1), i)
        assert np.all(np.diff(s) >= 0) and np.all((s >= 0) & (s <= 2.0))
        counts.append(s.size)
        mags.append(np.abs(x))
    mean = 2.0 * THETA.mass
    assert abs(np.mean(counts) - mean) < 4 * np.sqrt(mean / 3000)
    mags = np.concatenate(mags)
    assert mags.min() > THETA.eps
    frac = np.mean(mags > 2 * THETA.eps)
    assert abs(frac - 2 ** -0.25) < 4 * np.sqrt(frac * (1 - frac) / mags.size)


def test_path_bookkeeping():
    mix = MixtureSpec.calibrated(THETA, 0.7)
    for i in range(20):
        p = synthesize(THETA, mix, 2.0, LAW, Grid.from_dt(2.0, 1e-2), RULE, Stream(2), i)
        jump = p.atom_jump
        assert np.all(np.abs(p.atom_x[jump]) > THETA.eps)
        assert np.all(np.abs(p.atom_x[~jump]) == mix.delta)
        assert np.all(p.atom_sigma > 0) and np.all(np.diff(p.atom_s) >= 0)
        assert np.all(np.diff(p.phi) >= 0) and np.all(np.isin(p.phi[p.times <= p.t_eff], p.atom_s))
        s, tau = p.tau
        assert np.allclose(p.atom_t0[1:], tau[:-1], rtol=0, atol=1e-12) and p.atom_t0[0] == 0.0
        assert tau[-1] >= p.t_eff or p.censored
        assert np.array_equal(p.residual, p.values - p.sub_values)
        assert p.values[0] == p.atom_x[0]


def test_path_reproducible_and_indexed():
    mix = MixtureSpec.calibrated(THETA, 1.0)
    a = synthesize(THETA, mix, 1.0, LAW, GRID, RULE, Stream(3), 5)
    b = synthesize(THETA, mix, 1.0, LAW, GRID, RULE, Stream(3), 5)
    c = synthesize(THETA, mix, 1.0, LAW, GRID, RULE, Stream(3), 6)
    assert np.array_equal(a.values, b.values) and not np.array_equal(a.values, c.values)


def test_batches_split_by_offset():
    mix = MixtureSpec.calibrated(THETA, 1.0)
    kw = dict(probe_times=(0.5, 1.0), h_probes=(0.05, 0.01))
    whole = synth_batch(THETA, mix, 1.0, LAW, GRID, RULE, Stream(4), 0, 40, **kw)
    left = synth_batch(THETA, mix, 1.0, LAW, GRID, RULE, Stream(4), 0, 15, **kw)
    right = synth_batch(THETA, mix, 1.0, LAW, GRID, RULE, Stream(4), 15, 25, **kw)
    assert np.array_equal(whole.x, np.vstack([left.x, right.x]))
    assert np.array_equal(whole.sojourn, np.vstack([left.sojourn, right.sojourn]))
    single = synthesize(THETA, mix, 1.0, LAW, GRID, RULE, Stream(4), 17)
    assert whole.x[17, 1] == single.values[-1]


def test_pure_delta_mixture_is_stable():
    mix = MixtureSpec.calibrated(THETA, 0.0)
    b = run_synth(THETA, mix, 1.0, LAW, GRID, RULE, Stream(5), 3000, probe_times=(1.0,))
    assert b.jump_atoms.sum() == 0
    dev, tol = cf_deviation(b.x[:, 0], 1.0, LAW.alpha)
    assert dev < tol


def test_jump_share_grows_with_p():
    shares = []
    for p in (0.2, 0.5, 1.0):
        b = run_synth(THETA, MixtureSpec.calibrated(THETA, p), 1.0, LAW, GRID, RULE, Stream(6), 300)
        shares.append(b.jump_atoms.sum() / b.atoms.sum())
    assert shares[0] < shares[1] < shares[2] <= 1.0


def test_deficit_mean_matches_quadrature():
    k = run_killed(LAW, 0.5, 0.02, RULE, Stream(7), 10_000)
    d = 1.0 - np.exp(-k.sigma)
    target = float(hitting_deficit(0.5, 1.0, LAW))
    assert abs(d.mean() - target) < 3 * d.std(ddof=1) / np.sqrt(d.size) + 1e-3


def test_single_excursion_sampler():
    a = sample_excursion_from(0.5, LAW, GRID, RULE, Stream(14), 3, s=0.25)
    b = sample_excursion_from(0.5, LAW, GRID, RULE, Stream(14), 3, s=0.25)
    assert np.array_equal(a.values, b.values) and a.sigma == b.sigma > 0
    assert a.values[0] == 0.5 and a.s == 0.25 and np.all(np.diff(a.times) > 0)
    assert np.all(np.abs(a.values[:-1]) > RULE.h)


def test_excursion_length_scaling():
    a = run_killed(LAW, 2.0, 0.02, HittingRule(1e-4, 1e3), Stream(8), 3000).sigma
    b = run_killed(LAW, 1.0, 0.02, HittingRule(1e-4 / 2.0, 1e3 / 2 ** 1.5), Stream(9), 3000).sigma
    cap = 1e3 / 2 ** 1.5
    assert stats.ks_2samp(np.minimum(a / 2 ** 1.5, cap), np.minimum(b, cap)).pvalue > 1e-3


def test_truncated_resolvent_identities():
    for p in (0.3, 1.0):
        mix = MixtureSpec.calibrated(THETA, p)
        assert truncated_resolvent(constant(1.0), 1.0, THETA, mix) == 1.0
        assert truncated_resolvent(indicator(0.0, np.inf), 1.0, THETA, mix) == pytest.approx(0.5, abs=1e-6)
        v = truncated_resolvent(gaussian_bump(), 1.0, THETA, mix)
        assert 0.0 < v < 1.0


def test_export_roundtrip(tmp_path):
    p = synthesize(THETA, MixtureSpec.calibrated(THETA, 1.0), 1.0, LAW, GRID, RULE, Stream(10))
    out = p.export(tmp_path / "path_0.csv", dict(seed=10))
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert out.read_text().splitlines()[0] == "t,X,phi,S_at_phi"
    assert np.array_equal(data[:, 1], p.values) and np.array_equal(data[:, 2], p.phi)
    info = json.loads(out.with_suffix(".json").read_text())
    assert info["seed"] == 10 and info["n_atoms"] == p.atom_s.size


def test_thinning_matches_scaling():
    res = thinning_scaling_ks(ThetaMeasure(ETA, 1e-2, LAW), 0.3, 1.0, 20_000, Stream(11))
    assert res.pvalue > 1e-3


def test_nested_tau_gaps_shrink():
    g = nested_tau_gaps(THETA, [0.1, 0.03, 0.01], 1.0, LAW, HittingRule(1e-5, 1e3), 0.05, Stream(12))
    assert g[-1] == 0.0 and g[0] >= g[1] >= g[2]


def test_sojourn_fractions_bounded_and_monotone():
    mix = MixtureSpec.calibrated(THETA, 1.0)
    hs = (0.1, 0.01, 0.001)
    for i in range(10):
        p = synthesize(THETA, mix, 1.0, LAW, GRID, RULE, Stream(13), i)
        fr = [zero_sojourn_fraction(p, h) for h in hs]
        assert all(0.0 <= f <= 1.0 for f in fr) and fr[0] >= fr[1] >= fr[2]


def test_sojourn_below_absorption_counts_only_endpoints():
    mix = MixtureSpec.calibrated(THETA, 1.0)
    for i in range(10):
        p = synthesize(THETA, mix, 1.0, LAW, GRID, RULE, Stream(15), i)
        assert zero_sojourn_fraction(p, RULE.h / 2) <= p.atom_s.size / (p.times.size - 1)


def test_inverse_pair_laws_on_grid():
    mix = MixtureSpec.calibrated(THETA, 1.0)
    for i in range(10):
        p = synthesize(THETA, mix, 1.0, LAW, GRID, RULE, Stream(16), i)
        s, tau = p.tau
        tau_left = np.concatenate([[0.0], tau[:-1]])
        k = np.searchsorted(s, p.phi)
        assert np.array_equal(s[k], p.phi)
        assert np.all(tau_left[k] <= p.times + 1e-12) and np.all(p.times <= tau[k] + 1e-12)
        assert np.array_equal(local_time_from_tau(s, p.atom_sigma, tau_left), s)


def test_extrapolation_recovers_intercept():
    hs = np.array([0.1, 0.05, 0.01])
    rng = np.random.default_rng(0)
    fr = 0.02 + 3.0 * hs ** 1.5 + 1e-3 * rng.standard_normal((200, 3))
    b0, se = extrapolate_sojourn(fr, hs, 1.5)
    assert abs(b0 - 0.02) < 4 * se and se < 1e-3
