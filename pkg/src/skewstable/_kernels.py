"""Compiled inner loops shared by the simulation modules.

Conventions: every path owns a counter-based substream identified by
``(tag, index)``; the j-th Philox block of that substream feeds the j-th draw.
Near the origin the time step shrinks to ``(|x|/zoom)^α`` so that a single
step moves the path by a small fraction of its distance to 0; a path is
absorbed the first time ``|x| <= h``.
"""
from __future__ import annotations

import numba as nb
import numpy as np

from .rng import TAG_INCREMENT, stream_id_words, uniform_pair
from .testfunctions import feval

JUMP_PARETO = 0
JUMP_TWO_POINT = 1
JUMP_EXPONENTIAL = 2
JUMP_CONSTANT = 3


@nb.njit(cache=True, inline="always")
def cms(alpha, u1, u2):
    """Standard symmetric stable draw with characteristic function exp(-|z|^α)."""
    v = np.pi * (u1 - 0.5)
    w = -np.log(u2)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


@nb.njit(cache=True)
def fill_increments(alpha, scale, k0, k1, tag, index, counter0, out):
    s0, s1 = stream_id_words(tag, index)
    for k in range(out.shape[0]):
        u1, u2 = uniform_pair(k0, k1, s0, s1, counter0 + k)
        out[k] = scale * cms(alpha, u1, u2)


@nb.njit(cache=True)
def fill_cms_indexed(alpha, k0, k1, tag, indices, counter, out):
    for i in range(indices.shape[0]):
        s0, s1 = stream_id_words(tag, indices[i])
        u1, u2 = uniform_pair(k0, k1, s0, s1, counter)
        out[i] = cms(alpha, u1, u2)


@nb.njit(cache=True, inline="always")
def adaptive_step(alpha, x, dtmax, zoom):
    r = abs(x) / zoom
    d = r ** alpha
    return dtmax if d > dtmax else d


@nb.njit(cache=True, inline="always")
def discount_mass(lam, t, d):
    """∫_t^{t+d} e^{-λs} ds."""
    if lam == 0.0:
        return d
    return np.exp(-lam * t) * (-np.expm1(-lam * d)) / lam


@nb.njit(cache=True, inline="always")
def jump_draw(kind, p0, p1, c_plus, u1, u2):
    """Jump ζ from its law: Pareto(β=p0, x_min=p1), two-point ±p0, Exp(mean p0) magnitude, or +p0."""
    if kind == JUMP_PARETO:
        mag = p1 * u1 ** (-1.0 / p0)
    elif kind == JUMP_TWO_POINT:
        mag = p0
    elif kind == JUMP_EXPONENTIAL:
        mag = -p0 * np.log(u1)
    else:
        return p0
    return mag if u2 < c_plus else -mag


@nb.njit(cache=True)
def killed_one(alpha, x0, lam, fk, fp0, fp1, dtmax, h, zoom, tcap, k0, k1, s0, s1):
    """One killed path from x0.

    Returns (∫_0^{σ∧tcap} e^{-λt} f(X_t) dt (trapezoid in f, exact discount), σ̂ or tcap,
    censored flag, number of steps).
    """
    x = x0
    if abs(x) <= h:
        return 0.0, 0.0, False, 0
    t = 0.0
    acc = 0.0
    g = feval(fk, fp0, fp1, x)
    j = 0
    ia = 1.0 / alpha
    while True:
        d = adaptive_step(alpha, x, dtmax, zoom)
        last = False
        if t + d >= tcap:
            d = tcap - t
            last = True
        u1, u2 = uniform_pair(k0, k1, s0, s1, j)
        j += 1
        x = x + d ** ia * cms(alpha, u1, u2)
        gn = feval(fk, fp0, fp1, x)
        acc += 0.5 * (g + gn) * discount_mass(lam, t, d)
        t = t + d
        g = gn
        if abs(x) <= h:
            return acc, t, False, j
        if last:
            return acc, t, True, j


@nb.njit(cache=True)
def killed_batch(alpha, x0s, lam, fk, fp0, fp1, dtmax, h, zoom, tcap, k0, k1, tag, indices,
                 out_int, out_sigma, out_cens, out_steps):
    for i in range(indices.shape[0]):
        s0, s1 = stream_id_words(tag, indices[i])
        a, s, c, n = killed_one(alpha, x0s[i], lam, fk, fp0, fp1, dtmax, h, zoom, tcap, k0, k1, s0, s1)
        out_int[i] = a
        out_sigma[i] = s
        out_cens[i] = c
        out_steps[i] = n




@nb.njit(cache=True)
def perturbed_one(alpha, x0, n_scale, m, jk, jp0, jp1, jc, lam, fk, fp0, fp1, t_end, out_dt, n_out,
                  dtmax, h, zoom, tcap, k0, k1, index, out_values, touch_times, jumps, max_rec):
    """One path of X_ζ (m <= 0) or X_{ζ,m} (m > 0) on [0, t_end].

    Touches are the epochs where |X| <= h; for m > 0 an Exp(m) hold at 0
    precedes every jump (and a start at 0 begins with a hold).  Jump k and
    hold k use counter k of their own substreams.  Fills ``out_values`` at
    times k*out_dt (k <= n_out) and the first ``max_rec`` touches and jumps.
    Returns (discounted integral of f, touches, jumps, held time, censored
    segments, steps).
    """
    ia = 1.0 / alpha
    si0, si1 = stream_id_words(TAG_INCREMENT, index)
    sz0, sz1 = stream_id_words(2, index)
    sh0, sh1 = stream_id_words(3, index)
    t = 0.0
    x = x0
    acc = 0.0
    held = 0.0
    cens = 0
    ntouch = 0
    njump = 0
    j = 0
    steps = 0
    g = 0
    seg_start = 0.0
    pending = abs(x0) <= h  # on the threshold: hold (m > 0) or jump (m <= 0) now
    if pending and m <= 0:
        if ntouch < max_rec:
            touch_times[ntouch] = 0.0
        ntouch += 1
    fx = feval(fk, fp0, fp1, x)
    while True:
        if pending:
            if m > 0:
                uh1, uh2 = uniform_pair(k0, k1, sh0, sh1, njump)
                te = min(t - np.log(uh1) / m, t_end)
                while g <= n_out and g * out_dt < te:
                    out_values[g] = 0.0
                    g += 1
                acc += feval(fk, fp0, fp1, 0.0) * discount_mass(lam, t, te - t)
                held += te - t
                t = te
                if t >= t_end:
                    break
            uz1, uz2 = uniform_pair(k0, k1, sz0, sz1, njump)
            x = jump_draw(jk, jp0, jp1, jc, uz1, uz2) / n_scale
            if njump < max_rec:
                jumps[njump] = x
            njump += 1
            seg_start = t
            pending = False
            fx = feval(fk, fp0, fp1, x)
        while g <= n_out and g * out_dt <= t:
            out_values[g] = x
            g += 1
        if t >= t_end:
            break
        d = adaptive_step(alpha, x, dtmax, zoom)
        tn = t + d
        if g <= n_out and tn >= g * out_dt:
            tn = g * out_dt
        if tn >= t_end:
            tn = t_end
        d = tn - t
        u1, u2 = uniform_pair(k0, k1, si0, si1, j)
        j += 1
        steps += 1
        x = x + d ** ia * cms(alpha, u1, u2)
        gn = feval(fk, fp0, fp1, x)
        acc += 0.5 * (fx + gn) * discount_mass(lam, t, d)
        fx = gn
        t = tn
        if t - seg_start > tcap:
            cens += 1
            seg_start = t
        if abs(x) <= h:
            if ntouch < max_rec:
                touch_times[ntouch] = t
            ntouch += 1
            pending = True
            x = 0.0
    while g <= n_out:
        out_values[g] = 0.0 if pending else x
        g += 1
    return acc, ntouch, njump, held, cens, steps


@nb.njit(cache=True)
def perturbed_integrals(alpha, x0, n_scale, m, jk, jp0, jp1, jc, lam, fk, fp0, fp1, t_end, dtmax, h, zoom, tcap,
                        k0, k1, indices, out_int, out_touch, out_held):
    vals = np.empty(1)
    tt = np.empty(1)
    jj = np.empty(1)
    for i in range(indices.shape[0]):
        a, nt, nj, hd, c, s = perturbed_one(alpha, x0, n_scale, m, jk, jp0, jp1, jc, lam, fk, fp0, fp1, t_end,
                                            t_end, 0, dtmax, h, zoom, tcap, k0, k1, indices[i], vals, tt, jj, 0)
        out_int[i] = a
        out_touch[i] = nt
        out_held[i] = hd


ATOM_BITS = 20


@nb.njit(cache=True)
def synth_one(alpha, rate_jump, rate_cont, eps, beta, c_plus, delta, lam, fk, fp0, fp1, t_end, out_dt, n_out,
              dtmax, h, zoom, tcap, k0, k1, rep, out_x, out_phi, out_sub, at_s, at_x, at_jump, at_t, at_sigma,
              max_rec):
    """Itô synthesis of one skew path on [0, t_end].

    Atoms arrive on the local-time axis at total rate rate_jump + rate_cont;
    jump atoms carry marks from the truncated power law (|x| = ε U^{-1/β}),
    continuous-approximation atoms start at ±δ.  Each atom's excursion is a
    killed stable path with its own substream ``(rep << 20) | atom``.
    Returns (discounted integral, atoms, jump atoms, effective horizon,
    censored flag, steps).  Output arrays hold X, φ and S_θ(φ) on the grid.
    """
    ia = 1.0 / alpha
    sa0, sa1 = stream_id_words(4, rep)
    sm0, sm1 = stream_id_words(5, rep)
    total = rate_jump + rate_cont
    p_jump = rate_jump / total
    t = 0.0
    s = 0.0
    sub = 0.0
    acc = 0.0
    a = 0
    njump = 0
    g = 0
    steps = 0
    censored = False
    t_eff = t_end
    while t < t_end:
        u1, u2 = uniform_pair(k0, k1, sa0, sa1, a)
        s += -np.log(u1) / total
        v1, v2 = uniform_pair(k0, k1, sm0, sm1, a)
        if u2 < p_jump:
            mag = eps * v1 ** (-1.0 / beta)
            x = mag if v2 < c_plus else -mag
            sub += x
            njump += 1
            is_jump = True
        else:
            x = delta if v2 < 0.5 else -delta
            is_jump = False
        if a < max_rec:
            at_s[a] = s
            at_x[a] = x
            at_jump[a] = is_jump
            at_t[a] = t
        idx = (np.int64(rep) << ATOM_BITS) | (np.int64(a) & ((1 << ATOM_BITS) - 1))
        si0, si1 = stream_id_words(TAG_INCREMENT, idx)
        t0 = t
        j = 0
        fx = feval(fk, fp0, fp1, x)
        while True:
            while g <= n_out and g * out_dt <= t:
                out_x[g] = x
                out_phi[g] = s
                out_sub[g] = sub
                g += 1
            if t >= t_end:
                break
            d = adaptive_step(alpha, x, dtmax, zoom)
            tn = t + d
            if g <= n_out and tn >= g * out_dt:
                tn = g * out_dt
            if tn >= t_end:
                tn = t_end
            d = tn - t
            uu1, uu2 = uniform_pair(k0, k1, si0, si1, j)
            j += 1
            steps += 1
            x = x + d ** ia * cms(alpha, uu1, uu2)
            gn = feval(fk, fp0, fp1, x)
            acc += 0.5 * (fx + gn) * discount_mass(lam, t, d)
            fx = gn
            t = tn
            if abs(x) <= h:
                break
            if t - t0 > tcap:
                censored = True
                break
        if a < max_rec:
            at_sigma[a] = t - t0
        a += 1
        if censored:
            t_eff = t0
            break
    while g <= n_out:
        out_x[g] = np.nan
        out_phi[g] = np.nan
        out_sub[g] = np.nan
        g += 1
    if censored:
        for i in range(n_out + 1):
            if i * out_dt > t_eff:
                out_x[i] = np.nan
                out_phi[i] = np.nan
                out_sub[i] = np.nan
    return acc, a, njump, t_eff, censored, steps


@nb.njit(cache=True)
def synth_batch(alpha, rate_jump, rate_cont, eps, beta, c_plus, delta, lam, fk, fp0, fp1, t_end, out_dt, n_out,
                dtmax, h, zoom, tcap, k0, k1, reps, probe_idx, h_probes,
                res_x, res_phi, res_sub, res_int, res_atoms, res_jumps, res_teff, res_soj):
    """Summaries of many syntheses: X, φ, S_θ(φ) at probe grid indices, the
    discounted integral, atom counts, effective horizon, and for each probe
    half-width the number of grid times t > 0 with |X| <= h_probe."""
    ox = np.empty(n_out + 1)
    op = np.empty(n_out + 1)
    osb = np.empty(n_out + 1)
    d1 = np.empty(1)
    d2 = np.empty(1)
    d3 = np.empty(1, dtype=np.bool_)
    d4 = np.empty(1)
    d5 = np.empty(1)
    for r in range(reps.shape[0]):
        acc, na, nj, te, c, st = synth_one(alpha, rate_jump, rate_cont, eps, beta, c_plus, delta, lam, fk, fp0, fp1,
                                           t_end, out_dt, n_out, dtmax, h, zoom, tcap, k0, k1, reps[r], ox, op, osb,
                                           d1, d2, d3, d4, d5, 0)
        for i in range(probe_idx.shape[0]):
            res_x[r, i] = ox[probe_idx[i]]
            res_phi[r, i] = op[probe_idx[i]]
            res_sub[r, i] = osb[probe_idx[i]]
        res_int[r] = acc
        res_atoms[r] = na
        res_jumps[r] = nj
        res_teff[r] = te
        for k in range(h_probes.shape[0]):
            cnt = 0
            for i in range(1, n_out + 1):
                if abs(ox[i]) <= h_probes[k]:
                    cnt += 1
            res_soj[r, k] = cnt
