"""Numba kernels for the Metropolis-within-Gibbs sampler.

Everything here operates in place on plain arrays; the public inference
API wraps these with typed state objects.  Trajectory arrays have
``T + 1`` rows (row 0 = pre-survey state).  Rate arrays are aligned so
row t parameterizes the transition into month t.

Site-level Metropolis updates evaluate only the factors a site touches:
its own transition (or initial-prior) term, the terms at t+1 where it is
a parent pool, the same-month newborn term for the conceiving female
slots, and the observation/aerial intensity layers for its class.  When
a class total crosses zero the intensity must cross its atom at zero, so
those moves jointly propose a fresh intensity from its conditional Gamma
with the matching Hastings correction.
"""

import math

import numpy as np
from numba import njit

NEG_INF = float("-inf")

# slot-kind codes for the sweep
_NW, _Q, _H, _AF, _AM, _NAF, _NAM = 0, 1, 2, 3, 4, 5, 6


@njit(cache=True)
def seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def _binom_lpmf(k, n, p):
    if n < 0 or k < 0 or k > n:
        return NEG_INF
    if n == 0:
        return 0.0
    return (math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
            + k * math.log(p) + (n - k) * math.log1p(-p))


@njit(cache=True)
def _recruit_lpmf(nf, nm, pool, share, surv):
    if pool < 0 or nf < 0 or nm < 0 or nf + nm > pool:
        return NEG_INF
    dead = pool - nf - nm
    return (math.lgamma(pool + 1.0) - math.lgamma(nf + 1.0) - math.lgamma(nm + 1.0)
            - math.lgamma(dead + 1.0)
            + nf * math.log(share * surv) + nm * math.log((1.0 - share) * surv)
            + dead * math.log1p(-surv))


@njit(cache=True)
def _pois_lpmf(k, lam):
    if k < 0:
        return NEG_INF
    if lam == 0.0:
        return 0.0 if k == 0 else NEG_INF
    return k * math.log(lam) - lam - math.lgamma(k + 1.0)


@njit(cache=True)
def _gamma_lpdf(x, shape, rate):
    if x <= 0.0 or shape <= 0.0 or rate <= 0.0:
        return NEG_INF
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x


@njit(cache=True)
def _norm_lpdf(x, mu, var):
    return -0.5 * (x - mu) * (x - mu) / var - 0.5 * math.log(2.0 * math.pi * var)


@njit(cache=True)
def _beta_lpdf(x, a, b):
    if x <= 0.0 or x >= 1.0:
        return NEG_INF
    return ((a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)
            + math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))


# ---------------------------------------------------------------------------
# local transition factors per slot kind
# ---------------------------------------------------------------------------

@njit(cache=True)
def _lp_nw(nw, q, af, rr, sq, sa, m_nw, ivar, t, T):
    if t == 0:
        lp = _norm_lpdf(nw[0], m_nw, ivar) if ivar > 0.0 else 0.0
    else:
        lp = _binom_lpmf(nw[t], af[t, 10] + af[t, 11], rr[t])
    if t < T:
        lp += _binom_lpmf(q[t + 1, 0], nw[t], sq[t + 1])
        lp += _binom_lpmf(af[t + 1, 0], nw[t], sa[t + 1])
        lp += _binom_lpmf(af[t + 1, 11], af[t, 10] + af[t, 11] - nw[t], sa[t + 1])
    return lp


@njit(cache=True)
def _lp_q(nw, q, h, sq, sh, m_q, ivar, t, j, T):
    if t == 0:
        lp = _norm_lpdf(q[0, j], m_q[j], ivar) if ivar > 0.0 else 0.0
    elif j == 0:
        lp = _binom_lpmf(q[t, 0], nw[t - 1], sq[t])
    else:
        lp = _binom_lpmf(q[t, j], q[t - 1, j - 1], sq[t])
    if t < T:
        if j < 4:
            lp += _binom_lpmf(q[t + 1, j + 1], q[t, j], sq[t + 1])
        else:
            lp += _binom_lpmf(h[t + 1, 0], q[t, 4], sh[t + 1])
    return lp


@njit(cache=True)
def _lp_h(q, h, naf, nam, sh, sa, rc, m_h, ivar, t, j, T):
    if t == 0:
        lp = _norm_lpdf(h[0, j], m_h[j], ivar) if ivar > 0.0 else 0.0
    elif j == 0:
        lp = _binom_lpmf(h[t, 0], q[t - 1, 4], sh[t])
    else:
        lp = _binom_lpmf(h[t, j], h[t - 1, j - 1], sh[t])
    if t < T:
        if j < 12:
            lp += _binom_lpmf(h[t + 1, j + 1], h[t, j], sh[t + 1])
        else:
            lp += _recruit_lpmf(naf[t + 1], nam[t + 1], h[t, 12], rc[t + 1], sa[t + 1])
    return lp


@njit(cache=True)
def _lp_af(nw, af, naf, sa, rr, m_af, ivar, t, j, T):
    if t == 0:
        lp = _norm_lpdf(af[0, j], m_af[j], ivar) if ivar > 0.0 else 0.0
    elif j == 0:
        lp = _binom_lpmf(af[t, 0], nw[t - 1], sa[t])
    elif j == 3:
        lp = _binom_lpmf(af[t, 3], af[t - 1, 2] + naf[t - 1], sa[t])
    elif j == 11:
        lp = _binom_lpmf(af[t, 11], af[t - 1, 10] + af[t - 1, 11] - nw[t - 1], sa[t])
    else:
        lp = _binom_lpmf(af[t, j], af[t - 1, j - 1], sa[t])
    if t >= 1 and j >= 10:
        # conceiving slots feed the same-month newborn pool
        lp += _binom_lpmf(nw[t], af[t, 10] + af[t, 11], rr[t])
    if t < T:
        if j == 2:
            lp += _binom_lpmf(af[t + 1, 3], af[t, 2] + naf[t], sa[t + 1])
        elif j >= 10:
            lp += _binom_lpmf(af[t + 1, 11], af[t, 10] + af[t, 11] - nw[t], sa[t + 1])
        else:
            lp += _binom_lpmf(af[t + 1, j + 1], af[t, j], sa[t + 1])
    return lp


@njit(cache=True)
def _lp_am(am, nam, sm, m_am, ivar, t, T):
    if t == 0:
        lp = _norm_lpdf(am[0], m_am, ivar) if ivar > 0.0 else 0.0
    else:
        lp = _binom_lpmf(am[t], am[t - 1] + nam[t - 1], sm[t])
    if t < T:
        lp += _binom_lpmf(am[t + 1], am[t] + nam[t], sm[t + 1])
    return lp


@njit(cache=True)
def _lp_naf(h, af, naf, nam, sa, rc, t, T):
    lp = _recruit_lpmf(naf[t], nam[t], h[t - 1, 12], rc[t], sa[t])
    if t < T:
        lp += _binom_lpmf(af[t + 1, 3], af[t, 2] + naf[t], sa[t + 1])
    return lp


@njit(cache=True)
def _lp_nam(h, am, naf, nam, sa, sm, rc, t, T):
    lp = _recruit_lpmf(naf[t], nam[t], h[t - 1, 12], rc[t], sa[t])
    if t < T:
        lp += _binom_lpmf(am[t + 1], am[t] + nam[t], sm[t + 1])
    return lp


@njit(cache=True)
def _intensity_delta(shape0, rate0, shape1, rate1, y, l_cur):
    """Observation-layer log-ratio for a latent-total move.

    Returns (delta, new_lambda, replace).  Zero shapes mark the atom at
    zero intensity; crossing it pairs the move with a conditional Gamma
    draw (or collapse) and the matching proposal-density correction.
    """
    if shape0 > 0.0 and shape1 > 0.0:
        d = _gamma_lpdf(l_cur, shape1, rate1) - _gamma_lpdf(l_cur, shape0, rate0)
        return d, l_cur, False
    if shape0 == 0.0 and shape1 > 0.0:
        if l_cur != 0.0 or y > 0:
            return NEG_INF, l_cur, False
        l_new = np.random.gamma(shape1 + y, 1.0 / (rate1 + 1.0))
        d = (_gamma_lpdf(l_new, shape1, rate1) + _pois_lpmf(y, l_new)
             - _gamma_lpdf(l_new, shape1 + y, rate1 + 1.0))
        return d, l_new, True
    if shape0 > 0.0 and shape1 == 0.0:
        if y > 0:
            return NEG_INF, l_cur, False
        d = (_gamma_lpdf(l_cur, shape0 + y, rate0 + 1.0)
             - _gamma_lpdf(l_cur, shape0, rate0) - _pois_lpmf(y, l_cur))
        return d, 0.0, True
    return 0.0, l_cur, False


@njit(cache=True)
def _class_total(nw, q, h, af, am, cls, t):
    if cls == 0:
        return nw[t]
    if cls == 1:
        s = 0
        for j in range(5):
            s += q[t, j]
        return s
    if cls == 2:
        s = 0
        for j in range(13):
            s += h[t, j]
        return s
    if cls == 3:
        s = 0
        for j in range(12):
            s += af[t, j]
        return s
    return am[t]


@njit(cache=True)
def _ground_total(nw, q, h, af, am, t):
    s = nw[t] + am[t]
    for j in range(5):
        s += q[t, j]
    for j in range(13):
        s += h[t, j]
    for j in range(12):
        s += af[t, j]
    return s


@njit(cache=True)
def latent_sweep(nw, q, h, af, am, naf, nam,
                 rr, sq, sh, sa, sm, rc,
                 obs, lam, ovar,
                 svy_idx, svy_total, kv, lamT, asd, apow,
                 m_nw, m_q, m_h, m_af, m_am, ivar,
                 step):
    """One single-site Metropolis sweep over every latent slot and month.

    Mutates the trajectory and intensity arrays in place; returns
    (proposals, accepts).
    """
    T = nw.shape[0] - 1
    asd2 = asd * asd
    proposals = 0
    accepts = 0
    t_start = 0 if ivar > 0.0 else 1
    for t in range(t_start, T + 1):
        for kind in range(7):
            if t == 0 and kind >= 5:
                continue  # recruits in transit are pinned at zero pre-survey
            nslots = 1
            if kind == _Q:
                nslots = 5
            elif kind == _H:
                nslots = 13
            elif kind == _AF:
                nslots = 12
            for j in range(nslots):
                # current value
                if kind == _NW:
                    v = nw[t]
                elif kind == _Q:
                    v = q[t, j]
                elif kind == _H:
                    v = h[t, j]
                elif kind == _AF:
                    v = af[t, j]
                elif kind == _AM:
                    v = am[t]
                elif kind == _NAF:
                    v = naf[t]
                else:
                    v = nam[t]

                mag = 1 + np.random.randint(0, step)
                if np.random.random() < 0.5:
                    delta = mag
                else:
                    delta = -mag
                proposals += 1
                v_new = v + delta
                if v_new < 0:
                    continue

                # observation / aerial factors from class and ground totals
                d_obs = 0.0
                lam_new = 0.0
                lam_replace = False
                lamT_new = 0.0
                lamT_replace = False
                sj = -1
                if kind <= _AM and t >= 1:
                    cls = 0
                    if kind == _Q:
                        cls = 1
                    elif kind == _H:
                        cls = 2
                    elif kind == _AF:
                        cls = 3
                    elif kind == _AM:
                        cls = 4
                    y = obs[cls, t]
                    if y >= 0:
                        x0 = float(_class_total(nw, q, h, af, am, cls, t))
                        x1 = x0 + delta
                        dd, lam_new, lam_replace = _intensity_delta(
                            x0 * x0 / ovar, x0 / ovar,
                            x1 * x1 / ovar, x1 / ovar,
                            y, lam[cls, t])
                        d_obs += dd
                    sj = svy_idx[t]
                    if sj >= 0 and d_obs > NEG_INF:
                        b0 = float(_ground_total(nw, q, h, af, am, t))
                        b1 = b0 + delta
                        kb0 = kv[sj] * b0
                        kb1 = kv[sj] * b1
                        if apow == 1:
                            r0, r1 = kb0 / asd, kb1 / asd
                        else:
                            r0, r1 = kb0 / asd2, kb1 / asd2
                        dd, lamT_new, lamT_replace = _intensity_delta(
                            kb0 * kb0 / asd2, r0, kb1 * kb1 / asd2, r1,
                            svy_total[sj], lamT[sj])
                        d_obs += dd
                if d_obs == NEG_INF:
                    continue

                # transition factors by write-evaluate-revert
                if kind == _NW:
                    lp0 = _lp_nw(nw, q, af, rr, sq, sa, m_nw, ivar, t, T)
                    nw[t] = v_new
                    lp1 = _lp_nw(nw, q, af, rr, sq, sa, m_nw, ivar, t, T)
                elif kind == _Q:
                    lp0 = _lp_q(nw, q, h, sq, sh, m_q, ivar, t, j, T)
                    q[t, j] = v_new
                    lp1 = _lp_q(nw, q, h, sq, sh, m_q, ivar, t, j, T)
                elif kind == _H:
                    lp0 = _lp_h(q, h, naf, nam, sh, sa, rc, m_h, ivar, t, j, T)
                    h[t, j] = v_new
                    lp1 = _lp_h(q, h, naf, nam, sh, sa, rc, m_h, ivar, t, j, T)
                elif kind == _AF:
                    lp0 = _lp_af(nw, af, naf, sa, rr, m_af, ivar, t, j, T)
                    af[t, j] = v_new
                    lp1 = _lp_af(nw, af, naf, sa, rr, m_af, ivar, t, j, T)
                elif kind == _AM:
                    lp0 = _lp_am(am, nam, sm, m_am, ivar, t, T)
                    am[t] = v_new
                    lp1 = _lp_am(am, nam, sm, m_am, ivar, t, T)
                elif kind == _NAF:
                    lp0 = _lp_naf(h, af, naf, nam, sa, rc, t, T)
                    naf[t] = v_new
                    lp1 = _lp_naf(h, af, naf, nam, sa, rc, t, T)
                else:
                    lp0 = _lp_nam(h, am, naf, nam, sa, sm, rc, t, T)
                    nam[t] = v_new
                    lp1 = _lp_nam(h, am, naf, nam, sa, sm, rc, t, T)

                log_ratio = lp1 - lp0 + d_obs
                accept = False
                if log_ratio >= 0.0:
                    accept = True
                elif log_ratio > NEG_INF:
                    if math.log(np.random.random()) < log_ratio:
                        accept = True

                if accept:
                    accepts += 1
                    if lam_replace:
                        cls = 0
                        if kind == _Q:
                            cls = 1
                        elif kind == _H:
                            cls = 2
                        elif kind == _AF:
                            cls = 3
                        elif kind == _AM:
                            cls = 4
                        lam[cls, t] = lam_new
                    if lamT_replace and sj >= 0:
                        lamT[sj] = lamT_new
                else:
                    # revert
                    if kind == _NW:
                        nw[t] = v
                    elif kind == _Q:
                        q[t, j] = v
                    elif kind == _H:
                        h[t, j] = v
                    elif kind == _AF:
                        af[t, j] = v
                    elif kind == _AM:
                        am[t] = v
                    elif kind == _NAF:
                        naf[t] = v
                    else:
                        nam[t] = v
    return proposals, accepts


@njit(cache=True)
def lam_gibbs(nw, q, h, af, am, obs, lam, ovar):
    """Exact conjugate draw of every ground intensity given counts and totals."""
    T = nw.shape[0] - 1
    for t in range(1, T + 1):
        for cls in range(5):
            y = obs[cls, t]
            if y < 0:
                continue
            x = float(_class_total(nw, q, h, af, am, cls, t))
            if x > 0.0:
                shape = x * x / ovar + y
                rate = x / ovar + 1.0
                lam[cls, t] = np.random.gamma(shape, 1.0 / rate)
            else:
                lam[cls, t] = 0.0


@njit(cache=True)
def lamT_gibbs(b_svy, svy_total, kv, lamT, asd, apow):
    """Exact conjugate draw of every aerial intensity."""
    asd2 = asd * asd
    for jj in range(kv.shape[0]):
        kb = kv[jj] * b_svy[jj]
        if kb > 0.0:
            rate = kb / asd if apow == 1 else kb / asd2
            lamT[jj] = np.random.gamma(kb * kb / asd2 + svy_total[jj], 1.0 / (rate + 1.0))
        else:
            lamT[jj] = 0.0


@njit(cache=True)
def _clamped_expit(x):
    if x >= 0.0:
        p = 1.0 / (1.0 + math.exp(-x))
    else:
        e = math.exp(x)
        p = e / (1.0 + e)
    if p < 1e-12:
        p = 1e-12
    elif p > 1.0 - 1e-12:
        p = 1.0 - 1e-12
    return p


@njit(cache=True)
def _block_rates(X, g, code, dry, dry_factor, male_factor, out1, out2):
    """Monthly rates for one coefficient block into out1 (and out2 for males)."""
    T1 = X.shape[0]
    p = g.shape[0]
    for t in range(1, T1):
        eta = 0.0
        for i in range(p):
            eta += X[t, i] * g[i]
        r = _clamped_expit(eta)
        if code == 1 or code == 2 or code == 3:
            if dry[t]:
                r = 1.0 - dry_factor * (1.0 - r)
                if r > 1.0 - 1e-12:
                    r = 1.0 - 1e-12
        out1[t] = r
        if code == 3:
            sm_t = male_factor * r
            if sm_t < 1e-12:
                sm_t = 1e-12
            elif sm_t > 1.0 - 1e-12:
                sm_t = 1.0 - 1e-12
            out2[t] = sm_t


@njit(cache=True)
def _block_loglik(rates1, rates2, code, succ1, fail1, succ2, fail2):
    T1 = rates1.shape[0]
    lp = 0.0
    for t in range(1, T1):
        r = rates1[t]
        lp += succ1[t] * math.log(r) + fail1[t] * math.log1p(-r)
        if code == 3:
            s = rates2[t]
            lp += succ2[t] * math.log(s) + fail2[t] * math.log1p(-s)
    return lp


@njit(cache=True)
def gamma_block_step(X, g, prior_mu, prior_sd, scales, mult,
                     code, dry, dry_factor, male_factor,
                     succ1, fail1, succ2, fail2,
                     rate_out1, rate_out2, n_reps):
    """Additive-transformation Metropolis moves for a coefficient block.

    Each move draws a single half-normal innovation with independent
    random signs so every coordinate shifts at once; acceptance is
    all-or-nothing.  On accept, the block and its realized monthly rate
    arrays are updated in place.  Returns the number of accepted moves.
    """
    p = g.shape[0]
    T1 = X.shape[0]
    accepts = 0
    g_new = np.empty(p)
    r1_new = np.empty(T1)
    r2_new = np.empty(T1)
    lp_old = _block_loglik(rate_out1, rate_out2, code, succ1, fail1, succ2, fail2)
    for i in range(p):
        zo = (g[i] - prior_mu[i]) / prior_sd[i]
        lp_old -= 0.5 * zo * zo
    for _ in range(n_reps):
        eps = abs(np.random.normal())
        for i in range(p):
            s = 1.0 if np.random.random() < 0.5 else -1.0
            g_new[i] = g[i] + s * scales[i] * mult * eps

        _block_rates(X, g_new, code, dry, dry_factor, male_factor, r1_new, r2_new)
        lp_new = _block_loglik(r1_new, r2_new, code, succ1, fail1, succ2, fail2)
        for i in range(p):
            zn = (g_new[i] - prior_mu[i]) / prior_sd[i]
            lp_new -= 0.5 * zn * zn

        log_ratio = lp_new - lp_old
        accept = False
        if log_ratio >= 0.0:
            accept = True
        elif log_ratio > NEG_INF:
            if math.log(np.random.random()) < log_ratio:
                accept = True
        if accept:
            accepts += 1
            lp_old = lp_new
            for i in range(p):
                g[i] = g_new[i]
            for t in range(1, T1):
                rate_out1[t] = r1_new[t]
                if code == 3:
                    rate_out2[t] = r2_new[t]
    return accepts


@njit(cache=True)
def _sigma2_loglik(nw, q, h, af, am, obs, lam, s2):
    T = nw.shape[0] - 1
    lp = 0.0
    for t in range(1, T + 1):
        for cls in range(5):
            if obs[cls, t] < 0:
                continue
            x = float(_class_total(nw, q, h, af, am, cls, t))
            if x > 0.0:
                lp += _gamma_lpdf(lam[cls, t], x * x / s2, x / s2)
    return lp


@njit(cache=True)
def sigma2_step(nw, q, h, af, am, obs, lam, s2_cur,
                prior_shape, prior_rate, stepsize):
    """Random-walk Metropolis on log(obs_var); returns (value, accepted)."""
    log_new = math.log(s2_cur) + stepsize * np.random.normal()
    s2_new = math.exp(log_new)
    lp_new = (_sigma2_loglik(nw, q, h, af, am, obs, lam, s2_new)
              + _gamma_lpdf(s2_new, prior_shape, prior_rate) + log_new)
    lp_old = (_sigma2_loglik(nw, q, h, af, am, obs, lam, s2_cur)
              + _gamma_lpdf(s2_cur, prior_shape, prior_rate) + math.log(s2_cur))
    log_ratio = lp_new - lp_old
    if log_ratio >= 0.0 or (log_ratio > NEG_INF and math.log(np.random.random()) < log_ratio):
        return s2_new, 1
    return s2_cur, 0


@njit(cache=True)
def k_steps(b_svy, svy_total, kv, lamT, asd, apow, a, b, stepsize):
    """Per-survey Metropolis on logit(K); returns number accepted."""
    asd2 = asd * asd
    accepts = 0
    for jj in range(kv.shape[0]):
        k0 = kv[jj]
        u0 = math.log(k0) - math.log1p(-k0)
        u1 = u0 + stepsize * np.random.normal()
        k1 = 1.0 / (1.0 + math.exp(-u1))
        if k1 <= 0.0 or k1 >= 1.0:
            continue
        bt = b_svy[jj]
        if bt > 0:
            kb0 = k0 * bt
            kb1 = k1 * bt
            r0 = kb0 / asd if apow == 1 else kb0 / asd2
            r1 = kb1 / asd if apow == 1 else kb1 / asd2
            lp0 = _gamma_lpdf(lamT[jj], kb0 * kb0 / asd2, r0)
            lp1 = _gamma_lpdf(lamT[jj], kb1 * kb1 / asd2, r1)
        else:
            lp0 = 0.0
            lp1 = 0.0
        lp0 += _beta_lpdf(k0, a, b) + math.log(k0) + math.log1p(-k0)
        lp1 += _beta_lpdf(k1, a, b) + math.log(k1) + math.log1p(-k1)
        log_ratio = lp1 - lp0
        if log_ratio >= 0.0 or (log_ratio > NEG_INF and math.log(np.random.random()) < log_ratio):
            kv[jj] = k1
            accepts += 1
    return accepts
