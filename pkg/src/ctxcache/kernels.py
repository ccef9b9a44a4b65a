"""Vectorised hot paths of the decision sweep.

Every kernel exists twice: a ``*_numba`` loop version compiled with
``numba.njit`` and a ``*_numpy`` array version.  The public names bind to one
or the other according to :data:`ctxcache._accel.USE_NUMBA`.  Both are kept
importable so tests and the benchmark can compare them directly.

Decision codes returned by the sweep kernel: ``RETAIN``, ``REFRESH``, ``EVICT``.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

RETAIN = 0
REFRESH = 1
EVICT = 2

# 1 - K below this is total conflict (undecidable).  1 - K is computed as the
# sum of the agreeing products, which avoids cancellation near K = 1.
CONFLICT_EPS = 1e-9

COMBINE_DST = 0
COMBINE_WEIGHTED = 1


# --------------------------------------------------------------------------
# freshness
# --------------------------------------------------------------------------

@njit
def cf_decay_numba(ages, lambdas):
    out = np.empty(ages.shape[0])
    for i in range(ages.shape[0]):
        out[i] = math.exp(-lambdas[i] * ages[i])
    return out


def cf_decay_numpy(ages, lambdas):
    return np.exp(-np.asarray(lambdas, dtype=float) * np.asarray(ages, dtype=float))


# --------------------------------------------------------------------------
# Dempster combination over {Cache, Evict}
# --------------------------------------------------------------------------

@njit
def dst_combine_numba(poa_scores, cf_scores, eps):
    n = poa_scores.shape[0]
    cache = np.empty(n)
    evict = np.empty(n)
    theta = np.empty(n)
    conflict = np.empty(n)
    for i in range(n):
        a1 = (1.0 - eps) * poa_scores[i]
        b1 = (1.0 - eps) * (1.0 - poa_scores[i])
        a2 = (1.0 - eps) * cf_scores[i]
        b2 = (1.0 - eps) * (1.0 - cf_scores[i])
        k = a1 * b2 + b1 * a2
        conflict[i] = k
        c = a1 * a2 + a1 * eps + eps * a2
        e = b1 * b2 + b1 * eps + eps * b2
        norm = c + e + eps * eps
        if norm < CONFLICT_EPS:
            cache[i] = np.nan
            evict[i] = np.nan
            theta[i] = np.nan
        else:
            cache[i] = c / norm
            evict[i] = e / norm
            theta[i] = eps * eps / norm
    return cache, evict, theta, conflict


def dst_combine_numpy(poa_scores, cf_scores, eps):
    p = np.asarray(poa_scores, dtype=float)
    c = np.asarray(cf_scores, dtype=float)
    a1 = (1.0 - eps) * p
    b1 = (1.0 - eps) * (1.0 - p)
    a2 = (1.0 - eps) * c
    b2 = (1.0 - eps) * (1.0 - c)
    conflict = a1 * b2 + b1 * a2
    c_num = a1 * a2 + a1 * eps + eps * a2
    e_num = b1 * b2 + b1 * eps + eps * b2
    norm = c_num + e_num + eps * eps
    bad = norm < CONFLICT_EPS
    safe = np.where(bad, 1.0, norm)
    cache = c_num / safe
    evict = e_num / safe
    theta = np.full_like(p, eps * eps) / safe
    cache[bad] = np.nan
    evict[bad] = np.nan
    theta[bad] = np.nan
    return cache, evict, theta, conflict


# --------------------------------------------------------------------------
# thresholds
# --------------------------------------------------------------------------

@njit
def thresholds_numba(cf_scores, kappa):
    n = cf_scores.shape[0]
    mu = 0.0
    for i in range(n):
        mu += cf_scores[i]
    mu /= n
    var = 0.0
    for i in range(n):
        d = cf_scores[i] - mu
        var += d * d
    sigma = math.sqrt(var / n)
    upd = min(1.0, max(0.0, mu - kappa * sigma))
    ev = min(1.0, max(0.0, mu - 2.0 * kappa * sigma))
    return upd, ev


def thresholds_numpy(cf_scores, kappa):
    cf = np.asarray(cf_scores, dtype=float)
    mu = cf.mean()
    sigma = cf.std()
    upd = min(1.0, max(0.0, mu - kappa * sigma))
    ev = min(1.0, max(0.0, mu - 2.0 * kappa * sigma))
    return float(upd), float(ev)


# --------------------------------------------------------------------------
# fused sweep: CF -> belief -> thresholds -> decision codes
#
# Thresholds live on the freshness scale, so each belief is divided by the
# belief the same entry would have at CF = 1 before it is compared.  With no
# uncertainty mass a fresh belief is 1 and this is the plain comparison.
# --------------------------------------------------------------------------

@njit
def sweep_numba(ages, lambdas, poa_scores, eps, kappa, mode, w_poa, w_cf):
    n = ages.shape[0]
    cf = np.empty(n)
    belief = np.empty(n)
    codes = np.empty(n, dtype=np.int8)
    if n == 0:
        return cf, belief, codes, 0.0, 0.0
    for i in range(n):
        cf[i] = math.exp(-lambdas[i] * ages[i])
    upd, ev = thresholds_numba(cf, kappa)
    for i in range(n):
        if mode == COMBINE_WEIGHTED:
            belief[i] = w_poa * poa_scores[i] + w_cf * cf[i]
        else:
            a1 = (1.0 - eps) * poa_scores[i]
            b1 = (1.0 - eps) * (1.0 - poa_scores[i])
            a2 = (1.0 - eps) * cf[i]
            b2 = (1.0 - eps) * (1.0 - cf[i])
            c = a1 * a2 + a1 * eps + eps * a2
            norm = c + b1 * b2 + b1 * eps + eps * b2 + eps * eps
            if norm < CONFLICT_EPS:
                belief[i] = np.nan
            else:
                belief[i] = c / norm
        # decide on belief relative to the same entry's belief when fresh
        if mode == COMBINE_WEIGHTED:
            fresh = w_poa * poa_scores[i] + w_cf
        else:
            a1 = (1.0 - eps) * poa_scores[i]
            b1 = (1.0 - eps) * (1.0 - poa_scores[i])
            c = a1 * (1.0 - eps) + a1 * eps + eps * (1.0 - eps)
            norm = c + b1 * eps + eps * eps
            fresh = np.nan if norm < CONFLICT_EPS else c / norm
        b = belief[i] / fresh if fresh > 0.0 else np.nan
        if b != b:
            codes[i] = REFRESH
        elif b < ev:
            codes[i] = EVICT
        elif b < upd:
            codes[i] = REFRESH
        else:
            codes[i] = RETAIN
    return cf, belief, codes, upd, ev


def fresh_belief_numpy(poa_scores, eps, mode, w_poa, w_cf):
    """Combined belief an entry would have at freshness 1."""
    p = np.asarray(poa_scores, dtype=float)
    if mode == COMBINE_WEIGHTED:
        return w_poa * p + w_cf
    return dst_combine_numpy(p, np.ones_like(p), eps)[0]


def sweep_numpy(ages, lambdas, poa_scores, eps, kappa, mode, w_poa, w_cf):
    ages = np.asarray(ages, dtype=float)
    n = ages.shape[0]
    if n == 0:
        return np.empty(0), np.empty(0), np.empty(0, dtype=np.int8), 0.0, 0.0
    cf = cf_decay_numpy(ages, lambdas)
    upd, ev = thresholds_numpy(cf, kappa)
    if mode == COMBINE_WEIGHTED:
        belief = w_poa * np.asarray(poa_scores, dtype=float) + w_cf * cf
    else:
        belief = dst_combine_numpy(poa_scores, cf, eps)[0]
    fresh = fresh_belief_numpy(poa_scores, eps, mode, w_poa, w_cf)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(fresh > 0.0, belief / np.where(fresh > 0.0, fresh, 1.0), np.nan)
    codes = np.full(n, RETAIN, dtype=np.int8)
    with np.errstate(invalid="ignore"):
        codes[rel < upd] = REFRESH
        codes[rel < ev] = EVICT
    codes[np.isnan(rel)] = REFRESH
    return cf, belief, codes, upd, ev


# --------------------------------------------------------------------------
# probability of access and bandit scores
# --------------------------------------------------------------------------

@njit
def poa_numba(hist, total_hist, recent, n_recent, alpha):
    out = np.empty(hist.shape[0])
    for i in range(hist.shape[0]):
        v = 0.0
        if total_hist > 0:
            v += alpha * hist[i] / total_hist
        if n_recent > 0:
            v += (1.0 - alpha) * recent[i] / n_recent
        out[i] = v
    return out


def poa_numpy(hist, total_hist, recent, n_recent, alpha):
    hist = np.asarray(hist, dtype=float)
    out = np.zeros(hist.shape[0])
    if total_hist > 0:
        out += alpha * hist / total_hist
    if n_recent > 0:
        out += (1.0 - alpha) * np.asarray(recent, dtype=float) / n_recent
    return out


@njit
def ucb_numba(means, counts, t):
    out = np.empty(means.shape[0])
    log_t = math.log(t)
    for i in range(means.shape[0]):
        if counts[i] == 0:
            out[i] = np.inf
        else:
            out[i] = means[i] + math.sqrt(2.0 * log_t / counts[i])
    return out


def ucb_numpy(means, counts, t):
    counts = np.asarray(counts, dtype=float)
    out = np.full(counts.shape[0], np.inf)
    played = counts > 0
    out[played] = np.asarray(means, dtype=float)[played] + np.sqrt(2.0 * math.log(t) / counts[played])
    return out


if USE_NUMBA:
    cf_decay = cf_decay_numba
    dst_combine = dst_combine_numba
    thresholds = thresholds_numba
    sweep = sweep_numba
    poa = poa_numba
    ucb = ucb_numba
else:
    cf_decay = cf_decay_numpy
    dst_combine = dst_combine_numpy
    thresholds = thresholds_numpy
    sweep = sweep_numpy
    poa = poa_numpy
    ucb = ucb_numpy
