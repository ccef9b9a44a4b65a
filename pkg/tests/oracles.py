"""Independent reference implementations used to check the library.

Each oracle is written from the definition, not from the library code: DST by
enumerating focal-set pairs, statistics via the ``statistics`` module, AHP via
a dense eigen-decomposition.
"""
import itertools
import math
import statistics

import numpy as np

CACHE = frozenset({"C"})
EVICT = frozenset({"E"})
THETA = frozenset({"C", "E"})


def masses(score, eps=0.0):
    return {CACHE: (1 - eps) * score, EVICT: (1 - eps) * (1 - score), THETA: eps}


def dempster(m1, m2):
    """Dempster's rule over arbitrary focal sets; returns (combined dict, K) or (None, K)."""
    joint = {}
    conflict = 0.0
    for (a, x), (b, y) in itertools.product(m1.items(), m2.items()):
        inter = a & b
        if not inter:
            conflict += x * y
        else:
            joint[inter] = joint.get(inter, 0.0) + x * y
    norm = sum(joint.values())  # = 1 - K
    if norm < 1e-9:
        return None, conflict
    return {k: v / norm for k, v in joint.items()}, conflict


def closed_form(poa, cf):
    """Two-singleton specialisation (no mass on the whole frame)."""
    k = poa * (1 - cf) + (1 - poa) * cf
    return poa * cf / (1 - k), (1 - poa) * (1 - cf) / (1 - k), k


def cf(delta_t, lam):
    return math.exp(-lam * delta_t)


def thresholds(scores, kappa):
    mu = statistics.fmean(scores)
    sd = statistics.pstdev(scores)
    clamp = lambda v: min(1.0, max(0.0, v))  # noqa: E731
    return clamp(mu - kappa * sd), clamp(mu - 2 * kappa * sd)


def poa(h, sum_h, q, n, alpha):
    hist = h / sum_h if sum_h else 0.0
    rec = q / n if n else 0.0
    return alpha * hist + (1 - alpha) * rec


def utility(sub, weights):
    return sum(w * min(1.0, max(0.0, u)) for w, u in zip(weights, sub))


def priority(u, p, beta):
    return beta * u + (1 - beta) * p


def ucb(mean, n, t):
    return math.inf if n == 0 else mean + math.sqrt(2 * math.log(t) / n)


def ahp(matrix):
    """Principal eigenvector (normalised to sum 1) and consistency ratio."""
    a = np.asarray(matrix, dtype=float)
    vals, vecs = np.linalg.eig(a)
    k = int(np.argmax(vals.real))
    v = np.abs(vecs[:, k].real)
    m = a.shape[0]
    ri = {1: 0.0, 2: 0.0, 3: 0.58, 4: 0.90, 5: 1.12, 6: 1.24, 7: 1.32, 8: 1.41, 9: 1.45, 10: 1.49}[m]
    cr = 0.0 if ri == 0 else (vals[k].real - m) / ((m - 1) * ri)
    return v / v.sum(), cr
