"""Freshness decay, belief masses over {Cache, Evict} and decision thresholds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .kernels import CONFLICT_EPS

_SUM_TOL = 1e-9


class EvidenceError(ValueError):
    pass


@dataclass(frozen=True)
class MassFunction:
    """Basic belief assignment on the frame {Cache, Evict}.

    ``theta`` is the mass on the whole frame, i.e. uncommitted belief.
    """

    cache: float
    evict: float
    theta: float = 0.0

    def __post_init__(self):
        if min(self.cache, self.evict, self.theta) < -_SUM_TOL:
            raise EvidenceError(f"negative mass in {self}")
        if abs(self.cache + self.evict + self.theta - 1.0) > _SUM_TOL:
            raise EvidenceError(f"masses must sum to 1, got {self}")


class _Undecidable:
    """Sentinel returned when the two evidence sources totally conflict."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "UNDECIDABLE"

    def __bool__(self):
        return False


UNDECIDABLE = _Undecidable()


@dataclass(frozen=True)
class Thresholds:
    update: float
    evict: float

    def __post_init__(self):
        if self.evict > self.update + 1e-15:
            raise EvidenceError(f"evict threshold {self.evict} above update threshold {self.update}")


def compute_cf(delta_t: float, lam: float) -> float:
    """Context freshness ``exp(-lam * delta_t)``; ``delta_t`` in ms, ``lam`` in 1/ms."""
    if delta_t < 0 or lam < 0:
        raise EvidenceError(f"delta_t and lambda must be non-negative (got {delta_t}, {lam})")
    return math.exp(-lam * delta_t)


def decay_for_lifetime(validity_lifetime: float, cf_at_expiry: float = 0.5) -> float:
    """Decay constant that makes freshness equal ``cf_at_expiry`` at the end of the lifetime."""
    if validity_lifetime <= 0:
        raise EvidenceError("validity_lifetime must be positive")
    if not 0.0 < cf_at_expiry < 1.0:
        raise EvidenceError("cf_at_expiry must lie in (0, 1)")
    if math.isinf(validity_lifetime):
        return 0.0
    return -math.log(cf_at_expiry) / validity_lifetime


def assign_masses(score: float, epsilon: float = 0.0) -> MassFunction:
    if not 0.0 <= score <= 1.0:
        raise EvidenceError(f"score must lie in [0, 1], got {score}")
    if not 0.0 <= epsilon < 1.0:
        raise EvidenceError(f"epsilon must lie in [0, 1), got {epsilon}")
    return MassFunction((1.0 - epsilon) * score, (1.0 - epsilon) * (1.0 - score), epsilon)


def combine_dst(m_poa: MassFunction, m_cf: MassFunction):
    """Dempster's rule of combination on the two-element frame.

    Returns ``(combined, conflict)``.  ``combined`` is :data:`UNDECIDABLE` when
    ``1 - conflict`` drops below 1e-9.
    """
    a1, b1, t1 = m_poa.cache, m_poa.evict, m_poa.theta
    a2, b2, t2 = m_cf.cache, m_cf.evict, m_cf.theta
    k = a1 * b2 + b1 * a2
    cache = a1 * a2 + a1 * t2 + t1 * a2
    evict = b1 * b2 + b1 * t2 + t1 * b2
    theta = t1 * t2
    # equals 1 - k, summed from the agreeing products to keep precision near k = 1
    norm = cache + evict + theta
    if norm < CONFLICT_EPS:
        return UNDECIDABLE, k
    combined = MassFunction(cache / norm, evict / norm, theta / norm)
    return combined, k


def combine_weighted(poa_score: float, cf_score: float, w_poa: float = 0.5, w_cf: float = 0.5) -> float:
    """Weighted-sum alternative to the DST combination; returns a scalar belief."""
    return w_poa * poa_score + w_cf * cf_score


def compute_thresholds(cf_scores: Sequence[float], kappa: float = 0.5) -> Thresholds:
    if len(cf_scores) == 0:
        raise EvidenceError("cannot derive thresholds from an empty score list")
    if kappa <= 0:
        raise EvidenceError("kappa must be positive")
    n = len(cf_scores)
    mu = math.fsum(cf_scores) / n
    sigma = math.sqrt(math.fsum((c - mu) ** 2 for c in cf_scores) / n)
    clamp = lambda v: min(1.0, max(0.0, v))  # noqa: E731
    return Thresholds(clamp(mu - kappa * sigma), clamp(mu - 2.0 * kappa * sigma))
