"""Context evaluation: AHP-derived weights, multi-attribute utility, probability
of access and the combined priority ranking."""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels

ATTRIBUTES = ("poa", "qos", "coc", "qoc", "sla", "timeliness", "provider_type")
COST_ATTRIBUTES = frozenset({"coc"})

# Saaty's random consistency index, indexed by matrix order
RANDOM_INDEX = {1: 0.0, 2: 0.0, 3: 0.58, 4: 0.90, 5: 1.12, 6: 1.24, 7: 1.32, 8: 1.41, 9: 1.45, 10: 1.49}

_RECIPROCAL_TOL = 1e-9


class EvaluationError(ValueError):
    pass


class InconsistentJudgementWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AccessStats:
    historical: float
    recent: float
    window_total: float

    def __post_init__(self):
        if min(self.historical, self.recent, self.window_total) < 0:
            raise EvaluationError("access counts must be non-negative")
        if self.recent > self.window_total:
            raise EvaluationError("recent count exceeds window total")


def check_weights(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise EvaluationError(f"negative weight in {w.tolist()}")
    if abs(w.sum() - 1.0) > 1e-9:
        raise EvaluationError(f"weights must sum to 1, got {w.sum()!r}")
    return w


# --------------------------------------------------------------------------
# AHP
# --------------------------------------------------------------------------

def ahp_weights(matrix, tol: float = 1e-10, max_iter: int = 10_000):
    """Principal-eigenvector weights of a pairwise comparison matrix.

    Returns ``(weights, consistency_ratio)``.  A ratio above 0.1 triggers an
    :class:`InconsistentJudgementWarning` rather than an error.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise EvaluationError(f"AHP matrix must be square and non-empty, got shape {a.shape}")
    m = a.shape[0]
    if m > 10:
        raise EvaluationError("random index table only covers matrices up to 10x10")
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise EvaluationError("AHP matrix entries must be positive and finite")
    if np.any(np.abs(a * a.T - 1.0) > _RECIPROCAL_TOL):
        raise EvaluationError("AHP matrix is not reciprocal (a[i][j] * a[j][i] != 1)")

    w = np.full(m, 1.0 / m)
    for _ in range(max_iter):
        nxt = a @ w
        nxt /= nxt.sum()
        delta = np.abs(nxt - w).sum()
        w = nxt
        if delta < tol:
            break
    lam_max = float(np.mean((a @ w) / w))
    ri = RANDOM_INDEX[m]
    cr = 0.0 if ri == 0.0 else max(0.0, (lam_max - m) / ((m - 1) * ri))
    if cr > 0.1:
        warnings.warn(f"AHP consistency ratio {cr:.3f} exceeds 0.1", InconsistentJudgementWarning, stacklevel=2)
    return w, cr


def consistent_matrix(priorities: Sequence[float]) -> np.ndarray:
    """Perfectly consistent comparison matrix ``a[i][j] = v_i / v_j``."""
    v = np.asarray(priorities, dtype=float)
    return v[:, None] / v[None, :]


# --------------------------------------------------------------------------
# MAUT utility
# --------------------------------------------------------------------------

def normalize(raw: float, lo: float, hi: float, cost: bool = False) -> float:
    """Clamp-normalise ``raw`` into [0, 1]; a degenerate range maps to 0.5."""
    if hi == lo:
        u = 0.5
    else:
        u = min(1.0, max(0.0, (raw - lo) / (hi - lo)))
    return 1.0 - u if cost else u


def compute_utility(attrs: Mapping[str, float], weights: Mapping[str, float],
                    ranges: Mapping[str, tuple] | None = None) -> float:
    """Weighted sum of normalised sub-utilities over the attributes in ``weights``."""
    names = list(weights)
    w = check_weights([weights[n] for n in names])
    total = 0.0
    for wj, name in zip(w, names):
        if name not in attrs:
            raise EvaluationError(f"missing utility attribute {name!r}")
        lo, hi = (ranges or {}).get(name, (0.0, 1.0))
        total += wj * normalize(attrs[name], lo, hi, cost=name in COST_ATTRIBUTES)
    return min(1.0, max(0.0, total))


def utility_from_subutilities(sub_utilities: Sequence[float], weights: Sequence[float]) -> float:
    w = check_weights(weights)
    u = np.asarray(sub_utilities, dtype=float)
    if u.shape != w.shape:
        raise EvaluationError("one sub-utility per weight required")
    return float(np.dot(w, np.clip(u, 0.0, 1.0)))


# --------------------------------------------------------------------------
# probability of access
# --------------------------------------------------------------------------

def compute_poa(stats: AccessStats, all_historical: float, alpha: float = 0.5) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise EvaluationError(f"alpha must lie in [0, 1], got {alpha}")
    hist = stats.historical / all_historical if all_historical > 0 else 0.0
    recent = stats.recent / stats.window_total if stats.window_total > 0 else 0.0
    return alpha * hist + (1.0 - alpha) * recent


def total_queries(item_id: str, query_counts: Mapping[str, int], inputs_used: Iterable[str]) -> int:
    """Direct queries for an item plus the queries on every attribute it is inferred from."""
    return query_counts.get(item_id, 0) + sum(query_counts.get(a, 0) for a in set(inputs_used))


def poa_evidence(poa, rate_per_ms: float, horizon_ms, mode: str = "horizon"):
    """Map probability of access to a [0, 1] score usable as a belief mass.

    ``horizon``: chance of at least one access within ``horizon_ms`` (scalar or
    per target, e.g. validity lifetimes), with Poisson arrivals at
    ``poa * rate``.  ``relative``: scaled by the largest PoA present.
    ``raw``: PoA unchanged.
    """
    p = np.asarray(poa, dtype=float)
    if mode == "raw":
        return np.clip(p, 0.0, 1.0)
    if mode == "relative":
        top = p.max() if p.size else 0.0
        return p / top if top > 0 else np.zeros_like(p)
    if mode == "horizon":
        h = np.broadcast_to(np.asarray(horizon_ms, dtype=float), p.shape)
        expected = np.where(p > 0, p * rate_per_ms * np.where(np.isinf(h), 1e300, h), 0.0)
        return -np.expm1(-expected)
    raise EvaluationError(f"unknown PoA evidence mode {mode!r}")


# --------------------------------------------------------------------------
# priority ranking
# --------------------------------------------------------------------------

def prioritize(ids: Sequence[str], utilities: Sequence[float], poas: Sequence[float],
               beta: float = 0.5) -> list[tuple[str, float]]:
    """``beta * U + (1 - beta) * PoA`` per item, sorted descending, ties by id."""
    if not 0.0 <= beta <= 1.0:
        raise EvaluationError(f"beta must lie in [0, 1], got {beta}")
    scored = [(i, beta * u + (1.0 - beta) * p) for i, u, p in zip(ids, utilities, poas)]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored


# --------------------------------------------------------------------------
# access bookkeeping
# --------------------------------------------------------------------------

class AccessTracker:
    """Historical and sliding-window query counters over a fixed target universe.

    ``propagate[i]`` lists every target index whose counters a query on ``i``
    bumps (itself plus the items inferred from it), which is how indirect
    demand reaches an item's PoA.
    """

    def __init__(self, n_targets: int, window_ms: float, propagate: Sequence[Sequence[int]] | None = None):
        self.window_ms = float(window_ms)
        self.historical = np.zeros(n_targets)
        self.recent = np.zeros(n_targets)
        self.direct = np.zeros(n_targets, dtype=np.int64)
        self.window_total = 0
        self.total_direct = 0
        self.historical_total = 0.0
        self._propagate = [list(p) for p in propagate] if propagate is not None else [[i] for i in range(n_targets)]
        self._window = deque()

    def record(self, target: int, now: float) -> None:
        idx = self._propagate[target]
        self.historical[idx] += 1
        self.historical_total += len(idx)
        self.recent[idx] += 1
        self.direct[target] += 1
        self.window_total += 1
        self.total_direct += 1
        self._window.append((now, target))

    def expire(self, now: float) -> None:
        cutoff = now - self.window_ms
        win = self._window
        while win and win[0][0] < cutoff:
            _, target = win.popleft()
            self.recent[self._propagate[target]] -= 1
            self.window_total -= 1

    def poa(self, alpha: float) -> np.ndarray:
        return kernels.poa(self.historical, float(self.historical_total), self.recent,
                           float(self.window_total), float(alpha))

    def stats(self, target: int) -> AccessStats:
        return AccessStats(float(self.historical[target]), float(self.recent[target]), float(self.window_total))

    def recent_rate(self, now: float, start: float = 0.0) -> float:
        """Queries per ms over the recent window (or the elapsed time if shorter)."""
        span = min(self.window_ms, now - start)
        if span <= 0 or self.window_total == 0:
            return 0.0
        return self.window_total / span


def ahp_matrix_from_priorities(priorities: Mapping[str, float]) -> tuple[list[str], np.ndarray]:
    names = list(priorities)
    return names, consistent_matrix([priorities[n] for n in names])

