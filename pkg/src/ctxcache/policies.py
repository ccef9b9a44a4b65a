"""Caching policies behind one interface.

Every policy owns a :class:`~ctxcache.cache.CacheStore`, sees the same query
stream and classifies each access through the store's shared expiry rules, so
hit/miss/expired ratios are comparable across policies.
"""
from __future__ import annotations

import heapq
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .cache import CacheAction, CacheEntry, CacheStore, DCMFCache, Outcome
from .context import Corpus
from .evaluation import (ATTRIBUTES, COST_ATTRIBUTES, AccessTracker, ahp_weights, check_weights,
                         normalize, poa_evidence)
from .workload import DEFAULT_UTILITY_RANGES

POLICIES = ("dcmf", "mcac", "mgreedy", "mmyopic", "lru", "lfu")

DEFAULT_MAUT_WEIGHTS = {
    "poa": 0.30, "qos": 0.15, "coc": 0.10, "qoc": 0.15, "sla": 0.10, "timeliness": 0.15, "provider_type": 0.05,
}


class PolicyError(ValueError):
    pass


# --------------------------------------------------------------------------
# target universe
# --------------------------------------------------------------------------

class Universe:
    """Dense integer view of every cacheable id in a corpus."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self.ids = corpus.target_ids()
        self.index = {t: i for i, t in enumerate(self.ids)}
        self.kinds = [corpus.kind_of(t) for t in self.ids]
        self.lifetimes = np.array([corpus.lifetime(t) for t in self.ids], dtype=float)
        self.lambdas = np.array([corpus.decay(t) for t in self.ids], dtype=float)
        n = len(self.ids)
        # a query on an attribute also counts toward every item inferred from it
        dependents: list[list[int]] = [[i] for i in range(n)]
        for item_id in corpus.items:
            j = self.index[item_id]
            for a in sorted(corpus.inputs_used(item_id)):
                dependents[self.index[a]].append(j)
        self.propagate = dependents
        self.id_rank = np.argsort(np.argsort(np.array(self.ids, dtype=object)))

    def __len__(self) -> int:
        return len(self.ids)

    def utility_matrix(self, names: Sequence[str], ranges: Mapping[str, tuple]) -> np.ndarray:
        """Normalised static sub-utilities, one column per name (``poa`` left at 0)."""
        out = np.zeros((len(self.ids), len(names)))
        for i, t in enumerate(self.ids):
            raw = self.corpus.utility(t)
            for j, name in enumerate(names):
                if name == "poa":
                    continue
                lo, hi = ranges.get(name, (0.0, 1.0))
                out[i, j] = normalize(raw.get(name, lo), lo, hi, cost=name in COST_ATTRIBUTES)
        return out


@dataclass
class PolicyParams:
    alpha: float = 0.5
    beta: float = 0.5
    kappa: float = 0.5
    epsilon: float = 0.4
    window_ms: float = 30 * 60_000.0
    combination: str = "dst"
    w_poa: float = 0.5
    w_cf: float = 0.5
    poa_evidence: str = "horizon"
    evidence_horizon_ms: float | None = 1_800_000.0
    mass_source: str = "poa"
    priority_poa: str = "score"
    prefetch: bool = True
    maut_weights: dict | None = None
    ahp: dict | None = None
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_UTILITY_RANGES))
    mcac_alpha: float = 0.5
    mcac_weights: tuple = (0.4, 0.3, 0.2, 0.1)
    mcac_utility_weight: float = 0.25

    # evidence_horizon_ms=None scores each target over its own validity lifetime

    @classmethod
    def from_config(cls, dcmf: Mapping | None = None, mcac: Mapping | None = None) -> "PolicyParams":
        p = cls()
        for k, v in (dcmf or {}).items():
            if not hasattr(p, k):
                raise PolicyError(f"unknown dcmf parameter {k!r}")
            if k == "ranges":
                if v is None:
                    continue
                v = {**DEFAULT_UTILITY_RANGES, **{n: tuple(r) for n, r in v.items()}}
            setattr(p, k, v)
        for k, v in (mcac or {}).items():
            key = {"alpha": "mcac_alpha", "adapted_weights": "mcac_weights",
                   "utility_weight": "mcac_utility_weight"}.get(k)
            if key is None:
                raise PolicyError(f"unknown mcac parameter {k!r}")
            setattr(p, key, tuple(v) if key == "mcac_weights" else v)
        p.validate()
        return p

    def validate(self) -> None:
        for name in ("alpha", "beta", "mcac_alpha", "mcac_utility_weight"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise PolicyError(f"{name} must lie in [0, 1], got {v}")
        if self.kappa <= 0:
            raise PolicyError("kappa must be positive")
        if not 0.0 <= self.epsilon < 1.0:
            raise PolicyError("epsilon must lie in [0, 1)")
        if self.window_ms <= 0:
            raise PolicyError("window_ms must be positive")
        if self.combination not in ("dst", "weighted"):
            raise PolicyError("combination must be 'dst' or 'weighted'")
        if self.poa_evidence not in ("horizon", "relative", "raw"):
            raise PolicyError("poa_evidence must be horizon, relative or raw")
        if self.evidence_horizon_ms is not None and self.evidence_horizon_ms <= 0:
            raise PolicyError("evidence_horizon_ms must be positive")
        if self.priority_poa not in ("score", "raw"):
            raise PolicyError("priority_poa must be 'score' or 'raw'")
        if self.mass_source not in ("poa", "priority"):
            raise PolicyError("mass_source must be 'poa' or 'priority'")
        check_weights(self.mcac_weights)
        if len(self.mcac_weights) != 4:
            raise PolicyError("mcac adapted_weights needs four entries")

    def resolved_maut_weights(self) -> dict:
        """MAUT weights from an explicit mapping, an AHP matrix, or the defaults."""
        if self.ahp is not None:
            names = list(self.ahp["attributes"])
            w, _ = ahp_weights(self.ahp["matrix"])
            weights = dict(zip(names, w.tolist()))
        elif self.maut_weights is not None:
            weights = dict(self.maut_weights)
        else:
            weights = dict(DEFAULT_MAUT_WEIGHTS)
        unknown = set(weights) - set(ATTRIBUTES)
        if unknown:
            raise PolicyError(f"unknown MAUT attributes {sorted(unknown)}")
        check_weights(list(weights.values()))
        return weights


# --------------------------------------------------------------------------
# interface
# --------------------------------------------------------------------------

class Policy:
    name = "base"
    ticks = False

    def __init__(self, universe: Universe, capacity: int):
        self.universe = universe
        self.store = CacheStore(capacity)
        self.admissions = 0
        self.evictions = 0
        self.refreshes = 0
        self.last_admit: list[CacheAction] | None = None

    def _entry(self, target: int, now: float) -> CacheEntry:
        u = self.universe
        return CacheEntry(u.ids[target], target, now, now, now, float(u.lifetimes[target]), float(u.lambdas[target]))

    def on_query(self, target: int, now: float) -> Outcome:
        raise NotImplementedError

    def on_tick(self, now: float) -> list[CacheAction]:
        return []

    def occupancy(self) -> int:
        return self.store.used


class _KeyedHeap:
    """Min-heap over ids with re-keying by lazy invalidation."""

    def __init__(self):
        self._heap = []
        self._key = {}

    def set(self, item_id, key) -> None:
        self._key[item_id] = key
        heapq.heappush(self._heap, (key, item_id))
        if len(self._heap) > 4 * len(self._key) + 64:
            self._heap = [(k, i) for i, k in self._key.items()]
            heapq.heapify(self._heap)

    def discard(self, item_id) -> None:
        self._key.pop(item_id, None)

    def pop_min(self):
        heap = self._heap
        while heap:
            key, item_id = heapq.heappop(heap)
            if self._key.get(item_id) == key:
                del self._key[item_id]
                return item_id, key
        raise KeyError("pop from empty heap")

    def peek_min(self):
        heap = self._heap
        while heap:
            key, item_id = heap[0]
            if self._key.get(item_id) == key:
                return item_id, key
            heapq.heappop(heap)
        return None, None


class _Replacement(Policy):
    """Admit every miss, evicting per :meth:`_victim` when full."""

    def on_query(self, target: int, now: float) -> Outcome:
        item_id = self.universe.ids[target]
        out = self.store.lookup(item_id, now)
        if out is Outcome.MISS:
            if self.store.free < 1:
                victim = self._victim(now)
                self.store.remove(victim)
                self._forget(victim)
                self.evictions += 1
            e = self._entry(target, now)
            e.total_access_count = 1
            self.store.insert(e)
            self.admissions += 1
            self._admitted(e, target, now)
        else:
            self._touched(self.store.entries[item_id], target, now, out)
        return out

    def _victim(self, now: float) -> str:
        raise NotImplementedError

    def _forget(self, item_id: str) -> None:
        pass

    def _admitted(self, e: CacheEntry, target: int, now: float) -> None:
        pass

    def _touched(self, e: CacheEntry, target: int, now: float, out: Outcome) -> None:
        pass


class LRUPolicy(_Replacement):
    name = "lru"

    def __init__(self, universe, capacity):
        super().__init__(universe, capacity)
        self.order: OrderedDict = OrderedDict()

    def _victim(self, now):
        return next(iter(self.order))

    def _forget(self, item_id):
        del self.order[item_id]

    def _admitted(self, e, target, now):
        self.order[e.item_id] = None

    def _touched(self, e, target, now, out):
        self.order.move_to_end(e.item_id)


class MyopicPolicy(LRUPolicy):
    """Recency-driven replacement that first discards already-expired entries.

    Among expired entries the one that expired earliest goes first; with none
    expired it falls back to least-recently-accessed.
    """

    name = "mmyopic"

    def __init__(self, universe, capacity):
        super().__init__(universe, capacity)
        self.expiry = _KeyedHeap()

    def _victim(self, now):
        item_id, key = self.expiry.peek_min()
        if item_id is not None and key[0] < now:
            return item_id
        return next(iter(self.order))

    def _forget(self, item_id):
        super()._forget(item_id)
        self.expiry.discard(item_id)

    def _admitted(self, e, target, now):
        super()._admitted(e, target, now)
        self.expiry.set(e.item_id, (e.last_refreshed + e.lifetime, e.item_id))

    def _touched(self, e, target, now, out):
        super()._touched(e, target, now, out)
        if out is Outcome.EXPIRED:
            self.expiry.set(e.item_id, (e.last_refreshed + e.lifetime, e.item_id))


class LFUPolicy(_Replacement):
    """Evict the entry with the fewest accesses since it was admitted (ties: least recent)."""

    name = "lfu"

    def __init__(self, universe, capacity):
        super().__init__(universe, capacity)
        self.heap = _KeyedHeap()

    def _count(self, e: CacheEntry, target: int) -> int:
        return e.total_access_count

    def _victim(self, now):
        item_id, _ = self.heap.peek_min()
        return item_id

    def _forget(self, item_id):
        self.heap.discard(item_id)

    def _admitted(self, e, target, now):
        self.heap.set(e.item_id, (self._count(e, target), now, e.item_id))

    def _touched(self, e, target, now, out):
        self.heap.set(e.item_id, (self._count(e, target), now, e.item_id))


class GreedyPolicy(LFUPolicy):
    """Keep the items with the largest cumulative demand, counted over the whole
    run rather than since admission."""

    name = "mgreedy"

    def __init__(self, universe, capacity):
        super().__init__(universe, capacity)
        self.demand = np.zeros(len(universe), dtype=np.int64)

    def on_query(self, target, now):
        self.demand[target] += 1
        return super().on_query(target, now)

    def _count(self, e, target):
        return int(self.demand[target])


# --------------------------------------------------------------------------
# DCMF
# --------------------------------------------------------------------------

class DCMFPolicy(Policy):
    name = "dcmf"
    ticks = True

    def __init__(self, universe: Universe, capacity: int, params: PolicyParams | None = None):
        super().__init__(universe, capacity)
        self.params = p = params or PolicyParams()
        p.validate()
        self.store = self.cache = DCMFCache(capacity, kappa=p.kappa, epsilon=p.epsilon, combination=p.combination,
                                            w_poa=p.w_poa, w_cf=p.w_cf)
        self.tracker = AccessTracker(len(universe), p.window_ms, universe.propagate)
        self.weights = p.resolved_maut_weights()
        names = list(self.weights)
        w = np.array([self.weights[n] for n in names])
        self.utility_static = universe.utility_matrix(names, p.ranges) @ w
        lo, hi = p.ranges.get("poa", (0.0, 1.0))
        self._poa_range = (lo, hi)
        self.w_maut_poa = self.weights.get("poa", 0.0)
        self.start = None
        self.sweeps = 0
        self.prefetches = 0
        self.threshold_log: list[tuple] = []

    # -- evaluation --------------------------------------------------------
    def _poa_scalar(self, target: int) -> float:
        tr, a = self.tracker, self.params.alpha
        total_h = tr.historical_total
        v = a * tr.historical[target] / total_h if total_h > 0 else 0.0
        if tr.window_total > 0:
            v += (1.0 - a) * tr.recent[target] / tr.window_total
        return float(v)

    def _score(self, poa, now, target=None):
        h = self.params.evidence_horizon_ms
        if h is None:
            h = self.universe.lifetimes if target is None else self.universe.lifetimes[target]
        rate = self.tracker.recent_rate(now, self.start or 0.0)
        return poa_evidence(poa, rate, h, self.params.poa_evidence)

    def utility(self, target: int, score: float) -> float:
        lo, hi = self._poa_range
        return float(self.utility_static[target] + self.w_maut_poa * normalize(score, lo, hi))

    def _utilities(self, score: np.ndarray) -> np.ndarray:
        lo, hi = self._poa_range
        norm = np.clip((score - lo) / (hi - lo), 0.0, 1.0) if hi > lo else np.full_like(score, 0.5)
        return self.utility_static + self.w_maut_poa * norm

    def _blend(self, u, poa, score):
        b = self.params.beta
        return b * u + (1.0 - b) * (score if self.params.priority_poa == "score" else poa)

    def priority(self, target: int, now: float) -> float:
        poa = self._poa_scalar(target)
        score = float(self._score(poa, now, target))
        return self._blend(self.utility(target, score), poa, score)

    def priority_list(self, now: float):
        """Every target ranked by priority, highest first, ties by id."""
        poa = self.tracker.poa(self.params.alpha)
        score = self._score(poa, now)
        pr = self._blend(self._utilities(score), poa, score)
        order = np.lexsort((self.universe.id_rank, -pr))
        return [(self.universe.ids[i], float(pr[i])) for i in order]

    # -- policy interface --------------------------------------------------
    def on_query(self, target: int, now: float) -> Outcome:
        if self.start is None:
            self.start = now
        self.tracker.record(target, now)
        item_id = self.universe.ids[target]
        out = self.cache.lookup(item_id, now)
        if out is Outcome.MISS:
            self.last_admit = self.admit(target, now)
        return out

    def admit(self, target: int, now: float) -> list[CacheAction]:
        poa = self._poa_scalar(target)
        score = float(self._score(poa, now, target))
        prio = self._blend(self.utility(target, score), poa, score)
        mass = score if self.params.mass_source == "poa" else min(1.0, max(0.0, prio))

        def make(_item_id):
            e = self._entry(target, now)
            e.poa = poa
            e.total_access_count = 1
            e.combined_belief = self.cache.belief_on_admission(mass)
            return e

        acts = self.cache.admit([(self.universe.ids[target], prio)], now, make)
        for a in acts:
            if a.action == "Admit":
                self.admissions += 1
            else:
                self.evictions += 1
        return acts

    def on_tick(self, now: float) -> list[CacheAction]:
        self.tracker.expire(now)
        poa = self.tracker.poa(self.params.alpha)
        score = self._score(poa, now)
        prio = self._blend(self._utilities(score), poa, score)
        mass = score if self.params.mass_source == "poa" else np.clip(prio, 0.0, 1.0)
        actions = []
        if self.cache.entries:
            before_e, before_r = self.cache.evictions, self.cache.refreshes
            actions = self.cache.sweep(now, poa, mass)
            self.evictions += self.cache.evictions - before_e
            self.refreshes += self.cache.refreshes - before_r
            self.sweeps += 1
            th = self.cache.last_thresholds
            self.threshold_log.append((now, th.update, th.evict))
        if self.params.prefetch:
            actions.extend(self._prefetch(now, poa, mass, prio, actions))
        return actions

    def _prefetch(self, now, poa, mass, prio, swept) -> list[CacheAction]:
        """Fill the cache from the priority list.

        Only targets whose fresh belief would already clear the update threshold
        qualify, and nothing evicted in this sweep comes straight back.
        """
        th = self.cache.last_thresholds
        if th is None:
            return []
        u = self.universe
        fresh = self.cache.fresh_beliefs(mass)
        ok = fresh >= th.update
        if not ok.any():
            return []
        evicted = {a.item_id for a in swept if a.action == "Evict"}
        order = np.lexsort((u.id_rank, -prio))
        entries = self.cache.entries
        cand = ((u.ids[i], float(prio[i])) for i in order[ok[order]].tolist()
                if u.ids[i] not in entries and u.ids[i] not in evicted)

        def make(item_id):
            i = u.index[item_id]
            e = self._entry(i, now)
            e.poa = float(poa[i])
            e.combined_belief = float(fresh[i])
            return e

        acts = self.cache.admit(cand, now, make, stop_on_reject=True)
        for a in acts:
            if a.action == "Admit":
                self.prefetches += 1
                self.admissions += 1
            else:
                self.evictions += 1
        return acts


# --------------------------------------------------------------------------
# m-CAC
# --------------------------------------------------------------------------

def mcac_utility_original(popularity: float, relevance: float, alpha: float) -> float:
    return alpha * popularity + (1.0 - alpha) * relevance


def mcac_utility_adapted(poa: float, cf: float, qos: float, timeliness: float,
                         w: Sequence[float] = (0.25, 0.25, 0.25, 0.25)) -> float:
    w1, w2, w3, w4 = check_weights(w)
    return w1 * poa + w2 * cf + w3 * qos + w4 * timeliness


def mcac_select(means, counts, t: int, m: int, ids: Sequence[str], adapted=None, id_rank=None) -> list[str]:
    """Top-``m`` arms by UCB1 score.

    Unplayed arms come first in ascending id order; played arms tie-break by
    adapted utility, then id.
    """
    if t < 1:
        raise PolicyError("play index t must be at least 1")
    means = np.asarray(means, dtype=float)
    counts = np.asarray(counts, dtype=float)
    n = len(ids)
    if id_rank is None:
        id_rank = np.argsort(np.argsort(np.array(ids, dtype=object)))
    score = kernels.ucb(np.ascontiguousarray(means), np.ascontiguousarray(counts), float(t))
    adapted = np.zeros(n) if adapted is None else np.where(counts > 0, np.asarray(adapted, dtype=float), 0.0)
    order = np.lexsort((id_rank, -adapted, -score))
    return [ids[i] for i in order[:min(m, n)]]


class MCACPolicy(Policy):
    """Bandit caching: each sweep interval is one round; the selected arms are
    the ids allowed to occupy the cache.  A selected id is fetched on its first
    miss; deselected ids are evicted at the round boundary.

    Round reward of a selected arm is its fresh-hit count normalised by the
    round's largest, blended with the adapted utility.
    """

    name = "mcac"
    ticks = True

    def __init__(self, universe: Universe, capacity: int, params: PolicyParams | None = None):
        super().__init__(universe, capacity)
        self.params = p = params or PolicyParams()
        n = len(universe)
        self.counts = np.zeros(n)
        self.means = np.zeros(n)
        self.round_hits = np.zeros(n)
        self.round = 1
        self.tracker = AccessTracker(n, p.window_ms, universe.propagate)
        static = universe.utility_matrix(["qos", "timeliness"], p.ranges)
        self.qos, self.timeliness = static[:, 0], static[:, 1]
        self.start = None
        self.selected_mask = np.zeros(n, dtype=bool)
        self._select(None)

    def adapted_utility(self, now: float) -> np.ndarray:
        u = self.universe
        poa = self.tracker.poa(self.params.alpha)
        rate = self.tracker.recent_rate(now, self.start or 0.0) if now is not None else 0.0
        h = self.params.evidence_horizon_ms
        score = poa_evidence(poa, rate, u.lifetimes if h is None else h, self.params.poa_evidence)
        cf = np.zeros(len(u))
        for e in self.store.entries.values():
            cf[e.index] = math.exp(-e.decay_lambda * (now - e.last_refreshed))
        w1, w2, w3, w4 = self.params.mcac_weights
        return w1 * score + w2 * cf + w3 * self.qos + w4 * self.timeliness

    def _select(self, now):
        u = self.universe
        adapted = self.adapted_utility(now) if now is not None else np.zeros(len(u))
        chosen = mcac_select(self.means, self.counts, self.round, self.store.capacity, u.ids, adapted, u.id_rank)
        mask = np.zeros(len(u), dtype=bool)
        mask[[u.index[c] for c in chosen]] = True
        self.selected_mask = mask
        self._adapted = adapted

    def on_query(self, target: int, now: float) -> Outcome:
        if self.start is None:
            self.start = now
        self.tracker.record(target, now)
        item_id = self.universe.ids[target]
        out = self.store.lookup(item_id, now)
        if out is Outcome.HIT:
            self.round_hits[target] += 1
        elif out is Outcome.MISS and self.selected_mask[target] and self.store.free >= 1:
            e = self._entry(target, now)
            e.total_access_count = 1
            self.store.insert(e)
            self.admissions += 1
        return out

    def on_tick(self, now: float) -> list[CacheAction]:
        self.tracker.expire(now)
        played = self.selected_mask
        top = self.round_hits[played].max() if played.any() else 0.0
        reward = self.round_hits / top if top > 0 else np.zeros_like(self.round_hits)
        rho = self.params.mcac_utility_weight
        adapted = self.adapted_utility(now)
        r = (1.0 - rho) * reward + rho * np.clip(adapted, 0.0, 1.0)
        self.counts[played] += 1
        self.means[played] += (r[played] - self.means[played]) / self.counts[played]
        self.round_hits[:] = 0
        self.round += 1
        self._select(now)
        actions = []
        for item_id in sorted(self.store.entries):
            if not self.selected_mask[self.universe.index[item_id]]:
                self.store.remove(item_id)
                self.evictions += 1
                actions.append(CacheAction("Evict", item_id, now, math.nan, "deselected by bandit"))
        return actions


def make_policy(name: str, universe: Universe, capacity: int, params: PolicyParams | None = None) -> Policy:
    if name == "dcmf":
        return DCMFPolicy(universe, capacity, params)
    if name == "mcac":
        return MCACPolicy(universe, capacity, params)
    if name == "mgreedy":
        return GreedyPolicy(universe, capacity)
    if name == "mmyopic":
        return MyopicPolicy(universe, capacity)
    if name == "lru":
        return LRUPolicy(universe, capacity)
    if name == "lfu":
        return LFUPolicy(universe, capacity)
    raise PolicyError(f"unknown policy {name!r}; valid policies: {', '.join(POLICIES)}")
