"""Cache store with shared expiry bookkeeping and the belief-driven decision loop."""
from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels
from .evidence import Thresholds

ACTION_LOG_HEADER = ("timestamp_ms", "action", "item_id", "belief", "reason")


class Outcome(str, Enum):
    HIT = "hit"
    EXPIRED = "expired_hit"
    MISS = "miss"


class CacheAction(NamedTuple):
    action: str  # Evict | Refresh | Retain | Admit
    item_id: str
    timestamp: float
    belief: float
    reason: str


@dataclass
class CacheEntry:
    item_id: str
    index: int
    inserted_at: float
    last_refreshed: float
    last_accessed: float
    lifetime: float
    decay_lambda: float
    hit_count: int = 0
    total_access_count: int = 0
    poa: float = 0.0
    cf: float = 1.0
    combined_belief: float = math.nan
    size_units: int = 1

    def age(self, now: float) -> float:
        return now - self.last_refreshed

    def is_expired(self, now: float) -> bool:
        return now - self.last_refreshed > self.lifetime


@dataclass(frozen=True)
class CacheConfig:
    capacity_units: int
    sweep_interval_ms: float = 60_000.0

    def __post_init__(self):
        if self.capacity_units < 1:
            raise ValueError("capacity_units must be at least 1")
        if self.sweep_interval_ms <= 0:
            raise ValueError("sweep_interval_ms must be positive")


class CacheStore:
    """Bounded map of entries; every policy shares this freshness accounting."""

    def __init__(self, capacity_units: int):
        if capacity_units < 1:
            raise ValueError("capacity_units must be at least 1")
        self.capacity = int(capacity_units)
        self.entries: dict[str, CacheEntry] = {}
        self.used = 0
        self.peak_used = 0

    def __contains__(self, item_id) -> bool:
        return item_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def free(self) -> int:
        return self.capacity - self.used

    def lookup(self, item_id: str, now: float) -> Outcome:
        """Classify an access and update counters.

        A stale entry is refreshed in place, so the following access sees it
        fresh; the caller charges fetch latency for that.
        """
        e = self.entries.get(item_id)
        if e is None:
            return Outcome.MISS
        e.total_access_count += 1
        e.last_accessed = now
        if now - e.last_refreshed > e.lifetime:
            e.last_refreshed = now
            return Outcome.EXPIRED
        e.hit_count += 1
        return Outcome.HIT

    def insert(self, entry: CacheEntry) -> None:
        if entry.item_id in self.entries:
            raise KeyError(f"{entry.item_id!r} already cached")
        if entry.size_units > self.free:
            raise OverflowError(f"no room for {entry.item_id!r} ({entry.size_units} units, {self.free} free)")
        self.entries[entry.item_id] = entry
        self.used += entry.size_units
        if self.used > self.peak_used:
            self.peak_used = self.used

    def remove(self, item_id: str) -> CacheEntry:
        e = self.entries.pop(item_id)
        self.used -= e.size_units
        return e


def decide(belief: float, thresholds: Thresholds) -> str:
    """Evict below the evict threshold, refresh below the update threshold,
    retain otherwise.  An undecidable belief (NaN or the sentinel) refreshes."""
    if belief is None or not isinstance(belief, (int, float)) or belief != belief:
        return "Refresh"
    if belief < thresholds.evict:
        return "Evict"
    if belief < thresholds.update:
        return "Refresh"
    return "Retain"


_CODE_NAMES = {kernels.RETAIN: "Retain", kernels.REFRESH: "Refresh", kernels.EVICT: "Evict"}
_COMBINE_MODES = {"dst": kernels.COMBINE_DST, "weighted": kernels.COMBINE_WEIGHTED}


class DCMFCache(CacheStore):
    """Cache whose contents are managed by periodic evidence sweeps.

    ``sweep`` recomputes freshness and combined belief for every entry and
    applies :func:`decide`; ``admit`` places new items while capacity lasts,
    displacing the weakest-belief entry only for a strictly higher priority.
    """

    def __init__(self, capacity_units: int, kappa: float = 0.5, epsilon: float = 0.0,
                 combination: str = "dst", w_poa: float = 0.5, w_cf: float = 0.5):
        super().__init__(capacity_units)
        if combination not in _COMBINE_MODES:
            raise ValueError(f"combination must be one of {sorted(_COMBINE_MODES)}")
        self.kappa = kappa
        self.epsilon = epsilon
        self.mode = _COMBINE_MODES[combination]
        self.w_poa = w_poa
        self.w_cf = w_cf
        self.last_thresholds: Thresholds | None = None
        self.refreshes = 0
        self.evictions = 0
        self._heap: list = []
        self._live: dict[str, int] = {}
        self._serial = 0

    # -- belief bookkeeping -------------------------------------------------
    @staticmethod
    def _rank(belief: float) -> float:
        return 0.5 if belief != belief else belief

    def _push(self, e: CacheEntry) -> None:
        self._serial += 1
        self._live[e.item_id] = self._serial
        heapq.heappush(self._heap, (self._rank(e.combined_belief), e.item_id, self._serial))

    def _rebuild(self, entries) -> None:
        heap, live, serial = [], {}, self._serial
        rank = self._rank
        for e in entries:
            serial += 1
            live[e.item_id] = serial
            heap.append((rank(e.combined_belief), e.item_id, serial))
        heapq.heapify(heap)
        self._heap, self._live, self._serial = heap, live, serial

    def weakest(self):
        """Cached entry with the lowest combined belief (ties: smallest id)."""
        heap = self._heap
        while heap:
            rank, item_id, serial = heap[0]
            if self._live.get(item_id) == serial and item_id in self.entries:
                return self.entries[item_id], rank
            heapq.heappop(heap)
        return None, math.inf

    def remove(self, item_id: str) -> CacheEntry:
        self._live.pop(item_id, None)
        return super().remove(item_id)

    def belief_on_admission(self, poa_score: float) -> float:
        """Combined belief of a just-fetched entry (freshness 1)."""
        if self.mode == kernels.COMBINE_WEIGHTED:
            return self.w_poa * poa_score + self.w_cf
        eps = self.epsilon
        a1, b1 = (1.0 - eps) * poa_score, (1.0 - eps) * (1.0 - poa_score)
        a2 = 1.0 - eps
        c = a1 * a2 + a1 * eps + eps * a2
        norm = c + b1 * eps + eps * eps
        if norm < kernels.CONFLICT_EPS:
            return math.nan
        return c / norm

    def fresh_beliefs(self, poa_scores: np.ndarray) -> np.ndarray:
        """Vector form of :meth:`belief_on_admission`."""
        scores = np.ascontiguousarray(poa_scores, dtype=float)
        if self.mode == kernels.COMBINE_WEIGHTED:
            return self.w_poa * scores + self.w_cf
        return kernels.dst_combine(scores, np.ones_like(scores), float(self.epsilon))[0]

    # -- decision loop ------------------------------------------------------
    def sweep(self, now: float, poa: np.ndarray, poa_score: np.ndarray) -> list[CacheAction]:
        """One decision pass over every entry in id order.

        ``poa`` and ``poa_score`` are indexed by each entry's target index.
        Each belief is compared relative to the entry's fresh belief, so an
        entry that has not decayed is never evicted for staleness.  An entry
        already past its validity lifetime is refreshed rather than retained.
        """
        if not self.entries:
            self.last_thresholds = None
            return []
        ids = sorted(self.entries)
        ents = [self.entries[i] for i in ids]
        n = len(ents)
        ages = np.fromiter((now - e.last_refreshed for e in ents), float, n)
        lams = np.fromiter((e.decay_lambda for e in ents), float, n)
        idx = np.fromiter((e.index for e in ents), np.int64, n)
        cf, belief, codes, upd, ev = kernels.sweep(
            ages, lams, np.ascontiguousarray(poa_score[idx], dtype=float),
            float(self.epsilon), float(self.kappa), self.mode, float(self.w_poa), float(self.w_cf))
        self.last_thresholds = Thresholds(upd, ev)
        poa_sel = poa[idx]
        fresh = self.fresh_beliefs(poa_score[idx])
        actions = []
        kept = []
        for e, c, p, f, b, code in zip(ents, cf.tolist(), poa_sel.tolist(), fresh.tolist(), belief.tolist(),
                                       codes.tolist()):
            e.poa = p
            e.cf = c
            e.combined_belief = b
            expired = e.is_expired(now)
            if code == kernels.RETAIN and expired:
                # retaining a copy already past its lifetime only defers the refresh to the next reader
                code = kernels.REFRESH
            name = _CODE_NAMES[code]
            if code == kernels.EVICT:
                self.remove(e.item_id)
                self.evictions += 1
                reason = "belief below evict threshold"
            elif code == kernels.REFRESH:
                e.last_refreshed = now
                e.cf = 1.0
                # the fetched copy is fresh, so its belief is re-derived with freshness 1
                e.combined_belief = f
                self.refreshes += 1
                if b != b:
                    reason = "undecidable evidence"
                elif expired:
                    reason = "past validity lifetime"
                else:
                    reason = "belief below update threshold"
                kept.append(e)
            else:
                reason = "belief at or above update threshold"
                kept.append(e)
            actions.append(CacheAction(name, e.item_id, now, b, reason))
        self._rebuild(kept)
        return actions

    def admit(self, candidates: Iterable[tuple], now: float, make_entry,
              stop_on_reject: bool = False) -> list[CacheAction]:
        """Admit ``(item_id, priority)`` candidates, highest priority first.

        ``make_entry(item_id)`` builds the fresh :class:`CacheEntry` (with its
        admission belief already set).  With ``stop_on_reject`` the scan ends at
        the first candidate that cannot get in, which is safe when candidates
        arrive in descending priority and share one size.
        """
        actions = []
        for item_id, priority in candidates:
            if item_id in self.entries:
                continue
            entry = make_entry(item_id)
            if entry.size_units > self.capacity:
                continue
            victims = []
            room = self.free
            while room < entry.size_units:
                e, rank = self.weakest()
                if e is None or not priority > rank:
                    break
                heapq.heappop(self._heap)
                victims.append(e)
                room += e.size_units
            if room < entry.size_units:
                for e in victims:
                    self._push(e)
                if stop_on_reject:
                    break
                continue
            for e in victims:
                self.remove(e.item_id)
                self.evictions += 1
                actions.append(CacheAction("Evict", e.item_id, now, e.combined_belief,
                                           "displaced by higher-priority admission"))
            self.insert(entry)
            self._push(entry)
            actions.append(CacheAction("Admit", item_id, now, entry.combined_belief, f"priority {priority:.6g}"))
        return actions


# --------------------------------------------------------------------------
# action log
# --------------------------------------------------------------------------

def _fmt_belief(b: float) -> str:
    if b is None:
        return ""
    if b != b:
        return "undecidable"
    return repr(round(float(b), 12))


def action_rows(actions: Sequence[CacheAction]):
    for a in actions:
        yield (repr(int(a.timestamp)) if float(a.timestamp).is_integer() else repr(a.timestamp),
               a.action, a.item_id, _fmt_belief(a.belief), a.reason)


def write_action_log(actions: Sequence[CacheAction], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ACTION_LOG_HEADER)
        w.writerows(action_rows(actions))


def format_action_log(actions: Sequence[CacheAction]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ACTION_LOG_HEADER)
    w.writerows(action_rows(actions))
    return buf.getvalue()
