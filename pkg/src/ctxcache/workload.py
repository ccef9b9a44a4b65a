"""Synthetic roadwork corpora and query traces.

Traces are materialised as parallel numpy arrays and serialised as CSV so an
external trace can be replayed through the simulator unchanged.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .context import (AttributeDef, Conjunct, ContextAttribute, ContextItem, Corpus, Equals,
                      InferenceRule, Interval)
from .evidence import decay_for_lifetime

TRACE_MAGIC = "# ctxcache-trace v1"
TRACE_HEADER = ("seq", "timestamp_ms", "kind", "target_id", "consumer_id")

MINUTE_MS = 60_000.0
HALF_HOUR_MS = 30 * MINUTE_MS
DAY_MS = 24 * 60 * MINUTE_MS

# queries per second
LOAD_TIERS = {"low": 0.5, "medium": 1.0, "high": 2.0}

# 06:00-11:00 and 15:00-18:00 as half-hour slot indices
PEAK_SLOTS = frozenset(range(12, 22)) | frozenset(range(30, 36))


class WorkloadError(ValueError):
    pass


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *key]))


# --------------------------------------------------------------------------
# load descriptions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadTier:
    name: str
    rate_per_s: float

    def __post_init__(self):
        if self.rate_per_s <= 0:
            raise WorkloadError("arrival rate must be positive")

    @classmethod
    def named(cls, name: str) -> "LoadTier":
        try:
            return cls(name, LOAD_TIERS[name])
        except KeyError:
            raise WorkloadError(f"unknown load tier {name!r}; expected one of {sorted(LOAD_TIERS)}") from None


@dataclass(frozen=True)
class DiurnalProfile:
    """Per-slot request count mean and standard deviation."""

    mu: tuple
    sigma: tuple
    slot_ms: float = HALF_HOUR_MS

    def __post_init__(self):
        if len(self.mu) != len(self.sigma) or not self.mu:
            raise WorkloadError("mu and sigma need one value per slot")
        if any(m <= 0 for m in self.mu) or any(s < 0 for s in self.sigma):
            raise WorkloadError("slot means must be positive and deviations non-negative")

    @property
    def expected_total(self) -> float:
        return float(sum(self.mu))

    @property
    def total_sigma(self) -> float:
        return math.sqrt(sum(s * s for s in self.sigma))

    @classmethod
    def peak_offpeak(cls, total: float = 70_000, peak_mu: float = 5250, peak_sigma: float = 500,
                     off_mu: float = 1750, off_sigma: float = 300) -> "DiurnalProfile":
        """48 half-hour slots, peaks at 06-11h and 15-18h, rescaled to ``total`` per day.

        The scale factor multiplies means and deviations alike.
        """
        raw_mu = [peak_mu if k in PEAK_SLOTS else off_mu for k in range(48)]
        raw_sigma = [peak_sigma if k in PEAK_SLOTS else off_sigma for k in range(48)]
        scale = total / sum(raw_mu)
        return cls(tuple(m * scale for m in raw_mu), tuple(s * scale for s in raw_sigma))


@dataclass(frozen=True)
class PopularityModel:
    kind: str = "zipf"
    exponent: float = 0.8
    normal_sigma: float = 0.2
    attribute_share: float = 0.3

    def rank_weights(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.zeros(0)
        ranks = np.arange(1, n + 1, dtype=float)
        if self.kind == "zipf":
            w = ranks ** -self.exponent
        elif self.kind == "normal":
            # half-normal over rank, width as a fraction of the population
            w = np.exp(-0.5 * ((ranks - 1) / max(self.normal_sigma * n, 1e-12)) ** 2)
        else:
            raise WorkloadError(f"unknown popularity model {self.kind!r}")
        return w / w.sum()


def zipf_probabilities(n: int, exponent: float = 0.8) -> np.ndarray:
    return PopularityModel("zipf", exponent).rank_weights(n)


def target_distribution(corpus: Corpus, model: PopularityModel, seed: int):
    """Target ids and their query probabilities.

    Ranks are assigned by a seeded shuffle within each kind; the attribute
    kind receives ``attribute_share`` of the total mass.
    """
    rng = stream(seed, 11)
    items = sorted(corpus.items)
    attrs = sorted(corpus.attributes)
    share = model.attribute_share if attrs else 0.0
    if not items:
        share = 1.0
    ids = items + attrs
    probs = np.zeros(len(ids))
    if items:
        perm = rng.permutation(len(items))
        probs[perm] = (1.0 - share) * model.rank_weights(len(items))
    if attrs:
        perm = rng.permutation(len(attrs))
        probs[len(items) + perm] = share * model.rank_weights(len(attrs))
    return ids, probs / probs.sum()


# --------------------------------------------------------------------------
# traces
# --------------------------------------------------------------------------

@dataclass
class Trace:
    times_ms: np.ndarray
    targets: np.ndarray
    consumers: np.ndarray
    ids: list
    kinds: list = field(default_factory=list)

    def __post_init__(self):
        self.times_ms = np.asarray(self.times_ms, dtype=np.int64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        self.consumers = np.asarray(self.consumers, dtype=np.int64)
        if not (len(self.times_ms) == len(self.targets) == len(self.consumers)):
            raise WorkloadError("trace columns differ in length")
        if len(self.times_ms) > 1 and np.any(np.diff(self.times_ms) < 0):
            raise WorkloadError("trace timestamps must be non-decreasing")
        if not self.kinds:
            self.kinds = ["item"] * len(self.ids)

    def __len__(self) -> int:
        return len(self.times_ms)

    @property
    def duration_ms(self) -> float:
        return float(self.times_ms[-1] - self.times_ms[0]) if len(self) else 0.0

    def target_ids(self) -> list:
        ids = self.ids
        return [ids[t] for t in self.targets.tolist()]

    def equals(self, other: "Trace") -> bool:
        return (np.array_equal(self.times_ms, other.times_ms)
                and self.target_ids() == other.target_ids()
                and np.array_equal(self.consumers, other.consumers))


def _assemble(times: np.ndarray, ids: Sequence[str], kinds: Sequence[str], probs: np.ndarray,
              rng: np.random.Generator, n_consumers: int) -> Trace:
    times = np.floor(np.sort(times, kind="stable")).astype(np.int64)
    n = len(times)
    targets = rng.choice(len(ids), size=n, p=probs) if n else np.zeros(0, dtype=np.int64)
    consumers = rng.integers(0, n_consumers, size=n)
    return Trace(times, targets, consumers, list(ids), list(kinds))


def gen_poisson_trace(tier: LoadTier, duration_ms: float, ids: Sequence[str], probs: Sequence[float],
                      seed: int, kinds: Sequence[str] | None = None, start_ms: float = 0.0,
                      n_consumers: int = 10_000) -> Trace:
    """Exponential inter-arrivals at ``tier.rate_per_s`` over ``[start, start + duration)``."""
    rng = stream(seed, 21)
    rate_ms = tier.rate_per_s / 1000.0
    expected = rate_ms * max(duration_ms, 0.0)
    chunks, t = [], 0.0
    while duration_ms > 0:
        block = int(expected + 6 * math.sqrt(expected) + 16)
        arrivals = t + np.cumsum(rng.exponential(1.0 / rate_ms, size=block))
        chunks.append(arrivals[arrivals < duration_ms])
        if arrivals[-1] >= duration_ms:
            break
        t = arrivals[-1]
    times = np.concatenate(chunks) + start_ms if chunks else np.zeros(0)
    return _assemble(times, ids, kinds or ["item"] * len(ids), np.asarray(probs, dtype=float), rng, n_consumers)


def diurnal_slot_counts(profile: DiurnalProfile, seed: int) -> np.ndarray:
    rng = stream(seed, 31)
    draws = rng.normal(np.asarray(profile.mu), np.asarray(profile.sigma))
    return np.rint(np.maximum(draws, 0.0)).astype(np.int64)


def gen_diurnal_trace(profile: DiurnalProfile, ids: Sequence[str], probs: Sequence[float], seed: int,
                      kinds: Sequence[str] | None = None, n_consumers: int = 10_000) -> Trace:
    """Normal per-slot counts (truncated at zero), arrivals uniform inside each slot."""
    counts = diurnal_slot_counts(profile, seed)
    rng = stream(seed, 32)
    starts = np.repeat(np.arange(len(counts)) * profile.slot_ms, counts)
    times = starts + rng.uniform(0.0, profile.slot_ms, size=int(counts.sum()))
    return _assemble(times, ids, kinds or ["item"] * len(ids), np.asarray(probs, dtype=float), rng, n_consumers)


def write_trace(trace: Trace, path) -> None:
    ids, kinds = trace.ids, trace.kinds
    with open(path, "w", newline="") as fh:
        fh.write(TRACE_MAGIC + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for seq, (t, tgt, c) in enumerate(zip(trace.times_ms.tolist(), trace.targets.tolist(),
                                              trace.consumers.tolist())):
            w.writerow((seq, t, kinds[tgt], ids[tgt], c))


def read_trace(path) -> Trace:
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != TRACE_MAGIC:
            raise WorkloadError(f"{path}: missing trace header line {TRACE_MAGIC!r}")
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_HEADER:
            raise WorkloadError(f"{path}: unexpected columns {header}")
        rows = [(int(r[0]), int(r[1]), r[2], r[3], int(r[4])) for r in reader if r]
    rows.sort(key=lambda r: (r[1], r[0]))
    table: dict[str, int] = {}
    kinds: list[str] = []
    targets = []
    for _, _, kind, tid, _ in rows:
        if kind not in ("item", "attribute"):
            raise WorkloadError(f"{path}: bad target kind {kind!r}")
        idx = table.get(tid)
        if idx is None:
            idx = table[tid] = len(kinds)
            kinds.append(kind)
        targets.append(idx)
    return Trace(np.array([r[1] for r in rows], dtype=np.int64), np.array(targets, dtype=np.int64),
                 np.array([r[4] for r in rows], dtype=np.int64), list(table), kinds)


# --------------------------------------------------------------------------
# corpus
# --------------------------------------------------------------------------

# (name, kind, unit, lifetime range in minutes)
_SITE_ATTRIBUTES = (
    ("sign", "boolean", "", (60, 240)),
    ("speed", "number", "km/h", (10, 60)),
    ("location", "coordinate", "deg", (720, 1440)),
    ("congestion", "number", "vehicles/km", (2, 15)),
    ("timeofday", "timestamp", "ms", (5, 30)),
    ("raining", "boolean", "", (10, 60)),
    ("visibility", "number", "m", (5, 30)),
)
_AUX_LIFETIME = (5, 60)

DEFAULT_THRESHOLDS = {"reduced_speed_limit": 40.0, "high_congestion": 80.0, "low_visibility": 50.0}

DEFAULT_UTILITY_RANGES = {
    "poa": (0.0, 1.0),
    "qos": (0.0, 1.0),
    "coc": (0.0, 1.0),
    "qoc": (0.0, 1.0),
    "sla": (1.0, 3.0),
    "timeliness": (0.0, 1.0),
    "provider_type": (0.0, 1.0),
}


def _utility_scores(rng: np.random.Generator) -> dict:
    return {
        "qos": round(float(rng.uniform(0.0, 1.0)), 4),
        "coc": round(float(rng.uniform(0.0, 1.0)), 4),
        "qoc": round(float(rng.uniform(0.0, 1.0)), 4),
        "sla": float(rng.integers(1, 4)),
        "timeliness": round(float(rng.uniform(0.0, 1.0)), 4),
        "provider_type": float(rng.integers(0, 3)) / 2.0,
    }


def _site_value(name: str, rng: np.random.Generator):
    if name == "sign":
        return bool(rng.random() < 0.5)
    if name == "speed":
        return float(rng.choice([30.0, 40.0, 60.0, 80.0, 100.0]))
    if name == "location":
        return (round(float(-37.8 + rng.uniform(-0.2, 0.2)), 6), round(float(145.0 + rng.uniform(-0.2, 0.2)), 6))
    if name == "congestion":
        return round(float(rng.uniform(20.0, 120.0)), 2)
    if name == "timeofday":
        return float(rng.integers(0, int(DAY_MS)))
    if name == "raining":
        return bool(rng.random() < 0.3)
    if name == "visibility":
        return round(float(rng.uniform(10.0, 500.0)), 1)
    raise AssertionError(name)


def roadwork_rule(sign: str, speed: str, congestion: str, thresholds=DEFAULT_THRESHOLDS) -> InferenceRule:
    return InferenceRule((
        Conjunct(sign, Equals(True)),
        Conjunct(speed, Interval(hi=thresholds["reduced_speed_limit"])),
        Conjunct(congestion, Interval(lo=thresholds["high_congestion"])),
    ), output=True, otherwise=False)


def hazard_rule(roadwork: str, raining: str, visibility: str, thresholds=DEFAULT_THRESHOLDS) -> InferenceRule:
    return InferenceRule((
        Conjunct(roadwork, Equals(True)),
        Conjunct(raining, Equals(True)),
        Conjunct(visibility, Interval(hi=thresholds["low_visibility"])),
    ), output="High", otherwise="Low")


def gen_corpus(n_attributes: int, n_items: int, seed: int, lifetime_scale: float = 1.0,
               cf_at_expiry: float = 0.5, n_providers: int = 30, thresholds=DEFAULT_THRESHOLDS) -> Corpus:
    """Roadwork-style corpus: per site seven attributes, a roadwork item and a
    hazard item built on it.  Attributes beyond what the sites need become
    standalone auxiliary readings."""
    if n_items < 1:
        raise WorkloadError("n_items must be at least 1")
    sites = (n_items + 1) // 2
    needed = len(_SITE_ATTRIBUTES) * sites
    if n_attributes < needed:
        raise WorkloadError(f"{n_items} items need at least {needed} attributes, got {n_attributes}")
    rng = stream(seed, 41)
    width = max(4, len(str(max(sites, n_attributes))))

    def lifetime(lo_hi):
        lo, hi = lo_hi
        return round(float(rng.uniform(lo, hi)) * MINUTE_MS * lifetime_scale, 0)

    def provider():
        return f"cp-{int(rng.integers(0, n_providers)):03d}"

    attrs, items = [], []
    for s in range(sites):
        names = {}
        for name, kind, unit, life in _SITE_ATTRIBUTES:
            aid = f"ca-{name}-{s:0{width}d}"
            names[name] = aid
            lt = lifetime(life)
            attrs.append(ContextAttribute(AttributeDef(aid, kind, unit), _site_value(name, rng),
                                          last_update=0.0, validity_lifetime=lt,
                                          decay_lambda=decay_for_lifetime(lt, cf_at_expiry),
                                          provider=provider(), utility=_utility_scores(rng)))
        rw = f"ci-roadwork-{s:0{width}d}"
        items.append(ContextItem(rw, [names["sign"], names["speed"], names["congestion"]],
                                 roadwork_rule(names["sign"], names["speed"], names["congestion"], thresholds),
                                 provider=provider(), utility=_utility_scores(rng)))
        if len(items) < n_items:
            hz = f"ci-hazard-{s:0{width}d}"
            items.append(ContextItem(hz, [rw, names["raining"], names["visibility"]],
                                     hazard_rule(rw, names["raining"], names["visibility"], thresholds),
                                     provider=provider(), utility=_utility_scores(rng)))
    for j in range(n_attributes - needed):
        aid = f"ca-density-{j:0{width}d}"
        lt = lifetime(_AUX_LIFETIME)
        attrs.append(ContextAttribute(AttributeDef(aid, "number", "vehicles/km"),
                                      round(float(rng.uniform(0.0, 150.0)), 2), validity_lifetime=lt,
                                      decay_lambda=decay_for_lifetime(lt, cf_at_expiry),
                                      provider=provider(), utility=_utility_scores(rng)))
    return Corpus(attrs, items)


def save_corpus(corpus: Corpus, path) -> None:
    corpus.save(Path(path))
