"""Discrete-event replay of a trace against one policy.

Simulated time comes from the trace; response times are sampled latencies,
not wall time.  Wall-clock policy execution time is measured separately and
kept out of the metrics document so that document stays reproducible.
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cache import CacheAction, Outcome
from .context import Corpus
from .policies import POLICIES, PolicyError, PolicyParams, Universe, make_policy
from .workload import stream, Trace


class SimulationError(ValueError):
    pass


class TraceMismatchError(SimulationError):
    """The trace names targets the corpus does not define."""


def derive_seed(base_seed: int, *parts) -> int:
    """Stable 63-bit seed for a sub-run: sha256 over the base seed and the parts."""
    text = ":".join([str(int(base_seed))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


# --------------------------------------------------------------------------
# latency
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Dist:
    """Latency distribution in ms: constant, lognormal or uniform."""

    kind: str = "constant"
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind == "constant":
            ok = self.a >= 0
        elif self.kind == "lognormal":
            ok = self.b >= 0
        elif self.kind == "uniform":
            ok = 0 <= self.a <= self.b
        else:
            raise SimulationError(f"unknown latency distribution {self.kind!r}")
        if not ok:
            raise SimulationError(f"invalid parameters for {self.kind} latency: {self.a}, {self.b}")

    @classmethod
    def from_config(cls, d: Mapping) -> "Dist":
        kind = d.get("dist", "constant")
        if kind == "constant":
            return cls(kind, float(d["value"]))
        if kind == "lognormal":
            return cls(kind, float(d["mu_log"]), float(d["sigma_log"]))
        if kind == "uniform":
            return cls(kind, float(d["low"]), float(d["high"]))
        raise SimulationError(f"unknown latency distribution {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "constant":
            return {"dist": "constant", "value": self.a}
        if self.kind == "lognormal":
            return {"dist": "lognormal", "mu_log": self.a, "sigma_log": self.b}
        return {"dist": "uniform", "low": self.a, "high": self.b}

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.a)
        if self.kind == "lognormal":
            return rng.lognormal(self.a, self.b, size=n)
        return rng.uniform(self.a, self.b, size=n)

    @property
    def mean(self) -> float:
        if self.kind == "constant":
            return self.a
        if self.kind == "lognormal":
            return math.exp(self.a + self.b ** 2 / 2)
        return (self.a + self.b) / 2


@dataclass(frozen=True)
class LatencyModel:
    hit: Dist = Dist("constant", 5.0)
    refresh: Dist = Dist("lognormal", math.log(30.0), 0.3)
    fetch: Dist = Dist("lognormal", math.log(50.0), 0.4)

    @classmethod
    def from_config(cls, d: Mapping | None) -> "LatencyModel":
        d = d or {}
        base = cls()
        return cls(*(Dist.from_config(d[k]) if k in d else getattr(base, k) for k in ("hit", "refresh", "fetch")))

    def to_config(self) -> dict:
        return {"hit": self.hit.to_config(), "refresh": self.refresh.to_config(), "fetch": self.fetch.to_config()}


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------

@dataclass
class RunSpec:
    policy: str
    capacity: int
    sweep_interval_ms: float = 60_000.0
    latency: LatencyModel = field(default_factory=LatencyModel)
    params: PolicyParams = field(default_factory=PolicyParams)
    seed: int = 0
    log_retain: bool = False
    series_bucket_ms: float = 3_600_000.0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise PolicyError(f"unknown policy {self.policy!r}; valid policies: {', '.join(POLICIES)}")
        if self.capacity < 1:
            raise SimulationError("capacity must be at least 1")
        if self.sweep_interval_ms <= 0:
            raise SimulationError("sweep_interval_ms must be positive")


@dataclass
class RunResult:
    metrics: dict
    actions: list
    running_time_ms: float
    sweep_times: list = field(default_factory=list)  # (occupancy, seconds) per tick
    thresholds: list = field(default_factory=list)  # (timestamp, update, evict) per DCMF sweep


def _empty_metrics(spec: RunSpec) -> dict:
    return {
        "policy": spec.policy, "capacity": spec.capacity, "seed": spec.seed,
        "Q_total": 0, "Q_cache": 0, "Q_miss": 0, "Q_expired": 0,
        "CHR": 0.0, "CMR": 0.0, "CER": 0.0,
        "response_time_mean_ms": 0.0, "response_time_std_ms": 0.0, "response_time_p95_ms": 0.0,
        "throughput_qps": 0.0, "offered_rate_qps": 0.0,
        "utilization_pct": 0.0, "peak_occupancy": 0,
        "admissions": 0, "evictions": 0, "refreshes": 0, "prefetches": 0,
        "refresh_time_ms": 0.0, "prefetch_time_ms": 0.0, "sweeps": 0,
        "cumulative_hits": [],
    }


def map_trace(trace: Trace, universe: Universe) -> np.ndarray:
    """Trace target indices rewritten into the universe's index space."""
    missing = [t for t in trace.ids if t not in universe.index]
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise TraceMismatchError(f"{len(missing)} trace target(s) absent from corpus: {shown}")
    table = np.array([universe.index[t] for t in trace.ids], dtype=np.int64)
    return table[trace.targets] if len(trace) else np.zeros(0, dtype=np.int64)


def run(trace: Trace, corpus: Corpus | Universe, spec: RunSpec) -> RunResult:
    """Replay ``trace`` under ``spec``; identical inputs give identical metrics and actions."""
    universe = corpus if isinstance(corpus, Universe) else Universe(corpus)
    targets = map_trace(trace, universe)
    policy = make_policy(spec.policy, universe, spec.capacity, spec.params)
    n = len(trace)
    m = _empty_metrics(spec)
    if n == 0:
        return RunResult(m, [], 0.0)

    # common random numbers: every policy sees the same per-query draws
    hit_lat = spec.latency.hit.sample(stream(spec.seed, 51), n)
    fetch_lat = spec.latency.fetch.sample(stream(spec.seed, 52), n)
    background_rng = stream(spec.seed, 53)

    times = trace.times_ms.astype(float)
    start = times[0]
    interval = spec.sweep_interval_ms
    next_tick = start + interval
    ticks = policy.ticks
    bucket = spec.series_bucket_ms

    outcome = np.zeros(n, dtype=np.int8)  # 0 hit, 1 expired, 2 miss
    actions: list[CacheAction] = []
    sweep_times = []
    log_retain = spec.log_retain
    on_query = policy.on_query
    on_tick = policy.on_tick
    HIT, EXPIRED = Outcome.HIT, Outcome.EXPIRED

    clock = time.perf_counter
    t0 = clock()
    for i in range(n):
        now = times[i]
        if ticks and now >= next_tick:
            while next_tick <= now:
                occ = policy.occupancy()
                s = clock()
                acts = on_tick(next_tick)
                sweep_times.append((occ, clock() - s))
                actions.extend(acts if log_retain else [a for a in acts if a.action != "Retain"])
                next_tick += interval
        out = on_query(int(targets[i]), now)
        if out is not HIT:
            outcome[i] = 1 if out is EXPIRED else 2
        if policy.last_admit:
            actions.extend(policy.last_admit)
            policy.last_admit = None
    running_ms = (clock() - t0) * 1000.0

    q_hit = int(np.count_nonzero(outcome == 0))
    q_exp = int(np.count_nonzero(outcome == 1))
    q_miss = int(np.count_nonzero(outcome == 2))
    resp = np.where(outcome == 0, hit_lat, fetch_lat)
    prefetches = int(getattr(policy, "prefetches", 0))
    refresh_ms = float(spec.latency.refresh.sample(background_rng, policy.refreshes).sum())
    prefetch_ms = float(spec.latency.fetch.sample(background_rng, prefetches).sum())
    # background refreshes and prefetches occupy the platform too
    total_s = (float(resp.sum()) + refresh_ms + prefetch_ms) / 1000.0
    span_s = (times[-1] - start) / 1000.0

    hit_times = times[outcome == 0]
    n_buckets = int((times[-1] - start) // bucket) + 1
    per_bucket = np.bincount(((hit_times - start) // bucket).astype(np.int64), minlength=n_buckets)

    m.update({
        "Q_total": n, "Q_cache": q_hit, "Q_miss": q_miss, "Q_expired": q_exp,
        "CHR": 100.0 * q_hit / n, "CMR": 100.0 * q_miss / n, "CER": 100.0 * q_exp / n,
        "response_time_mean_ms": float(resp.mean()),
        "response_time_std_ms": float(resp.std()),
        "response_time_p95_ms": float(np.percentile(resp, 95)),
        "throughput_qps": n / total_s if total_s > 0 else 0.0,
        "offered_rate_qps": n / span_s if span_s > 0 else 0.0,
        "utilization_pct": 100.0 * policy.store.peak_used / spec.capacity,
        "peak_occupancy": int(policy.store.peak_used),
        "admissions": int(policy.admissions), "evictions": int(policy.evictions),
        "refreshes": int(policy.refreshes), "prefetches": prefetches,
        "refresh_time_ms": refresh_ms, "prefetch_time_ms": prefetch_ms,
        "sweeps": len(sweep_times),
        "cumulative_hits": np.cumsum(per_bucket).tolist(),
    })
    weights = getattr(policy, "weights", None)
    if weights is not None:
        # echoed so a report shows which MAUT weights produced it
        m["maut_weights"] = {k: float(v) for k, v in weights.items()}
    return RunResult(m, actions, running_ms, sweep_times, list(getattr(policy, "threshold_log", [])))


def sweep_capacities(trace: Trace, corpus: Corpus, spec: RunSpec, capacities: Sequence[int]) -> list[RunResult]:
    """One run per capacity over the same trace and seed."""
    caps = list(capacities)
    if any(b < a for a, b in zip(caps, caps[1:])):
        raise SimulationError("capacities must be ascending")
    universe = Universe(corpus)
    out = []
    for c in caps:
        s = RunSpec(spec.policy, c, spec.sweep_interval_ms, spec.latency, spec.params, spec.seed,
                    spec.log_retain, spec.series_bucket_ms)
        out.append(run(trace, universe, s))
    return out
