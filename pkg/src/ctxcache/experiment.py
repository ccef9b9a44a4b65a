"""Build corpora and traces from a resolved config and execute run matrices."""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

from . import config as cfgmod
from .context import Corpus
from .policies import PolicyParams, Universe
from .sim import LatencyModel, RunResult, RunSpec, derive_seed, run
from .workload import (DiurnalProfile, LoadTier, PopularityModel, Trace, gen_corpus, gen_diurnal_trace,
                       gen_poisson_trace, read_trace, target_distribution)

MINUTE_MS = 60_000.0


@dataclass(frozen=True)
class Job:
    index: int
    variant: int
    replicate: int
    policy: str
    capacity: int

    @property
    def tag(self) -> str:
        return f"run-{self.index:04d}-{self.policy}-c{self.capacity}-v{self.variant}-r{self.replicate}"


def plan(cfg: Mapping) -> list[Job]:
    """Every (variant, replicate, policy, capacity) in a fixed order."""
    jobs = []
    for v in range(len(cfg["variants"])):
        for r in range(cfg["replicates"]):
            for p in cfg["policies"]:
                for c in cfg["capacities"]:
                    jobs.append(Job(len(jobs), v, r, p, c))
    return jobs


def corpus_seed(cfg: Mapping, variant: int, replicate: int) -> int:
    return derive_seed(cfg["seed"], "corpus", variant, replicate)


def trace_seed(cfg: Mapping, variant: int, replicate: int) -> int:
    return derive_seed(cfg["seed"], "trace", variant, replicate)


def run_seed(cfg: Mapping, variant: int, replicate: int) -> int:
    # shared by every policy and capacity of a replicate: common random numbers
    return derive_seed(cfg["seed"], "run", variant, replicate)


def make_corpus(vcfg: Mapping, seed: int) -> Corpus:
    c = vcfg["corpus"]
    if c["path"] is not None:
        return Corpus.load(c["path"])
    return gen_corpus(c["n_attributes"], c["n_items"], seed, lifetime_scale=c["lifetime_scale"],
                      cf_at_expiry=c["cf_at_expiry"], n_providers=c["n_providers"], thresholds=c["thresholds"])


def make_trace(vcfg: Mapping, corpus: Corpus, seed: int) -> Trace:
    w = vcfg["workload"]
    if w["path"] is not None:
        return read_trace(w["path"])
    pop = w["popularity"]
    ids, probs = target_distribution(corpus, PopularityModel(pop["kind"], pop["exponent"], pop["normal_sigma"],
                                                             pop["attribute_share"]), seed)
    kinds = [corpus.kind_of(t) for t in ids]
    if w["kind"] == "diurnal":
        profile = DiurnalProfile.peak_offpeak(w["daily_total"], w["peak_mu"], w["peak_sigma"], w["off_mu"],
                                              w["off_sigma"])
        return gen_diurnal_trace(profile, ids, probs, seed, kinds)
    return gen_poisson_trace(LoadTier.named(w["tier"]), w["minutes"] * MINUTE_MS, ids, probs, seed, kinds)


@lru_cache(maxsize=8)
def _inputs(cfg_json: str, variant: int, replicate: int):
    cfg = json.loads(cfg_json)
    vcfg = cfgmod.variant_config(cfg, variant)
    corpus = make_corpus(vcfg, corpus_seed(cfg, variant, replicate))
    trace = make_trace(vcfg, corpus, trace_seed(cfg, variant, replicate))
    return vcfg, Universe(corpus), trace


def inputs(cfg: Mapping, variant: int = 0, replicate: int = 0):
    """(variant config, universe, trace) for one cell of the matrix; cached per process."""
    return _inputs(json.dumps(cfg, sort_keys=True), variant, replicate)


def run_spec(vcfg: Mapping, policy: str, capacity: int, seed: int) -> RunSpec:
    return RunSpec(policy, capacity, sweep_interval_ms=vcfg["cache"]["sweep_interval_ms"],
                   latency=LatencyModel.from_config(vcfg["latency"]),
                   params=PolicyParams.from_config(vcfg["dcmf"], vcfg["mcac"]), seed=seed,
                   log_retain=vcfg["output"]["log_retain"])


def execute(cfg: Mapping, job: Job) -> RunResult:
    vcfg, universe, trace = inputs(cfg, job.variant, job.replicate)
    return run(trace, universe, run_spec(vcfg, job.policy, job.capacity, run_seed(cfg, job.variant, job.replicate)))


def _execute_safe(cfg, job):
    try:
        return job, execute(cfg, job), None
    except Exception as exc:  # reported per run by the caller
        return job, None, f"{type(exc).__name__}: {exc}"


def execute_all(cfg: Mapping, jobs: list[Job], workers: int | None = None):
    """Run every job; results come back ordered by job index whatever the completion order.

    Returns a list of ``(job, result or None, error or None)``.
    """
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) <= 1:
        out = [_execute_safe(cfg, j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            out = list(pool.map(_execute_safe, [cfg] * len(jobs), jobs))
    return sorted(out, key=lambda t: t[0].index)
