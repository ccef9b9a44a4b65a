"""Context-aware caching: evidence-combined freshness and access-probability
decisions, baseline policies, workload generators and a deterministic simulator."""
from ._accel import backend_name
from .cache import CacheAction, CacheEntry, CacheStore, DCMFCache, Outcome, decide
from .context import Corpus
from .evidence import (UNDECIDABLE, MassFunction, Thresholds, assign_masses, combine_dst, combine_weighted,
                       compute_cf, compute_thresholds, decay_for_lifetime)
from .evaluation import ahp_weights, compute_poa, compute_utility, prioritize
from .policies import POLICIES, PolicyParams, Universe, make_policy
from .sim import LatencyModel, RunSpec, run, sweep_capacities

__version__ = "0.1.0"

__all__ = [
    "backend_name", "CacheAction", "CacheEntry", "CacheStore", "DCMFCache", "Outcome", "decide", "Corpus",
    "UNDECIDABLE", "MassFunction", "Thresholds", "assign_masses", "combine_dst", "combine_weighted",
    "compute_cf", "compute_thresholds", "decay_for_lifetime", "ahp_weights", "compute_poa", "compute_utility",
    "prioritize", "POLICIES", "PolicyParams", "Universe", "make_policy", "LatencyModel", "RunSpec", "run",
    "sweep_capacities",
]
