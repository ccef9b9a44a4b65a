"""Run configuration: JSON documents layered as defaults < scenario preset <
config file < command-line flags."""
from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

SCENARIO_PACKAGE = "ctxcache.scenarios"


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "name": "default",
    "description": "",
    "seed": 42,
    "replicates": 1,
    "policies": ["dcmf", "mcac", "mgreedy", "mmyopic", "lru", "lfu"],
    "capacities": [500],
    "corpus": {
        "path": None,
        "n_attributes": 2100,
        "n_items": 600,
        "lifetime_scale": 1.0,
        "cf_at_expiry": 0.1,
        "n_providers": 30,
        "thresholds": {"reduced_speed_limit": 40.0, "high_congestion": 80.0, "low_visibility": 50.0},
    },
    "workload": {
        "path": None,
        "kind": "diurnal",
        "daily_total": 70_000,
        "peak_mu": 5250.0,
        "peak_sigma": 500.0,
        "off_mu": 1750.0,
        "off_sigma": 300.0,
        "tier": "medium",
        "minutes": 1440,
        "popularity": {"kind": "zipf", "exponent": 0.8, "normal_sigma": 0.2, "attribute_share": 0.3},
    },
    "cache": {"sweep_interval_ms": 60_000.0},
    "latency": {
        "hit": {"dist": "constant", "value": 5.0},
        "refresh": {"dist": "lognormal", "mu_log": 3.4011973816621555, "sigma_log": 0.3},
        "fetch": {"dist": "lognormal", "mu_log": 3.912023005428146, "sigma_log": 0.4},
    },
    "dcmf": {
        "alpha": 0.5,
        "beta": 0.5,
        "kappa": 0.5,
        "epsilon": 0.4,
        "window_ms": 1_800_000.0,
        "combination": "dst",
        "w_poa": 0.5,
        "w_cf": 0.5,
        "poa_evidence": "horizon",
        "evidence_horizon_ms": 1_800_000.0,
        "mass_source": "poa",
        "priority_poa": "score",
        "prefetch": True,
        "maut_weights": None,
        "ahp": None,
        "ranges": None,
    },
    "mcac": {"alpha": 0.5, "adapted_weights": [0.4, 0.3, 0.2, 0.1], "utility_weight": 0.25},
    "variants": [{}],
    "output": {"action_logs": True, "log_retain": False},
}

# keys whose values are free-form mappings rather than fixed schemas
_OPEN_KEYS = {("dcmf", "maut_weights"), ("dcmf", "ahp"), ("dcmf", "ranges"), ("corpus", "thresholds")}


def deep_merge(base: Mapping, over: Mapping, _path: tuple = ()) -> dict:
    """Recursive merge; mappings merge key by key, everything else replaces."""
    out = copy.deepcopy(dict(base))
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping) and (*_path, k) not in _OPEN_KEYS:
            out[k] = deep_merge(out[k], v, (*_path, k))
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_keys(doc: Mapping, schema: Mapping, path: str = "") -> None:
    for k, v in doc.items():
        if k not in schema:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(v, Mapping) and isinstance(schema[k], Mapping) \
                and tuple((path + k).split(".")) not in _OPEN_KEYS:
            _check_keys(v, schema[k], f"{path}{k}.")


def list_scenarios() -> dict[str, dict]:
    """Bundled presets keyed by name."""
    out = {}
    for entry in sorted(resources.files(SCENARIO_PACKAGE).iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            doc = json.loads(entry.read_text())
            out[doc["name"]] = doc
    return out


def scenario(name: str | int) -> dict:
    key = f"scenario{name}" if str(name).isdigit() else str(name)
    presets = list_scenarios()
    if key not in presets:
        raise ConfigError(f"unknown scenario {name!r}; available: {', '.join(presets)}")
    return presets[key]


def load_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return doc


def resolve(scenario_name=None, config_path=None, overrides: Mapping | None = None) -> dict:
    """Layer defaults, preset, file and flag overrides, then validate."""
    layers = []
    if scenario_name is not None:
        layers.append(scenario(scenario_name))
    if config_path is not None:
        layers.append(load_file(config_path))
    if overrides:
        layers.append(overrides)
    cfg = copy.deepcopy(DEFAULTS)
    for layer in layers:
        _check_keys(layer, DEFAULTS)
        cfg = deep_merge(cfg, layer)
    validate(cfg)
    return cfg


def validate(cfg: Mapping) -> None:
    from .policies import POLICIES, PolicyParams
    from .sim import LatencyModel

    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not isinstance(cfg["replicates"], int) or cfg["replicates"] < 1:
        raise ConfigError("replicates must be a positive integer")
    bad = [p for p in cfg["policies"] if p not in POLICIES]
    if bad or not cfg["policies"]:
        raise ConfigError(f"unknown policy {bad[0] if bad else None!r}; valid policies: {', '.join(POLICIES)}")
    caps = cfg["capacities"]
    if not caps or any(not isinstance(c, int) or c < 1 for c in caps):
        raise ConfigError("capacities must be positive integers")
    if list(caps) != sorted(caps):
        raise ConfigError("capacities must be ascending")
    c = cfg["corpus"]
    if c["path"] is not None and not Path(c["path"]).is_file():
        raise ConfigError(f"corpus file {c['path']} does not exist")
    if c["n_items"] < 1 or c["n_attributes"] < 1 or c["lifetime_scale"] <= 0 or c["n_providers"] < 1:
        raise ConfigError("corpus sizes, provider count and lifetime_scale must be positive")
    if not 0.0 < c["cf_at_expiry"] < 1.0:
        raise ConfigError("cf_at_expiry must lie in (0, 1)")
    w = cfg["workload"]
    if w["path"] is not None and not Path(w["path"]).is_file():
        raise ConfigError(f"trace file {w['path']} does not exist")
    if w["kind"] not in ("diurnal", "poisson"):
        raise ConfigError("workload.kind must be 'diurnal' or 'poisson'")
    if w["daily_total"] <= 0 or w["minutes"] <= 0:
        raise ConfigError("workload totals and durations must be positive")
    from .workload import LOAD_TIERS
    if w["tier"] not in LOAD_TIERS:
        raise ConfigError(f"unknown tier {w['tier']!r}; expected one of {sorted(LOAD_TIERS)}")
    if w["popularity"]["kind"] not in ("zipf", "normal"):
        raise ConfigError("popularity.kind must be 'zipf' or 'normal'")
    if not 0.0 <= w["popularity"]["attribute_share"] <= 1.0:
        raise ConfigError("attribute_share must lie in [0, 1]")
    if cfg["cache"]["sweep_interval_ms"] <= 0:
        raise ConfigError("cache.sweep_interval_ms must be positive")
    if not isinstance(cfg["variants"], list) or not cfg["variants"]:
        raise ConfigError("variants must be a non-empty list")
    try:
        LatencyModel.from_config(cfg["latency"])
        PolicyParams.from_config(cfg["dcmf"], cfg["mcac"]).resolved_maut_weights()
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    for v in cfg["variants"]:
        _check_keys(v, DEFAULTS)
        if "variants" in v:
            raise ConfigError("variants cannot nest")


def variant_config(cfg: Mapping, index: int) -> dict:
    return deep_merge({k: v for k, v in cfg.items() if k != "variants"}, cfg["variants"][index])


def dumps(cfg: Mapping) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)
