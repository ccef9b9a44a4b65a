"""Context attributes, rule-inferred context items and the corpus that holds them.

Items are pure conjunctions of region tests over attributes or other items.
Item-on-item references form a DAG that is topologically sorted at load time.
"""
from __future__ import annotations

import graphlib
import json
import math
import numbers
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .evidence import decay_for_lifetime

CORPUS_SCHEMA = "ctxcache-corpus/1"

KINDS = ("boolean", "number", "coordinate", "timestamp", "label")


class ContextError(ValueError):
    pass


class KindMismatchError(ContextError):
    pass


class MissingAttributeError(ContextError, KeyError):
    def __init__(self, attr_id):
        super().__init__(f"unknown attribute or item {attr_id!r}")
        self.attr_id = attr_id

    def __str__(self):
        return self.args[0]


class CycleError(ContextError):
    pass


# --------------------------------------------------------------------------
# values and regions
# --------------------------------------------------------------------------

def value_kind(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, str):
        return "label"
    if isinstance(value, numbers.Real):
        return "number"
    if isinstance(value, (tuple, list)) and len(value) == 2:
        return "coordinate"
    raise KindMismatchError(f"cannot infer a kind for {value!r}")


def check_value(value, kind: str):
    """Validate ``value`` against ``kind`` and return it in canonical form."""
    if kind == "boolean":
        if not isinstance(value, bool):
            raise KindMismatchError(f"expected boolean, got {value!r}")
        return value
    if kind == "label":
        if not isinstance(value, str):
            raise KindMismatchError(f"expected label, got {value!r}")
        return value
    if kind in ("number", "timestamp"):
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            raise KindMismatchError(f"expected {kind}, got {value!r}")
        if kind == "timestamp" and value < 0:
            raise ContextError(f"timestamps must be non-negative, got {value}")
        return value
    if kind == "coordinate":
        if not isinstance(value, (tuple, list)) or len(value) != 2:
            raise KindMismatchError(f"expected (lat, lon), got {value!r}")
        lat, lon = float(value[0]), float(value[1])
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ContextError(f"coordinate out of range: {value!r}")
        return (lat, lon)
    raise ContextError(f"unknown kind {kind!r}")


@dataclass(frozen=True)
class Equals:
    value: Any
    kinds = ("boolean", "label")

    def contains(self, v) -> bool:
        return v == self.value

    def to_json(self):
        return {"type": "eq", "value": self.value}


@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    hi: float = math.inf
    lo_open: bool = False
    hi_open: bool = False
    kinds = ("number", "timestamp")

    def __post_init__(self):
        if self.lo > self.hi:
            raise ContextError(f"interval lo {self.lo} > hi {self.hi}")

    def contains(self, v) -> bool:
        above = v > self.lo if self.lo_open else v >= self.lo
        below = v < self.hi if self.hi_open else v <= self.hi
        return above and below

    def to_json(self):
        return {
            "type": "interval",
            "lo": None if math.isinf(self.lo) else self.lo,
            "hi": None if math.isinf(self.hi) else self.hi,
            "lo_open": self.lo_open,
            "hi_open": self.hi_open,
        }


@dataclass(frozen=True)
class BoundingBox:
    lat_lo: float
    lat_hi: float
    lon_lo: float
    lon_hi: float
    kinds = ("coordinate",)

    def __post_init__(self):
        if self.lat_lo > self.lat_hi or self.lon_lo > self.lon_hi:
            raise ContextError("bounding box bounds are inverted")

    def contains(self, v) -> bool:
        lat, lon = v
        return self.lat_lo <= lat <= self.lat_hi and self.lon_lo <= lon <= self.lon_hi

    def to_json(self):
        return {"type": "bbox", "lat": [self.lat_lo, self.lat_hi], "lon": [self.lon_lo, self.lon_hi]}


Region = Equals | Interval | BoundingBox


def region_from_json(d: Mapping) -> Region:
    t = d.get("type")
    if t == "eq":
        return Equals(d["value"])
    if t == "interval":
        lo = -math.inf if d.get("lo") is None else d["lo"]
        hi = math.inf if d.get("hi") is None else d["hi"]
        return Interval(lo, hi, bool(d.get("lo_open", False)), bool(d.get("hi_open", False)))
    if t == "bbox":
        return BoundingBox(d["lat"][0], d["lat"][1], d["lon"][0], d["lon"][1])
    raise ContextError(f"unknown region type {t!r}")


def evaluate_region(value, region: Region, kind: str | None = None) -> bool:
    kind = kind or value_kind(value)
    if kind not in region.kinds:
        raise KindMismatchError(f"{kind} value cannot be tested against a {type(region).__name__} region")
    return region.contains(check_value(value, kind))


# --------------------------------------------------------------------------
# corpus types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeDef:
    id: str
    kind: str
    unit: str = ""
    acceptable_region: Region | None = None

    def __post_init__(self):
        if self.kind not in KINDS or self.kind == "label":
            raise ContextError(f"attribute {self.id!r} has invalid kind {self.kind!r}")
        if self.acceptable_region is not None and self.kind not in self.acceptable_region.kinds:
            raise KindMismatchError(f"region of {self.id!r} does not fit kind {self.kind}")


@dataclass
class ContextAttribute:
    definition: AttributeDef
    value: Any
    last_update: float = 0.0
    validity_lifetime: float = math.inf
    decay_lambda: float | None = None
    provider: str = ""
    utility: dict = field(default_factory=dict)

    def __post_init__(self):
        self.value = check_value(self.value, self.definition.kind)
        if self.validity_lifetime <= 0:
            raise ContextError(f"{self.id}: validity_lifetime must be positive")
        if self.decay_lambda is None:
            self.decay_lambda = decay_for_lifetime(self.validity_lifetime)
        if self.decay_lambda < 0:
            raise ContextError(f"{self.id}: decay_lambda must be non-negative")
        if self.last_update < 0:
            raise ContextError(f"{self.id}: last_update must be non-negative")

    @property
    def id(self) -> str:
        return self.definition.id


@dataclass(frozen=True)
class Conjunct:
    source: str
    region: Region
    negate: bool = False


@dataclass(frozen=True)
class InferenceRule:
    conjuncts: tuple
    output: Any = True
    otherwise: Any = False

    def __post_init__(self):
        if not self.conjuncts:
            raise ContextError("an inference rule needs at least one conjunct")


@dataclass
class ContextItem:
    id: str
    attribute_ids: list
    rule: InferenceRule
    derived_value: Any = None
    last_inferred: float | None = None
    validity_lifetime: float | None = None
    decay_lambda: float | None = None
    provider: str = ""
    utility: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.attribute_ids:
            raise ContextError(f"item {self.id!r} references no attributes")
        missing = {c.source for c in self.rule.conjuncts} - set(self.attribute_ids)
        if missing:
            raise ContextError(f"item {self.id!r} rule uses undeclared inputs {sorted(missing)}")


# --------------------------------------------------------------------------
# corpus
# --------------------------------------------------------------------------

class Corpus:
    def __init__(self, attributes: Iterable[ContextAttribute], items: Iterable[ContextItem]):
        self.attributes: dict[str, ContextAttribute] = {}
        for a in attributes:
            if a.id in self.attributes:
                raise ContextError(f"duplicate attribute id {a.id!r}")
            self.attributes[a.id] = a
        self.items: dict[str, ContextItem] = {}
        for it in items:
            if it.id in self.items or it.id in self.attributes:
                raise ContextError(f"duplicate id {it.id!r}")
            self.items[it.id] = it
        for it in self.items.values():
            for src in it.attribute_ids:
                if src not in self.attributes and src not in self.items:
                    raise MissingAttributeError(src)
        self.order = self._topological_order()
        self._inputs: dict[str, frozenset] = {}
        for item_id in self.order:
            it = self.items[item_id]
            acc = set()
            for src in it.attribute_ids:
                acc |= self._inputs[src] if src in self.items else {src}
            self._inputs[item_id] = frozenset(acc)
            if it.validity_lifetime is None:
                it.validity_lifetime = min(self.attributes[a].validity_lifetime for a in acc)
            if it.decay_lambda is None:
                it.decay_lambda = max(self.attributes[a].decay_lambda for a in acc)

    def _topological_order(self) -> list[str]:
        graph = {i: [s for s in it.attribute_ids if s in self.items] for i, it in self.items.items()}
        try:
            order = list(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise CycleError(f"item dependency cycle: {exc.args[1]}") from None
        return order

    # -- queries ----------------------------------------------------------
    def inputs_used(self, item_id: str) -> frozenset:
        """Attribute ids an item is transitively inferred from."""
        if item_id in self.attributes:
            return frozenset({item_id})
        try:
            return self._inputs[item_id]
        except KeyError:
            raise MissingAttributeError(item_id) from None

    def target_ids(self) -> list[str]:
        """Every cacheable id: items first (in sorted order), then attributes."""
        return sorted(self.items) + sorted(self.attributes)

    def kind_of(self, target_id: str) -> str:
        if target_id in self.items:
            return "item"
        if target_id in self.attributes:
            return "attribute"
        raise MissingAttributeError(target_id)

    def lifetime(self, target_id: str) -> float:
        obj = self.items.get(target_id) or self.attributes.get(target_id)
        if obj is None:
            raise MissingAttributeError(target_id)
        return obj.validity_lifetime

    def decay(self, target_id: str) -> float:
        obj = self.items.get(target_id) or self.attributes.get(target_id)
        if obj is None:
            raise MissingAttributeError(target_id)
        return obj.decay_lambda

    def utility(self, target_id: str) -> dict:
        obj = self.items.get(target_id) or self.attributes.get(target_id)
        if obj is None:
            raise MissingAttributeError(target_id)
        return obj.utility

    # -- inference --------------------------------------------------------
    def update_attribute(self, attr_id: str, value, now: float) -> None:
        attr = self.attributes.get(attr_id)
        if attr is None:
            raise MissingAttributeError(attr_id)
        attr.value = check_value(value, attr.definition.kind)
        attr.last_update = now
        for it in self.items.values():
            if attr_id in self._inputs[it.id]:
                it.derived_value = None

    def infer_all(self, now: float) -> dict:
        return {item_id: infer_item(self.items[item_id], self, now)[0] for item_id in self.order}

    # -- serialisation ----------------------------------------------------
    def to_json(self) -> dict:
        attrs = []
        for a in self.attributes.values():
            d = a.definition
            attrs.append({
                "id": d.id,
                "kind": d.kind,
                "unit": d.unit,
                "acceptable_region": None if d.acceptable_region is None else d.acceptable_region.to_json(),
                "value": list(a.value) if d.kind == "coordinate" else a.value,
                "last_update": a.last_update,
                "validity_lifetime_ms": None if math.isinf(a.validity_lifetime) else a.validity_lifetime,
                "decay_lambda": a.decay_lambda,
                "provider": a.provider,
                "utility": a.utility,
            })
        items = []
        for it in self.items.values():
            items.append({
                "id": it.id,
                "attribute_ids": list(it.attribute_ids),
                "rule": {
                    "conjuncts": [
                        {"source": c.source, "region": c.region.to_json(), "negate": c.negate}
                        for c in it.rule.conjuncts
                    ],
                    "output": it.rule.output,
                    "otherwise": it.rule.otherwise,
                },
                "provider": it.provider,
                "utility": it.utility,
            })
        return {"schema": CORPUS_SCHEMA, "attributes": attrs, "items": items}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Corpus":
        if doc.get("schema") != CORPUS_SCHEMA:
            raise ContextError(f"unsupported corpus schema {doc.get('schema')!r}")
        attrs = []
        for a in doc["attributes"]:
            region = a.get("acceptable_region")
            definition = AttributeDef(a["id"], a["kind"], a.get("unit", ""),
                                      None if region is None else region_from_json(region))
            life = a.get("validity_lifetime_ms")
            attrs.append(ContextAttribute(
                definition,
                a["value"],
                last_update=a.get("last_update", 0.0),
                validity_lifetime=math.inf if life is None else life,
                decay_lambda=a.get("decay_lambda"),
                provider=a.get("provider", ""),
                utility=dict(a.get("utility", {})),
            ))
        items = []
        for it in doc["items"]:
            r = it["rule"]
            rule = InferenceRule(
                tuple(Conjunct(c["source"], region_from_json(c["region"]), bool(c.get("negate", False)))
                      for c in r["conjuncts"]),
                r.get("output", True),
                r.get("otherwise", False),
            )
            items.append(ContextItem(it["id"], list(it["attribute_ids"]), rule,
                                     provider=it.get("provider", ""), utility=dict(it.get("utility", {}))))
        return cls(attrs, items)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Corpus":
        return cls.from_json(json.loads(Path(path).read_text()))


def infer_item(item: ContextItem, corpus: Corpus, now: float):
    """Evaluate an item's rule.  Returns ``(derived_value, inputs_used)``.

    Dependency items must already hold a derived value; evaluate in
    ``corpus.order`` to guarantee that.
    """
    result = True
    for c in item.rule.conjuncts:
        if c.source in corpus.attributes:
            attr = corpus.attributes[c.source]
            ok = evaluate_region(attr.value, c.region, attr.definition.kind)
        elif c.source in corpus.items:
            dep = corpus.items[c.source]
            if dep.derived_value is None:
                raise ContextError(f"dependency {dep.id!r} of {item.id!r} has not been inferred")
            ok = evaluate_region(dep.derived_value, c.region)
        else:
            raise MissingAttributeError(c.source)
        if c.negate:
            ok = not ok
        if not ok:
            result = False
    item.derived_value = item.rule.output if result else item.rule.otherwise
    item.last_inferred = now
    return item.derived_value, corpus.inputs_used(item.id)
