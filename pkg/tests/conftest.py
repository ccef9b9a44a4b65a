import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ctxcache import config
from ctxcache.context import AttributeDef, ContextAttribute, ContextItem, Corpus
from ctxcache.workload import Trace, gen_corpus, hazard_rule, roadwork_rule


def make_site(sign=True, speed=40.0, congestion=85.0, raining=True, visibility=30.0, lifetime=600_000.0):
    """One roadwork site: five attributes, a roadwork item and a hazard item."""
    def attr(aid, kind, value):
        return ContextAttribute(AttributeDef(aid, kind), value, validity_lifetime=lifetime)

    attrs = [
        attr("sign", "boolean", sign), attr("speed", "number", speed), attr("congestion", "number", congestion),
        attr("raining", "boolean", raining), attr("visibility", "number", visibility),
    ]
    items = [
        ContextItem("roadwork", ["sign", "speed", "congestion"], roadwork_rule("sign", "speed", "congestion")),
        ContextItem("hazard", ["roadwork", "raining", "visibility"], hazard_rule("roadwork", "raining", "visibility")),
    ]
    return Corpus(attrs, items)


def flat_corpus(n, lifetime=math.inf):
    """``n`` standalone numeric attributes; the simplest policy universe."""
    attrs = [ContextAttribute(AttributeDef(f"a{i:03d}", "number"), 0.0, validity_lifetime=lifetime)
             for i in range(n)]
    return Corpus(attrs, [])


def trace_of(ids, times, universe_ids=None):
    """Trace over explicit target ids at explicit times (ms)."""
    table = list(universe_ids or sorted(set(ids)))
    index = {t: i for i, t in enumerate(table)}
    return Trace(np.asarray(times), np.array([index[t] for t in ids]), np.zeros(len(ids)), table,
                 ["attribute"] * len(table))


@pytest.fixture
def site():
    return make_site()


@pytest.fixture(scope="session")
def small_corpus():
    return gen_corpus(80, 20, seed=7)


@pytest.fixture
def small_cfg():
    """Scenario-1 shaped config shrunk to a few seconds of simulation."""
    return config.resolve(1, overrides={
        "corpus": {"n_attributes": 120, "n_items": 30},
        "workload": {"daily_total": 3000},
        "capacities": [20, 40],
    })
