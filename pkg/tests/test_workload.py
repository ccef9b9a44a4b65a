import math

import numpy as np
import pytest

from ctxcache.context import Corpus
from ctxcache.workload import (DAY_MS, HALF_HOUR_MS, PEAK_SLOTS, DiurnalProfile, LoadTier, PopularityModel, Trace,
                               WorkloadError, diurnal_slot_counts, gen_corpus, gen_diurnal_trace, gen_poisson_trace,
                               read_trace, stream, target_distribution, write_trace, zipf_probabilities)

IDS = [f"t{k}" for k in range(10)]
UNIFORM = np.full(10, 0.1)


# -- Poisson ---------------------------------------------------------------

@pytest.mark.parametrize("tier, per_minute", [("low", 30), ("medium", 60), ("high", 120)])
def test_poisson_hour_counts(tier, per_minute):
    tr = gen_poisson_trace(LoadTier.named(tier), 60 * 60_000, IDS, UNIFORM, seed=11)
    expected = per_minute * 60
    assert abs(len(tr) - expected) <= 3 * math.sqrt(expected)
    assert np.all(np.diff(tr.times_ms) >= 0)
    assert tr.times_ms.min() >= 0 and tr.times_ms.max() < 60 * 60_000


def test_poisson_zero_duration_is_empty():
    assert len(gen_poisson_trace(LoadTier.named("high"), 0, IDS, UNIFORM, seed=1)) == 0


def test_poisson_mean_interarrival():
    tr = gen_poisson_trace(LoadTier("custom", 4.0), 3_600_000, IDS, UNIFORM, seed=5)
    gaps = np.diff(tr.times_ms)
    se = 250.0 / math.sqrt(len(gaps))
    # timestamps are floored to whole ms, which shifts gaps by < 1 ms on average
    assert abs(gaps.mean() - 250.0) <= 3 * se + 1.0


def test_tier_validation():
    with pytest.raises(WorkloadError):
        LoadTier.named("extreme")
    with pytest.raises(WorkloadError):
        LoadTier("x", 0.0)


# -- diurnal ---------------------------------------------------------------

def test_default_profile_shape():
    prof = DiurnalProfile.peak_offpeak()
    assert len(prof.mu) == 48
    assert prof.expected_total == pytest.approx(70_000)
    # peaks 06:00-11:00 and 15:00-18:00
    assert PEAK_SLOTS == set(range(12, 22)) | set(range(30, 36))
    ratio = prof.mu[12] / prof.mu[0]
    assert ratio == pytest.approx(5250 / 1750)
    assert prof.sigma[12] / prof.mu[12] == pytest.approx(500 / 5250)


def test_diurnal_total_within_three_sigma():
    prof = DiurnalProfile.peak_offpeak()
    tr = gen_diurnal_trace(prof, IDS, UNIFORM, seed=3)
    assert abs(len(tr) - 70_000) <= 3 * prof.total_sigma
    assert tr.times_ms.max() < DAY_MS


def test_zero_sigma_exact_counts():
    prof = DiurnalProfile((100.0, 250.0, 40.0), (0.0, 0.0, 0.0))
    counts = diurnal_slot_counts(prof, seed=9)
    assert counts.tolist() == [100, 250, 40]
    tr = gen_diurnal_trace(prof, IDS, UNIFORM, seed=9)
    per_slot = np.bincount(tr.times_ms // int(HALF_HOUR_MS), minlength=3)
    assert per_slot.tolist() == [100, 250, 40]


def test_single_slot_profile():
    tr = gen_diurnal_trace(DiurnalProfile((100.0,), (0.0,)), IDS, UNIFORM, seed=2)
    assert len(tr) == 100
    assert tr.times_ms.max() < HALF_HOUR_MS


def test_diurnal_truncates_at_zero():
    counts = diurnal_slot_counts(DiurnalProfile((1.0,) * 200, (50.0,) * 200), seed=1)
    assert counts.min() == 0


def test_profile_validation():
    with pytest.raises(WorkloadError):
        DiurnalProfile((1.0, 2.0), (0.0,))
    with pytest.raises(WorkloadError):
        DiurnalProfile((0.0,), (0.0,))


# -- popularity ------------------------------------------------------------

def test_zipf_probabilities():
    p = zipf_probabilities(4, 1.0)
    h = 1 + 1 / 2 + 1 / 3 + 1 / 4
    np.testing.assert_allclose(p, [1 / h, 1 / (2 * h), 1 / (3 * h), 1 / (4 * h)], atol=1e-15)


def test_zipf_empirical_frequencies():
    n = 50
    p = zipf_probabilities(n, 0.8)
    ids = [f"r{k:02d}" for k in range(n)]
    tr = gen_poisson_trace(LoadTier("fast", 100.0), 1_500_000, ids, p, seed=17)
    assert len(tr) >= 100_000
    freq = np.bincount(tr.targets, minlength=n) / len(tr)
    assert np.max(np.abs(freq - p)) < 0.02
    # chi-square sanity: statistic near its n-1 degrees of freedom
    chi2 = float(np.sum((freq - p) ** 2 / p) * len(tr))
    assert chi2 < (n - 1) + 5 * math.sqrt(2 * (n - 1))


def test_normal_popularity_decreasing():
    w = PopularityModel("normal", normal_sigma=0.2).rank_weights(100)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(np.diff(w) <= 0)
    with pytest.raises(WorkloadError):
        PopularityModel("pareto").rank_weights(3)


def test_target_distribution_shares(small_corpus):
    ids, p = target_distribution(small_corpus, PopularityModel(attribute_share=0.3), seed=4)
    n_items = len(small_corpus.items)
    assert ids[:n_items] == sorted(small_corpus.items)
    assert p[:n_items].sum() == pytest.approx(0.7)
    assert p[n_items:].sum() == pytest.approx(0.3)


# -- trace files -----------------------------------------------------------

def test_trace_round_trip(tmp_path):
    tr = gen_poisson_trace(LoadTier.named("medium"), 600_000, IDS, UNIFORM, seed=8, kinds=["item"] * 10)
    p = tmp_path / "t.csv"
    write_trace(tr, p)
    back = read_trace(p)
    assert back.equals(tr)
    q = tmp_path / "t2.csv"
    write_trace(back, q)
    assert p.read_bytes() == q.read_bytes()
    assert p.read_text().splitlines()[1] == "seq,timestamp_ms,kind,target_id,consumer_id"


def test_read_trace_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("seq,timestamp_ms,kind,target_id,consumer_id\n")
    with pytest.raises(WorkloadError):
        read_trace(p)
    p.write_text("# ctxcache-trace v1\nseq,timestamp_ms,kind,target_id,consumer_id\n0,5,blob,x,1\n")
    with pytest.raises(WorkloadError):
        read_trace(p)


def test_read_trace_sorts_stably(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# ctxcache-trace v1\nseq,timestamp_ms,kind,target_id,consumer_id\n"
                 "2,10,item,b,0\n0,10,item,a,0\n1,5,item,c,0\n")
    assert read_trace(p).target_ids() == ["c", "a", "b"]


def test_trace_validation():
    with pytest.raises(WorkloadError):
        Trace(np.array([2, 1]), np.array([0, 0]), np.array([0, 0]), ["x"])


def test_traces_reproducible():
    a = gen_diurnal_trace(DiurnalProfile.peak_offpeak(), IDS, UNIFORM, seed=21)
    b = gen_diurnal_trace(DiurnalProfile.peak_offpeak(), IDS, UNIFORM, seed=21)
    c = gen_diurnal_trace(DiurnalProfile.peak_offpeak(), IDS, UNIFORM, seed=22)
    assert a.equals(b) and not a.equals(c)


def test_substreams_independent():
    assert stream(5, 1).integers(0, 1 << 30) != stream(5, 2).integers(0, 1 << 30)
    assert stream(5, 1).integers(0, 1 << 30) == stream(5, 1).integers(0, 1 << 30)


# -- corpus ----------------------------------------------------------------

def test_corpus_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    gen_corpus(60, 10, seed=3).save(a)
    gen_corpus(60, 10, seed=3).save(b)
    assert a.read_bytes() == b.read_bytes()
    gen_corpus(60, 10, seed=4).save(b)
    assert a.read_bytes() != b.read_bytes()


def test_single_item_corpus_is_roadwork_rule():
    c = gen_corpus(7, 1, seed=0)
    assert len(c.items) == 1
    (item,) = c.items.values()
    assert item.id.startswith("ci-roadwork")
    kinds = [type(cj.region).__name__ for cj in item.rule.conjuncts]
    assert kinds == ["Equals", "Interval", "Interval"]
    assert item.rule.conjuncts[1].region.hi == 40.0
    assert item.rule.conjuncts[2].region.lo == 80.0
    assert isinstance(c.infer_all(0.0)[item.id], bool)


def test_corpus_round_trip(tmp_path, small_corpus):
    p = tmp_path / "c.json"
    small_corpus.save(p)
    back = Corpus.load(p)
    assert back.to_json() == small_corpus.to_json()
    assert [back.lifetime(t) for t in back.target_ids()] == [small_corpus.lifetime(t)
                                                              for t in small_corpus.target_ids()]


def test_corpus_lifetimes_scale_and_cf_at_expiry():
    base = gen_corpus(14, 2, seed=1)
    half = gen_corpus(14, 2, seed=1, lifetime_scale=0.5, cf_at_expiry=0.1)
    for aid in base.attributes:
        assert half.lifetime(aid) == pytest.approx(base.lifetime(aid) / 2, abs=1.0)
        lam = half.decay(aid)
        assert math.exp(-lam * half.lifetime(aid)) == pytest.approx(0.1)


def test_corpus_needs_enough_attributes():
    with pytest.raises(WorkloadError):
        gen_corpus(3, 4, seed=0)
    with pytest.raises(WorkloadError):
        gen_corpus(10, 0, seed=0)
