import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ctxcache.evidence import (UNDECIDABLE, EvidenceError, MassFunction, Thresholds, assign_masses, combine_dst,
                               combine_weighted, compute_cf, compute_thresholds, decay_for_lifetime)

unit = st.floats(0.0, 1.0)
eps_st = st.floats(0.0, 0.99)


# -- freshness -------------------------------------------------------------

def test_cf_fresh_and_non_decaying():
    assert compute_cf(0.0, 3.7) == 1.0
    assert compute_cf(1e9, 0.0) == 1.0


def test_cf_one_over_e():
    assert compute_cf(10.0, 0.1) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert compute_cf(10.0, 0.1) == pytest.approx(0.367879, abs=1e-6)


@pytest.mark.parametrize("dt, lam", [(-1.0, 0.1), (1.0, -0.1)])
def test_cf_rejects_negative(dt, lam):
    with pytest.raises(EvidenceError):
        compute_cf(dt, lam)


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(1e-9, 1e-3))
def test_cf_semigroup(t1, t2, lam):
    assert compute_cf(t1 + t2, lam) == pytest.approx(compute_cf(t1, lam) * compute_cf(t2, lam), abs=1e-12)


@given(st.floats(0, 1e5), st.floats(1e-3, 1e5), st.floats(1e-6, 1e-3))
def test_cf_strictly_decreasing(t, dt, lam):
    a, b = compute_cf(t, lam), compute_cf(t + dt, lam)
    assert b <= a
    if a > 1e-300:
        assert b < a


def test_decay_for_lifetime_hits_target_at_expiry():
    lam = decay_for_lifetime(600_000.0, 0.5)
    assert compute_cf(600_000.0, lam) == pytest.approx(0.5, abs=1e-12)
    assert decay_for_lifetime(600_000.0) == pytest.approx(math.log(2) / 600_000.0)
    assert decay_for_lifetime(math.inf) == 0.0
    with pytest.raises(EvidenceError):
        decay_for_lifetime(0.0)
    with pytest.raises(EvidenceError):
        decay_for_lifetime(10.0, 1.0)


# -- masses ----------------------------------------------------------------

@pytest.mark.parametrize("score, eps, expected", [
    (1.0, 0.0, (1.0, 0.0, 0.0)),
    (0.8, 0.0, (0.8, 0.2, 0.0)),
    (0.5, 0.2, (0.4, 0.4, 0.2)),
])
def test_assign_masses(score, eps, expected):
    m = assign_masses(score, eps)
    assert (m.cache, m.evict, m.theta) == pytest.approx(expected, abs=1e-15)


def test_assign_masses_rejects_out_of_range():
    with pytest.raises(EvidenceError):
        assign_masses(1.2)
    with pytest.raises(EvidenceError):
        assign_masses(0.5, 1.0)


def test_mass_function_validates():
    with pytest.raises(EvidenceError):
        MassFunction(0.6, 0.6, 0.0)
    with pytest.raises(EvidenceError):
        MassFunction(-0.1, 1.1, 0.0)


# -- combination -----------------------------------------------------------

def test_full_agreement():
    c, k = combine_dst(assign_masses(1.0), assign_masses(1.0))
    assert (c.cache, c.evict, c.theta, k) == (1.0, 0.0, 0.0, 0.0)


def test_worked_conflict_case():
    c, k = combine_dst(assign_masses(0.8), assign_masses(0.3))
    assert k == pytest.approx(0.62, abs=1e-15)
    assert c.cache == pytest.approx(0.24 / 0.38, abs=1e-12)
    assert c.evict == pytest.approx(0.14 / 0.38, abs=1e-12)
    assert c.cache == pytest.approx(0.63158, abs=1e-5)


def test_total_conflict_is_undecidable():
    c, k = combine_dst(assign_masses(1.0), assign_masses(0.0))
    assert c is UNDECIDABLE
    assert k == 1.0
    assert not c


@settings(max_examples=300)
@given(unit, unit, eps_st, unit, unit, eps_st)
def test_matches_focal_set_oracle(p1, c1, e1, p2, c2, e2):
    m1, m2 = assign_masses(p1, e1), assign_masses(p2, e2)
    got, k = combine_dst(m1, m2)
    want, k_ref = oracles.dempster(oracles.masses(p1, e1), oracles.masses(p2, e2))
    assert k == pytest.approx(k_ref, abs=1e-12)
    if want is None:
        assert got is UNDECIDABLE
        return
    assert got.cache == pytest.approx(want.get(oracles.CACHE, 0.0), abs=1e-12)
    assert got.evict == pytest.approx(want.get(oracles.EVICT, 0.0), abs=1e-12)
    assert got.theta == pytest.approx(want.get(oracles.THETA, 0.0), abs=1e-12)
    assert got.cache + got.evict + got.theta == pytest.approx(1.0, abs=1e-9)


@given(unit, unit, eps_st, eps_st)
def test_commutative(a, b, e1, e2):
    x, kx = combine_dst(assign_masses(a, e1), assign_masses(b, e2))
    y, ky = combine_dst(assign_masses(b, e2), assign_masses(a, e1))
    assert kx == pytest.approx(ky, abs=1e-12)
    if x is UNDECIDABLE:
        assert y is UNDECIDABLE
    else:
        assert (x.cache, x.evict, x.theta) == pytest.approx((y.cache, y.evict, y.theta), abs=1e-12)


def test_monotone_in_poa_on_grid():
    grid = np.linspace(0.0, 1.0, 41)
    for cf in grid[1:-1]:
        beliefs = [combine_dst(assign_masses(p), assign_masses(cf))[0].cache for p in grid]
        assert np.all(np.diff(beliefs) >= -1e-12)


def test_weighted_alternative():
    assert combine_weighted(0.8, 0.3) == pytest.approx(0.55)
    assert combine_weighted(0.8, 0.3, 1.0, 0.0) == 0.8


# -- thresholds ------------------------------------------------------------

def test_thresholds_substitution():
    # mean 0.6, population sd 0.2
    th = compute_thresholds([0.4, 0.8], 0.5)
    assert (th.update, th.evict) == pytest.approx((0.5, 0.4), abs=1e-12)


def test_thresholds_degenerate():
    th = compute_thresholds([0.7, 0.7, 0.7], 3.0)
    assert (th.update, th.evict) == pytest.approx((0.7, 0.7))
    th = compute_thresholds([0.7], 0.5)
    assert th.update == th.evict == pytest.approx(0.7)


def test_thresholds_clamped_at_zero():
    # mean 0.3, population sd 0.4
    th = compute_thresholds([-0.1, 0.7], 1.0)
    assert th.evict == 0.0
    assert th.update == pytest.approx(0.0)


def test_thresholds_errors():
    with pytest.raises(EvidenceError):
        compute_thresholds([], 0.5)
    with pytest.raises(EvidenceError):
        compute_thresholds([0.5], 0.0)
    with pytest.raises(EvidenceError):
        Thresholds(0.3, 0.4)


@given(st.lists(unit, min_size=1, max_size=50), st.floats(0.01, 3.0))
def test_thresholds_oracle(scores, kappa):
    th = compute_thresholds(scores, kappa)
    assert (th.update, th.evict) == pytest.approx(oracles.thresholds(scores, kappa), abs=1e-12)
    assert 0.0 <= th.evict <= th.update <= 1.0
