from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankone_lab import (Construction, ConstructionSpec, FloorSet, IntersectionQuery, StageParams, brute_force_oracle,
                         correlation, lag_census, multi_intersection, power_sum, sidon_schedule, x1_correlation)
from rankone_lab.correlation import brute_force_x1_series, difference_counts, stage_lower_bound
from rankone_lab.errors import InvalidInput, NotExact


def test_zero_lag_is_full_measure(chacon):
    v = x1_correlation(chacon, 0)
    assert v.exact and v.value == 1


def test_chacon_lag_one_brackets_half(chacon):
    v = x1_correlation(chacon, 1, eps=Fraction(1, 100))
    assert (v.lo, v.hi) == (Fraction(121, 243), Fraction(122, 243))
    assert v.lo <= Fraction(1, 2) <= v.hi
    assert not v.exact
    with pytest.raises(NotExact):
        _ = v.value


def test_chacon_oracle_lower_bounds(chacon):
    x = Construction(chacon).x1(1)
    got = [brute_force_oracle(chacon, L, 1, x, x) for L in (2, 3, 4)]
    assert got == [Fraction(1, 3), Fraction(4, 9), Fraction(13, 27)]


def test_exact_on_finite_sidon(fast3):
    c = Construction(fast3)
    x = c.x1(1)
    for n in (1, 17, 577, 3457, 4034):
        v = correlation(fast3, n, x, x)
        assert v.exact
        assert v.value == brute_force_oracle(fast3, 2, n, x, x)
    assert correlation(fast3, 577, x, x).value == Fraction(1, 3)


def test_symmetry_in_lag(fast3):
    for n in (3, 11, 40):
        assert x1_correlation(fast3, n).value == x1_correlation(fast3, -n).value


def test_negative_eps_rejected(chacon):
    with pytest.raises(InvalidInput):
        x1_correlation(chacon, 1, eps=-1)


def test_best_effort_returns_interval(chacon):
    x = Construction(chacon).x1(1)
    q = IntersectionQuery(((1, x), (0, x)))
    v = multi_intersection(chacon, q, max_stage=3, best_effort=True)
    assert v.lo < v.hi and v.stage == 3
    with pytest.raises(NotExact):
        multi_intersection(chacon, q, max_stage=3)


def test_empty_query_rejected():
    with pytest.raises(InvalidInput):
        IntersectionQuery(())


def test_three_fold_intersection_matches_dense(fast3):
    c = Construction(fast3)
    x = c.x1(2)
    q = IntersectionQuery(((0, x), (3, x), (9, x)))
    v = multi_intersection(fast3, q)
    lifted = c.lift(x, 5)
    dense = lifted & lifted.translate(-3) & lifted.translate(-9)
    assert v.value == c.measure(dense.clip(0, c.height(5)))


def test_power_sum_small_values(fast3):
    assert power_sum(fast3, 1, 1) == 1
    assert power_sum(fast3, 1, 2) == Fraction(5, 3)


def test_difference_counts_symmetric(fast3):
    D, fm = difference_counts(fast3, 50, start=2)
    assert all(D[n] == D[-n] for n in D)
    assert D[0] * fm == 1


def test_census_stage_two(fast3):
    out = lag_census(fast3, 2)
    assert out["count_at_1_over_r"] == out["expected"] == 3
    assert out["values"] == {Fraction(1, 3): 3, Fraction(1, 9): 18}


def test_series_oracle_agrees_with_pointwise(small_sidon):
    c = Construction(small_sidon)
    x = c.x1(1)
    lags = [0, 1, 3, 8, 13, -7]
    assert brute_force_x1_series(small_sidon, 4, lags) == [brute_force_oracle(small_sidon, 4, n, x, x) for n in lags]
    assert brute_force_x1_series(small_sidon, 4, [0]) == [1]


def random_spec(rng: random.Random) -> ConstructionSpec:
    h1 = rng.randint(1, 3)
    stages = []
    h = h1
    for _ in range(3):
        r = rng.randint(2, 3)
        s = tuple(rng.randint(0, 4) for _ in range(r))
        stages.append(StageParams(r, s))
        h = h * r + sum(s)
    return ConstructionSpec(h1, tuple(stages))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 30))
def test_stage_bound_matches_oracle(seed, lag):
    spec = random_spec(random.Random(seed))
    c = Construction(spec)
    A = c.x1(2)
    B = FloorSet.of_intervals([(0, c.height(2) // 2 + 1)], 2)
    n = lag % c.height(3)
    q = IntersectionQuery(((n, A), (0, B)))
    assert stage_lower_bound(spec, q, 4) == brute_force_oracle(spec, 4, n, A, B)


def test_sidon_schedule_used_by_fixture_is_finite(fast3):
    assert fast3.n_stages == 5
    assert sidon_schedule([3] * 5).n_stages == 5
