from __future__ import annotations

from collections import Counter
from fractions import Fraction

import pytest

from rankone_lab import (CnuDescriptor, generate_cnu, indicator_support_check, lemma_disjointness_check, pk_norm,
                         power_sum, product_rhs, sidon_schedule, verify_41, x1_correlation)
from rankone_lab.errors import InvalidInput, NotSidon
from rankone_lab.spectral import block_lags, block_stages, lag_family, repeated_average_norm


@pytest.fixture(scope="module")
def c2():
    desc = CnuDescriptor(2, base=2)
    return desc, generate_cnu(desc, 4)


def test_product_rhs_value(fast3):
    assert product_rhs(fast3, 3, 1) == Fraction(25, 9)
    assert product_rhs(fast3, 1, 2) == 1


def test_verify_matches(fast3):
    out = verify_41(fast3, 3, 1)
    assert out["equal"] and out["lhs"] == Fraction(25, 9)


def test_lag_family_size(fast3):
    assert len(lag_family(fast3, 1)) == 6
    assert sorted(lag_family(fast3, 1)) == sorted(-x for x in lag_family(fast3, 1))


def test_disjointness_and_support_on_c2(c2):
    _, spec = c2
    for j in (1, 2, 3):
        assert lemma_disjointness_check(spec, j)
        r1 = indicator_support_check(spec, j, 1)
        r2 = indicator_support_check(spec, j, 2)
        assert r1.passed and r2.passed
        assert (r1.support, r2.support) == (1, Fraction(3, 2))


def test_disjointness_fails_with_three_cuts():
    assert not lemma_disjointness_check(sidon_schedule([3, 3, 3, 3]), 1)


def test_support_check_requires_sidon(chacon):
    with pytest.raises(NotSidon):
        indicator_support_check(chacon, 1, 1)


@pytest.mark.parametrize("d, n_eff, value", [(1, 1, 2), (1, 3, Fraction(2, 3)), (2, 2, 4), (2, 3, Fraction(8, 3))])
def test_pk_square_closed_form(c2, d, n_eff, value):
    desc, spec = c2
    rep = pk_norm(spec, desc, 1, d, 2, n_eff=n_eff)
    assert rep.disjoint_support
    assert rep.dist == rep.closed_form == value


def expand_pk(spec, desc, k, d, n_eff):
    """``|| P_k(S) F - F ||^2`` written out term by term from engine correlations."""
    r, _, stages = block_stages(desc, k, n_eff)
    norm = Fraction(r - 1) * Fraction(r) ** (1 - d) * len(stages)
    lags = block_lags(spec, stages)
    c = lambda n: x1_correlation(spec, n).value ** d  # noqa: E731
    total = sum(c(a - b) for a in lags for b in lags) / norm**2
    total -= 2 * sum(c(a) for a in lags) / norm
    return total + 1


def test_pk_matches_expansion_three_cuts():
    desc = CnuDescriptor(2, base=3, block_rule=lambda k: 3 ** k)
    spec = generate_cnu(desc, 3)
    assert [p.r for p in spec.stages] == [3, 3, 3]
    rep = pk_norm(spec, desc, 1, 1, 1, n_eff=2)
    assert rep.dist == expand_pk(spec, desc, 1, 1, 2)
    assert pk_norm(spec, desc, 1, 1, 1, n_eff=2, method="engine").dist == rep.dist


def test_pk_decomposition_adds_up(c2):
    desc, spec = c2
    rep = pk_norm(spec, desc, 1, 1, 1, n_eff=2, decompose=True)
    assert rep.variance + rep.outside == rep.dist


def test_pk_rejects_bad_args(c2):
    desc, spec = c2
    with pytest.raises(InvalidInput):
        pk_norm(spec, desc, 1, 0, 1)


def test_repeated_average_single_block(c2):
    desc, spec = c2
    assert repeated_average_norm(spec, desc, [1], 1, 1, n_eff=2) == pk_norm(spec, desc, 1, 1, 1, n_eff=2).dist


def test_power_sum_on_c2(c2):
    _, spec = c2
    for m in (2, 3, 4):
        assert power_sum(spec, 2, m) == product_rhs(spec, m, 2)


def test_block_lags_multiplicity(c2):
    desc, spec = c2
    _, _, stages = block_stages(desc, 1, 3)
    counts = Counter(block_lags(spec, stages))
    assert all(v == 1 for v in counts.values())
