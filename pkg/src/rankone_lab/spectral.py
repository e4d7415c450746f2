"""Norm diagnostics for averaged lag operators on tensor powers.

``S`` is the ``d``-fold tensor power of the map and ``F`` the indicator of
``X1^d``.  Because ``F`` is a product indicator, every inner product
``<S^a F, S^b F>`` equals ``c_{a-b}^d`` with ``c_n = mu(T^n X1 ∩ X1)``, so all
norms below are finite sums of powers of scalar correlations.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .correlation import (IntersectionQuery, Source, as_construction, difference_counts, multi_intersection,
                          power_sum)
from .errors import CombinatorialBudget, InvalidInput, NotExact, NotSidon
from .sidon import CnuDescriptor, check_sidon_stage, floor_power

PAIR_CAP = 4_000_000


def lag_family(source: Source, j: int) -> list[int]:
    """All offset differences ``q(i,j) - q(i',j)`` with ``i != i'``."""
    q = as_construction(source).q(j)
    return [a - b for a in q for b in q if a != b]


def product_rhs(source: Source, m: int, d: int) -> Fraction:
    c = as_construction(source)
    out = Fraction(1)
    for j in range(1, m):
        r = c.params(j).r
        out *= 1 + Fraction(r * r - r, r ** (2 * d))
    return out


def verify_41(source: Source, m: int, d: int) -> dict:
    lhs = power_sum(source, d, m)
    rhs = product_rhs(source, m, d)
    return {"m": m, "d": d, "lhs": lhs, "rhs": rhs, "equal": lhs == rhs}


# -- exact correlations on demand ---------------------------------------------


class CorrelationLookup:
    """Exact ``c_n`` for lags ``|n| <= span``.

    ``method="pairs"`` counts differences of X1 floors at a certified stage;
    ``method="engine"`` asks the interval engine lag by lag.
    """

    def __init__(self, source: Source, span: int, method: str = "pairs", start: int = 1):
        self.c = as_construction(source)
        self.span = span
        self.method = method
        self._cache: dict[int, Fraction] = {}
        if method == "pairs":
            self._D, self._fm = difference_counts(self.c, span, start=start)
        elif method != "engine":
            raise InvalidInput(f"unknown method {method!r}")

    def __call__(self, n: int) -> Fraction:
        n = abs(n)
        if n > self.span:
            raise InvalidInput(f"lag {n} outside the certified span {self.span}")
        if n not in self._cache:
            if self.method == "pairs":
                self._cache[n] = self._D.get(n, 0) * self._fm
            else:
                x1 = self.c.x1(1)
                self._cache[n] = multi_intersection(self.c, IntersectionQuery(((n, x1), (0, x1)))).value
        return self._cache[n]


def triple_measure(source: Source, a: int, b: int) -> Fraction:
    """``mu(T^a X1 ∩ T^b X1 ∩ X1)``, exact."""
    c = as_construction(source)
    x1 = c.x1(1)
    return multi_intersection(c, IntersectionQuery(((a, x1), (b, x1), (0, x1)))).value


# -- stage-level checks ----------------------------------------------------------


def lemma_disjointness_check(source: Source, j: int) -> bool:
    """Distinct lags of stage ``j`` never overlap outside X1."""
    c = as_construction(source)
    lags = lag_family(c, j)
    if len(set(lags)) != len(lags):
        return False
    x1 = c.x1(j + 1)
    for a in lags:
        for b in lags:
            if a >= b:
                continue
            both = multi_intersection(c, IntersectionQuery(((a, x1), (b, x1))), best_effort=True)
            inside = multi_intersection(c, IntersectionQuery(((a, x1), (b, x1), (0, x1))), best_effort=True)
            # unverifiable counts as a failure
            if not (both.exact and inside.exact and both.lo == inside.lo):
                return False
    return True


@dataclass
class SupportReport:
    j: int
    d: int
    r: int
    values_01: bool
    support: Fraction
    bound: int
    offending: tuple[int, int] | None = None

    @property
    def passed(self) -> bool:
        return self.values_01 and self.support < self.bound


def indicator_support_check(source: Source, j: int, d: int) -> SupportReport:
    """Check that ``(1 - F) Q_j(S) F`` is an indicator and bound its support.

    Off ``X1^d`` the function takes values in ``{0, 1}`` iff every pair of
    distinct translates ``S^a F``, ``S^b F`` overlaps only inside ``X1^d``,
    i.e. ``mu(T^a X1 ∩ T^b X1)^d == mu(T^a X1 ∩ T^b X1 ∩ X1)^d``.  Its support
    then has measure ``sum_a (1 - c_a^d)``.
    """
    c = as_construction(source)
    if not check_sidon_stage(c, j).sidon:
        raise NotSidon(f"stage {j} is not certified Sidon")
    lags = lag_family(c, j)
    if len(set(lags)) != len(lags):
        raise NotSidon(f"stage {j} has repeated offset differences")
    x1 = c.x1(j + 1)
    ok, bad = True, None
    for a in lags:
        for b in lags:
            if a >= b:
                continue
            c2 = multi_intersection(c, IntersectionQuery(((a, x1), (b, x1)))).value
            c3 = multi_intersection(c, IntersectionQuery(((a, x1), (b, x1), (0, x1)))).value
            if c2**d - c3**d != 0:
                ok, bad = False, (a, b)
                break
        if not ok:
            break
    support = sum((1 - multi_intersection(c, IntersectionQuery(((a, x1), (0, x1)))).value ** d) for a in lags)
    r = c.params(j).r
    return SupportReport(j, d, r, ok, support, r * r - r, bad)


# -- averaged lag operators ---------------------------------------------------------


def weighted_lag_norm(lookup, weights: dict[int, Fraction], d: int, p: int, subtract_f: bool) -> Fraction:
    """``|| sum_l w_l S^{p l} F - [subtract_f] F ||^2`` via ``<S^a F, S^b F> = c_{a-b}^d``."""
    items = list(weights.items())
    if len(items) ** 2 > PAIR_CAP:
        raise CombinatorialBudget(f"{len(items) ** 2} lag pairs exceed the cap {PAIR_CAP}")
    total = Fraction(0)
    for a, wa in items:
        for b, wb in items:
            total += wa * wb * lookup(p * (a - b)) ** d
    if subtract_f:
        total -= 2 * sum(w * lookup(p * a) ** d for a, w in items)
        total += 1
    return total


def block_stages(desc: CnuDescriptor, k: int, n_eff: int | None = None) -> tuple[int, int, list[int]]:
    """``(r, N_k, stages)`` of block ``k`` truncated to ``n_eff`` stages."""
    blocks = {kk: (j, r) for kk, j, r in desc.blocks(10_000) if kk <= k}
    if k not in blocks:
        raise InvalidInput(f"block {k} not reachable")
    j0, r = blocks[k]
    nk = floor_power(r, desc.nu)
    n = nk if n_eff is None else min(n_eff, nk)
    if n < 1:
        raise InvalidInput("a block needs at least one stage")
    return r, nk, list(range(j0, j0 + n))


@dataclass
class PkNormReport:
    k: int
    d: int
    p: int
    r: int
    a_k: Fraction
    N_k: int
    N_eff: int
    stages: list[int]
    dist_lo: Fraction
    dist_hi: Fraction
    variance: Fraction | None = None
    outside: Fraction | None = None
    closed_form: Fraction | None = None
    disjoint_support: bool | None = None
    cost_pairs: int = 0
    method: str = "pairs"
    extra: dict = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.dist_lo == self.dist_hi

    @property
    def dist(self) -> Fraction:
        if not self.exact:
            raise NotExact("norm only known as an interval")
        return self.dist_lo


def block_lags(source: Source, stages: Iterable[int]) -> list[int]:
    out: list[int] = []
    for j in stages:
        out.extend(lag_family(source, j))
    return out


def pk_cost(source: Source, desc: CnuDescriptor, k: int, n_eff: int | None = None) -> int:
    c = as_construction(source)
    r, _, stages = block_stages(desc, k, n_eff)
    m = sum(c.params(j).r ** 2 - c.params(j).r for j in stages)
    return m * m


def pk_norm(source: Source, desc: CnuDescriptor, k: int, d: int, p: int, n_eff: int | None = None,
            decompose: bool = False, method: str = "pairs") -> PkNormReport:
    """``|| P_k(S^p) F - [p = 1] F ||^2`` for block ``k`` (optionally truncated)."""
    if d < 1 or p < 1:
        raise InvalidInput("d and p must be >= 1")
    c = as_construction(source)
    r, nk, stages = block_stages(desc, k, n_eff)
    for j in stages:
        if c.params(j).r != r:
            raise InvalidInput(f"stage {j} has r={c.params(j).r}, block {k} expects {r}")
    n = len(stages)
    a_k = Fraction(r - 1) * Fraction(r) ** (1 - d)
    norm = a_k * n
    lags = block_lags(c, stages)
    cost = len(lags) ** 2
    if cost > PAIR_CAP:
        raise CombinatorialBudget(f"block {k} needs {cost} lag pairs (cap {PAIR_CAP})")
    weights = Counter()
    for lam in lags:
        weights[lam] += 1
    w = {lam: Fraction(m) / norm for lam, m in weights.items()}
    span = p * (max(lags) - min(lags))
    lookup = CorrelationLookup(c, span, method=method, start=stages[-1] + 1 if method == "pairs" else 1)
    dist = weighted_lag_norm(lookup, w, d, p, p == 1)
    rep = PkNormReport(k, d, p, r, a_k, nk, n, stages, dist, dist, cost_pairs=cost, method=method)
    if p > 1:
        off = all(lookup(p * (a - b)) == 0 for a in weights for b in weights if a != b)
        repeated = any(m > 1 for m in weights.values())
        rep.disjoint_support = off and not repeated
        rep.closed_form = Fraction(r * r - r, 1) * n / norm**2
    if decompose and p == 1:
        gf = Fraction(0)
        for a, wa in w.items():
            for b, wb in w.items():
                gf += wa * wb * triple_measure(c, a, b) ** d
        g = weighted_lag_norm(lookup, w, d, 1, False)
        inner = sum(wa * lookup(a) ** d for a, wa in w.items())
        rep.variance = gf - 2 * inner + 1
        rep.outside = g - gf
    return rep


def repeated_average_norm(source: Source, desc: CnuDescriptor, ks: Sequence[int], d: int, p: int,
                          n_eff: int | None = None, method: str = "pairs") -> Fraction:
    """``|| R(S^p) F - [p = 1] F ||^2`` for ``R = mean_k P_k`` over the blocks ``ks``."""
    c = as_construction(source)
    w: Counter = Counter()
    lo = hi = None
    last = 0
    for k in ks:
        r, _, stages = block_stages(desc, k, n_eff)
        norm = Fraction(r - 1) * Fraction(r) ** (1 - d) * len(stages)
        for lam in block_lags(c, stages):
            w[lam] += 1 / (norm * len(ks))
            lo = lam if lo is None else min(lo, lam)
            hi = lam if hi is None else max(hi, lam)
        last = max(last, stages[-1])
    lookup = CorrelationLookup(c, p * (hi - lo), method=method, start=last + 1 if method == "pairs" else 1)
    return weighted_lag_norm(lookup, dict(w), d, p, p == 1)
