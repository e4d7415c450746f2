"""Exact intersection measures ``mu(T^{n_1} A_1 ∩ ... ∩ T^{n_k} A_k)``.

All sets are lifted to a common stage ``L`` and shifted as integer floor
sets.  Floors that stay inside the stage-``L`` window give an exact lower
bound; floors whose shift leaves the window are the only unresolved mass, so
their count gives a certified upper bound.  Raising ``L`` tightens both.

:func:`brute_force_oracle` recomputes the stage lower bound with dense
boolean arrays and shares no code with the interval path.
"""

from __future__ import annotations

import bisect
import weakref
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .errors import BudgetExceeded, InvalidInput, NotExact, StageUnavailable, TooLarge
from .tower import Construction, ConstructionSpec, FloorSet, intersect_all

_CONSTRUCTIONS: "weakref.WeakKeyDictionary[ConstructionSpec, Construction]" = weakref.WeakKeyDictionary()

Source = Union[Construction, ConstructionSpec]


def as_construction(source: Source) -> Construction:
    """Shared memoised :class:`Construction` for a spec (or the construction itself)."""
    if isinstance(source, Construction):
        return source
    c = _CONSTRUCTIONS.get(source)
    if c is None:
        c = Construction(source)
        _CONSTRUCTIONS[source] = c
    return c


@dataclass(frozen=True)
class CorrelationValue:
    lo: Fraction
    hi: Fraction
    exact: bool
    stage: int

    @property
    def value(self) -> Fraction:
        if not self.exact:
            raise NotExact(f"value only known within [{self.lo}, {self.hi}]")
        return self.lo

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo


@dataclass(frozen=True)
class IntersectionQuery:
    """``terms`` is a sequence of ``(shift, set)``; the query is ``∩ T^shift set``."""

    terms: tuple[tuple[int, FloorSet], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple((int(n), fs) for n, fs in self.terms))
        if not self.terms:
            raise InvalidInput("an intersection query needs at least one term")


def _base_stage(c: Construction, sets: Sequence[FloorSet]) -> int:
    L = max(fs.stage for fs in sets)
    h = c.height(L)
    if any(fs and fs.stage == L and fs.hi > h for fs in sets):
        L += 1
    return L


def _last_stage(c: Construction) -> int:
    n = c.spec.n_stages
    return c.max_stage if n is None else min(c.max_stage, n + 1)


def stage_bounds(c: Construction, shifts: Sequence[int], sets: Sequence[FloorSet]) -> tuple[Fraction, Fraction]:
    """Lower bound and unresolved mass for sets already living at one stage."""
    L = sets[0].stage
    lo_shift = min(shifts)
    up = [n - lo_shift for n in shifts]
    span = max(up)
    W = c.window(L)
    inter = intersect_all([fs.translate(m) for m, fs in zip(up, sets)]).clip(0, W)
    exit_up = sum(fs.count_at_or_above(W - m) for m, fs in zip(up, sets))
    exit_down = sum(fs.count_below(span - m) for m, fs in zip(up, sets))
    fm = c.floor_measure(L)
    return inter.size * fm, min(exit_up, exit_down) * fm


def stage_lower_bound(source: Source, query: IntersectionQuery, stage: int) -> Fraction:
    """Measure of the part of the query resolved inside the stage-``stage`` tower."""
    c = as_construction(source)
    shifts = [n for n, _ in query.terms]
    sets = [c.lift(fs, stage) for _, fs in query.terms]
    return stage_bounds(c, shifts, sets)[0]


def multi_intersection(source: Source, query: IntersectionQuery, eps: Fraction | int = 0,
                       max_stage: int | None = None, start_stage: int | None = None,
                       best_effort: bool = False) -> CorrelationValue:
    """Certified value of ``mu(∩ T^{n_i} A_i)``.

    Stages are raised until ``hi - lo <= eps``.  With ``eps == 0`` the answer
    is exact or :class:`NotExact` is raised.  ``best_effort`` returns the
    tightest interval reached instead of raising.
    """
    c = as_construction(source)
    eps = Fraction(eps)
    if eps < 0:
        raise InvalidInput("eps must be non-negative")
    shifts = [n for n, _ in query.terms]
    sets = [fs for _, fs in query.terms]
    cap = min(c.measure(fs) for fs in sets)
    if len(sets) == 1:
        return CorrelationValue(cap, cap, True, sets[0].stage)
    L = _base_stage(c, sets)
    if start_stage is not None:
        L = max(L, start_stage)
    last = _last_stage(c) if max_stage is None else min(max_stage, _last_stage(c))
    best: CorrelationValue | None = None
    try:
        cur = [c.lift(fs, L) for fs in sets]
        while True:
            lo, unresolved = stage_bounds(c, shifts, cur)
            hi = min(lo + unresolved, cap)
            best = CorrelationValue(lo, hi, lo == hi, L)
            if hi - lo <= eps:
                return best
            if L >= last:
                break
            L += 1
            cur = [c.lift(fs, L) for fs in cur]
    except (TooLarge, StageUnavailable) as exc:
        if best is None:
            raise BudgetExceeded(str(exc)) from exc
    if best_effort:
        return best
    if eps == 0:
        raise NotExact(f"not certified exact by stage {best.stage}: [{best.lo}, {best.hi}]")
    raise BudgetExceeded(f"width {best.width} > {eps} at stage {best.stage}")


def correlation(source: Source, n: int, A: FloorSet, B: FloorSet, eps: Fraction | int = 0,
                max_stage: int | None = None) -> CorrelationValue:
    """``mu(T^n A ∩ B)``, memoised per construction."""
    c = as_construction(source)
    cache = c.__dict__.setdefault("_corr_cache", {})
    key = (int(n), A, B, Fraction(eps), max_stage)
    if key not in cache:
        cache[key] = multi_intersection(c, IntersectionQuery(((n, A), (0, B))), eps, max_stage)
    return cache[key]


def x1_correlation(source: Source, n: int, eps: Fraction | int = 0) -> CorrelationValue:
    c = as_construction(source)
    x1 = c.x1(1)
    return correlation(c, n, x1, x1, eps)


# -- dense oracle --------------------------------------------------------------

DENSE_BUDGET = 10**7


def _dense_mask(c: Construction, fs: FloorSet, stage: int) -> np.ndarray:
    h0 = c.height(fs.stage)
    if fs and fs.hi > h0:
        raise InvalidInput("the dense oracle only accepts sets inside their tower")
    mask = np.zeros(h0, dtype=bool)
    for a, b in fs.intervals:
        mask[a:b] = True
    for l in range(fs.stage, stage):
        parts = []
        for s in c.params(l).spacers:
            parts.append(mask)
            parts.append(np.zeros(s, dtype=bool))
        mask = np.concatenate(parts)
    return mask


def brute_force_oracle(source: Source, max_stage: int, n: int, A: FloorSet, B: FloorSet) -> Fraction:
    """Dense recount of ``mu(T^n A ∩ B)`` restricted to the tower of ``max_stage``."""
    c = as_construction(source)
    h = c.height(max_stage)
    if h > DENSE_BUDGET:
        raise TooLarge(f"h_{max_stage} = {h} exceeds the dense budget")
    a = _dense_mask(c, A, max_stage)
    b = _dense_mask(c, B, max_stage)
    if abs(n) >= h:
        return Fraction(0)
    if n >= 0:
        hits = int(np.count_nonzero(a[: h - n] & b[n:]))
    else:
        hits = int(np.count_nonzero(a[-n:] & b[: h + n]))
    return hits * c.floor_measure(max_stage)


def brute_force_x1_series(source: Source, max_stage: int, lags: Sequence[int]) -> list[Fraction]:
    """Dense stage-``max_stage`` values of ``c_n`` for many lags at once."""
    c = as_construction(source)
    h = c.height(max_stage)
    if h > DENSE_BUDGET:
        raise TooLarge(f"h_{max_stage} = {h} exceeds the dense budget")
    x = _dense_mask(c, c.x1(1), max_stage)
    fm = c.floor_measure(max_stage)
    out = []
    for n in lags:
        m = abs(n)
        out.append(int(np.count_nonzero(x[: h - m] & x[m:])) * fm if m < h else Fraction(0))
    return out


# -- sums over all lags of a stage ----------------------------------------------

PAIR_BUDGET = 20_000_000
CONV_BUDGET = 4_000_000


def certification_stage(source: Source, span: int, start: int) -> int:
    """First stage ``L >= start`` whose smallest spacer is at least ``span``."""
    c = as_construction(source)
    last = _last_stage(c)
    for L in range(start, last + 1):
        if not c.has_params(L):
            break
        if c.params(L).min_spacer >= span:
            return L
    raise NotExact(f"no stage in [{start}, {last}] has all spacers >= {span}")


def _autocorrelation_run(h1: int) -> Counter:
    return Counter({d: h1 - abs(d) for d in range(-(h1 - 1), h1)})


def difference_counts(source: Source, span: int, start: int = 1) -> tuple[Counter, Fraction]:
    """Counts ``D[n] = #{(a, b) in X1_L : b - a = n}`` for ``|n| <= span``.

    ``L`` is the certification stage for ``span``, so ``c_n = D[n] * mu(E_L)``
    exactly for every ``|n| <= span``.  Returns ``(D, mu(E_L))``.
    """
    c = as_construction(source)
    L = certification_stage(c, span, start)
    fm = c.floor_measure(L)
    size = 2 * c.spec.h1
    for l in range(1, L):
        size *= c.params(l).r ** 2
    if size <= CONV_BUDGET:
        # all differences of X1_L floors: convolve the column offset differences
        D = _autocorrelation_run(c.spec.h1)
        for l in range(1, L):
            q = c.q(l)
            step = Counter(a - b for a in q for b in q)
            nxt: Counter = Counter()
            for d1, m1 in D.items():
                for d2, m2 in step.items():
                    nxt[d1 + d2] += m1 * m2
            D = nxt
        return Counter({n: v for n, v in D.items() if abs(n) <= span}), fm
    pos = list(c.x1(L).floors())
    D = Counter()
    work = 0
    for i, a in enumerate(pos):
        j = bisect.bisect_right(pos, a + span, lo=i)
        work += j - i
        if work > PAIR_BUDGET:
            raise TooLarge("windowed pair count exceeds the pair budget")
        for b in pos[i:j]:
            D[b - a] += 1
    for d in [d for d in D if d > 0]:
        D[-d] = D[d]
    return D, fm


def power_sum(source: Source, d: int, m: int) -> Fraction:
    """``sum_{|n| < h_m} c_n^{2d}`` with every ``c_n`` exact."""
    if d < 1:
        raise InvalidInput("d must be >= 1")
    c = as_construction(source)
    hm = c.height(m)
    D, fm = difference_counts(c, hm - 1, start=m)
    total = sum(cnt ** (2 * d) for n, cnt in D.items() if abs(n) < hm)
    return total * fm ** (2 * d)


def lag_census(source: Source, j: int) -> dict:
    """Positive lags ``n`` in ``(h_j, h_{j+1}]`` grouped by exact ``c_n``."""
    c = as_construction(source)
    lo, hi = c.height(j), c.height(j + 1)
    D, fm = difference_counts(c, hi, start=j + 1)
    values = Counter(D[n] * fm for n in D if lo < n <= hi)
    target = Fraction(1, c.params(j).r)
    return {
        "j": j,
        "r": c.params(j).r,
        "count_at_1_over_r": values.get(target, 0),
        "expected": (c.params(j).r ** 2 - c.params(j).r) // 2,
        "values": dict(values),
    }
