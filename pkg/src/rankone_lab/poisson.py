"""Cylinder events of the Poisson point process over a rank-one tower.

An event ``C(A, k)`` says that exactly ``k`` points fall in ``A``.  For a
conjunction of such events the exact probability has the form
``c * exp(-s)`` with rational ``c`` and ``s``; :class:`ExactExp` keeps that
form so that comparisons stay symbolic.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .correlation import Source, as_construction
from .errors import CombinatorialBudget, InvalidInput, RegionTooSmall, StageMismatch, Unresolvable
from .tower import Construction, FloorSet, canonical

ATOM_CAP = 2**12
COUNT_CAP = 12
MC_BLOCK = 4096


@dataclass(frozen=True)
class ExactExp:
    """The number ``coeff * exp(-exponent)``."""

    coeff: Fraction
    exponent: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeff", Fraction(self.coeff))
        object.__setattr__(self, "exponent", Fraction(self.exponent))
        if self.coeff < 0 or self.exponent < 0:
            raise InvalidInput("ExactExp needs coeff >= 0 and exponent >= 0")

    def approx(self, digits: int = 30) -> Decimal:
        with localcontext() as ctx:
            ctx.prec = digits + 5
            e = (-_dec(self.exponent)).exp()
            v = _dec(self.coeff) * e
            ctx.prec = digits
            return +v

    def __float__(self) -> float:
        return float(self.coeff) * math.exp(-float(self.exponent))

    def same_value(self, other: ExactExp) -> bool:
        """Exact equality of the represented reals."""
        if self.coeff == 0 or other.coeff == 0:
            return self.coeff == other.coeff
        if self.exponent == other.exponent:
            return self.coeff == other.coeff
        # c1 e^{-s1} = c2 e^{-s2} with s1 != s2 rational would make e algebraic
        return False

    def as_dict(self, digits: int = 30) -> dict:
        return {"coeff": _ftext(self.coeff), "exponent": _ftext(self.exponent), "approx": str(self.approx(digits))}


def _dec(x: Fraction) -> Decimal:
    return Decimal(x.numerator) / Decimal(x.denominator)


def _ftext(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class CylinderEvent:
    set: FloorSet
    count: int

    def __post_init__(self) -> None:
        if self.count < 0:
            raise InvalidInput("cylinder counts are non-negative")


@dataclass(frozen=True)
class CylinderConjunction:
    events: tuple[CylinderEvent, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        if not self.events:
            raise InvalidInput("a conjunction needs at least one event")

    @classmethod
    def of(cls, *pairs: tuple[FloorSet, int]) -> CylinderConjunction:
        return cls(tuple(CylinderEvent(s, k) for s, k in pairs))


def common_stage(c: Construction, sets: Sequence[FloorSet]) -> list[FloorSet]:
    """Lift all sets to the latest stage among them."""
    L = max(s.stage for s in sets)
    return [c.lift(s, L) for s in sets]


def atoms(sets: Sequence[FloorSet]) -> dict[int, int]:
    """Floor counts of the non-empty Boolean atoms, keyed by membership bitmask."""
    stage = sets[0].stage
    if any(s.stage != stage for s in sets):
        raise StageMismatch("atoms need sets at one stage")
    events = []
    for i, s in enumerate(sets):
        for a, b in s.intervals:
            events.append((a, 1 << i))
            events.append((b, -(1 << i)))
    events.sort()
    out: dict[int, int] = {}
    mask = 0
    prev = None
    for pos, delta in events:
        if prev is not None and mask and pos > prev:
            out[mask] = out.get(mask, 0) + pos - prev
        mask += delta
        prev = pos
    return out


def cylinder_measure(source: Source, conj: CylinderConjunction, atom_cap: int = ATOM_CAP,
                     count_cap: int = COUNT_CAP) -> ExactExp:
    """Exact probability of ``∩ C(A_i, k_i)``.

    Points in disjoint atoms are independent Poisson counts, so the
    probability is ``exp(-mu(∪ A_i))`` times the sum, over all ways of
    splitting each ``k_i`` among the atoms inside ``A_i``, of
    ``prod_a mu(a)^{m_a} / m_a!``.
    """
    c = as_construction(source)
    sets = common_stage(c, [e.set for e in conj.events])
    ks = [e.count for e in conj.events]
    if sum(ks) > count_cap:
        raise CombinatorialBudget(f"total count {sum(ks)} exceeds {count_cap}")
    at = atoms(sets)
    if len(at) > atom_cap:
        raise CombinatorialBudget(f"{len(at)} atoms exceed {atom_cap}")
    fm = c.floor_measure(sets[0].stage)
    items = [(mask, n * fm) for mask, n in sorted(at.items())]
    exponent = sum((m for _, m in items), Fraction(0))
    n_sets = len(sets)
    # atoms whose sets all have zero remaining count can only take m = 0
    suffix_masks = [0] * (len(items) + 1)
    for i in range(len(items) - 1, -1, -1):
        suffix_masks[i] = suffix_masks[i + 1] | items[i][0]

    def rec(i: int, rem: tuple[int, ...]) -> Fraction:
        if i == len(items):
            return Fraction(1) if not any(rem) else Fraction(0)
        # a set with a positive remainder must still meet a later atom
        for t in range(n_sets):
            if rem[t] and not (suffix_masks[i] >> t) & 1:
                return Fraction(0)
        mask, mu = items[i]
        members = [t for t in range(n_sets) if (mask >> t) & 1]
        top = min(rem[t] for t in members)
        total = Fraction(0)
        for m in range(top + 1):
            nxt = list(rem)
            for t in members:
                nxt[t] -= m
            sub = rec(i + 1, tuple(nxt))
            if sub:
                total += sub * mu**m / math.factorial(m)
        return total

    return ExactExp(rec(0, tuple(ks)), exponent)


def poisson_cdf_coeff(mu: Fraction, K: int) -> Fraction:
    """``sum_{k <= K} mu^k / k!``: the coefficient of ``exp(-mu)`` in the Poisson CDF."""
    return sum((Fraction(mu) ** k / math.factorial(k) for k in range(K + 1)), Fraction(0))


# -- images under base maps ----------------------------------------------------------


@dataclass(frozen=True)
class Shift:
    """The base map raised to a non-negative power ``n``."""

    n: int


@dataclass(frozen=True)
class Swap:
    """Involution exchanging ``E`` and ``RE = E + delta`` floor by floor, identity elsewhere."""

    E: FloorSet
    RE: FloorSet

    def __post_init__(self) -> None:
        if self.E.stage != self.RE.stage:
            raise StageMismatch("E and RE must be given at one stage")
        if not self.E or self.RE != self.E.translate(self.delta):
            raise InvalidInput("RE must be a translate of a non-empty E")
        if self.E & self.RE:
            raise InvalidInput("E and RE must be disjoint")

    @property
    def delta(self) -> int:
        return self.RE.lo - self.E.lo

    @property
    def U(self) -> FloorSet:
        return self.E | self.RE


BaseMap = Union[Shift, Swap]


def shift_image(c: Construction, A: FloorSet, n: int, max_stage: int | None = None) -> FloorSet:
    """``T^n A`` as a floor set, at the first stage where it is copy-uniform."""
    if n == 0:
        return A
    if n < 0:
        raise Unresolvable("negative powers leave every finite tower")
    if not A:
        return A
    last = max_stage if max_stage is not None else c.max_stage
    L = A.stage
    cur = A
    if cur.hi > c.height(L):
        L += 1
        cur = c.lift(A, L)
    while L <= last:
        if cur.hi + n <= c.window(L):
            return cur.translate(n)
        L += 1
        if L > last:
            break
        cur = c.lift(cur, L)
    raise Unresolvable(f"T^{n} of the set does not resolve by stage {last}")


def swap_image(c: Construction, B: FloorSet, R: Swap) -> FloorSet:
    L = max(B.stage, R.E.stage)
    B = c.lift(B, L)
    E = c.lift(R.E, L)
    RE = c.lift(R.RE, L)
    U = E | RE
    d = R.delta
    return (B - U) | (B & E).translate(d) | (B & RE).translate(-d)


def image_conjunction(source: Source, conj: CylinderConjunction, fmap: BaseMap) -> CylinderConjunction:
    """Conjunction describing the image of ``conj`` under the induced map."""
    c = as_construction(source)
    out = []
    for e in conj.events:
        if isinstance(fmap, Shift):
            s = shift_image(c, e.set, fmap.n)
        elif isinstance(fmap, Swap):
            s = swap_image(c, e.set, fmap)
        else:
            raise InvalidInput(f"unknown map {fmap!r}")
        out.append(CylinderEvent(s, e.count))
    return CylinderConjunction(tuple(out))


# -- Monte Carlo ------------------------------------------------------------------------


@dataclass
class Configuration:
    """Points of one sample: floor index and relative position inside the floor."""

    floors: list[int]
    offsets: np.ndarray
    stage: int

    def __len__(self) -> int:
        return len(self.floors)


class _RankMap:
    """Maps floor sets inside a region to intervals of region ranks ``[0, size)``."""

    def __init__(self, region: FloorSet):
        self.region = region
        self.starts = [a for a, _ in region.intervals]
        self.cum = [0]
        for a, b in region.intervals:
            self.cum.append(self.cum[-1] + b - a)

    @property
    def size(self) -> int:
        return self.cum[-1]

    def to_ranks(self, fs: FloorSet) -> np.ndarray:
        if fs - self.region:
            raise RegionTooSmall("an event set is not contained in the sampling region")
        out = []
        import bisect
        for a, b in fs.intervals:
            i = bisect.bisect_right(self.starts, a) - 1
            base = self.cum[i] - self.starts[i]
            out.append((a + base, b + base))
        return np.array(canonical(out), dtype=np.int64).reshape(-1, 2)

    def floor_of(self, rank: int) -> int:
        import bisect
        i = bisect.bisect_right(self.cum, rank) - 1
        return self.starts[i] + rank - self.cum[i]


def sample_configuration(source: Source, region: FloorSet, rng: np.random.Generator) -> Configuration:
    """One Poisson configuration on ``region`` (mean count = its measure)."""
    c = as_construction(source)
    mean = float(c.measure(region))
    if mean == 0:
        return Configuration([], np.zeros(0), region.stage)
    rm = _RankMap(region)
    n = int(rng.poisson(mean))
    ranks = rng.integers(0, rm.size, size=n)
    offsets = rng.random(n)
    return Configuration([rm.floor_of(int(r)) for r in ranks], offsets, region.stage)


def _count_in(ranks: np.ndarray, ivs: np.ndarray) -> np.ndarray:
    if len(ivs) == 0:
        return np.zeros(len(ranks), dtype=bool)
    i = np.searchsorted(ivs[:, 0], ranks, side="right") - 1
    ok = i >= 0
    inside = np.zeros(len(ranks), dtype=bool)
    inside[ok] = ranks[ok] < ivs[i[ok], 1]
    return inside


def _mc_block(seed_seq: np.random.SeedSequence, n: int, mean: float, size: int, rank_sets: list[np.ndarray],
              ks: np.ndarray) -> int:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    counts = rng.poisson(mean, size=n)
    total = int(counts.sum())
    ranks = rng.integers(0, size, size=total)
    owner = np.repeat(np.arange(n), counts)
    ok = np.ones(n, dtype=bool)
    for ivs, k in zip(rank_sets, ks):
        per = np.bincount(owner[_count_in(ranks, ivs)], minlength=n)
        ok &= per == k
    return int(ok.sum())


@dataclass(frozen=True)
class MCResult:
    estimate: float
    stderr: float
    samples: int
    seed: int
    hits: int

    def as_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "samples": self.samples, "seed": self.seed}


def mc_estimate(source: Source, conj: CylinderConjunction, region: FloorSet, samples: int, seed: int,
                jobs: int = 1, block: int = MC_BLOCK) -> MCResult:
    """Empirical frequency of ``conj`` over independent configurations on ``region``.

    Samples are split into fixed blocks with their own Philox streams
    spawned from ``seed``, so the result does not depend on ``jobs``.
    """
    c = as_construction(source)
    if samples < 1:
        raise InvalidInput("samples must be positive")
    sets = common_stage(c, [region] + [e.set for e in conj.events])
    reg, ev = sets[0], sets[1:]
    rm = _RankMap(reg)
    rank_sets = [rm.to_ranks(s) for s in ev]
    ks = np.array([e.count for e in conj.events])
    mean = float(c.measure(reg))
    nblocks = -(-samples // block)
    seqs = np.random.SeedSequence(seed).spawn(nblocks)
    sizes = [min(block, samples - b * block) for b in range(nblocks)]
    args = [(seqs[b], sizes[b], mean, rm.size, rank_sets, ks) for b in range(nblocks)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            hits = sum(ex.map(lambda a: _mc_block(*a), args))
    else:
        hits = sum(_mc_block(*a) for a in args)
    p = hits / samples
    return MCResult(p, math.sqrt(max(p * (1 - p), 0.0) / samples), samples, seed, hits)
