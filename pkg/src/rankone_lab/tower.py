"""Rank-one towers built by cutting and stacking, indexed by floor number.

A stage-``j`` tower is a stack of ``h_j`` floors numbered ``0 .. h_j - 1``;
the map moves floor ``k`` to floor ``k + 1`` except on the top floor.  To go
from stage ``j`` to ``j + 1`` the tower is cut into ``r_j`` columns, column
``i`` receives ``s_j(i)`` spacer floors on top, and the columns are stacked
left to right.  Column ``i`` therefore starts at floor ``q(i, j)`` of the new
tower.

Every set the rest of the package needs is a finite union of floors of some
stage, so sets are kept as :class:`FloorSet` objects (sorted disjoint
half-open integer intervals).  Measures are exact fractions normalised so
that the first tower ``X_1`` has measure one.

A floor set at stage ``L`` may also use indices in the *extended window*
``[h_L, h_L + min_i s_L(i))``.  Such an index names the same relative floor
in the spacer block above every column copy, so the set is the same
copy-uniform set of stage ``L + 1`` floors.  Lifting, counting and all the
Boolean operations are consistent with that reading.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

from .errors import InternalInvariant, InvalidInput, InvalidSpec, StageMismatch, StageUnavailable, TooLarge

Interval = tuple[int, int]

DEFAULT_MAX_INTERVALS = 2_000_000


def _merge_sorted(intervals: Iterable[Interval]) -> tuple[Interval, ...]:
    out: list[list[int]] = []
    for a, b in intervals:
        if b <= a:
            continue
        if out and a <= out[-1][1]:
            if b > out[-1][1]:
                out[-1][1] = b
        else:
            out.append([a, b])
    return tuple((a, b) for a, b in out)


def canonical(intervals: Iterable[Interval]) -> tuple[Interval, ...]:
    """Sort, drop empty pieces and merge overlapping or adjacent intervals."""
    return _merge_sorted(sorted((int(a), int(b)) for a, b in intervals))


@dataclass(frozen=True)
class FloorSet:
    """A finite union of floors of one stage, in canonical interval form."""

    intervals: tuple[Interval, ...]
    stage: int

    def __post_init__(self) -> None:
        ivs = self.intervals
        ok = all(a < b for a, b in ivs) and all(ivs[i][1] < ivs[i + 1][0] for i in range(len(ivs) - 1))
        if not ok:
            object.__setattr__(self, "intervals", canonical(ivs))

    @classmethod
    def of_floors(cls, floors: Iterable[int], stage: int) -> FloorSet:
        return cls(canonical((k, k + 1) for k in floors), stage)

    @classmethod
    def of_intervals(cls, intervals: Iterable[Interval], stage: int) -> FloorSet:
        return cls(canonical(intervals), stage)

    @classmethod
    def empty(cls, stage: int) -> FloorSet:
        return cls((), stage)

    @property
    def size(self) -> int:
        """Number of floors."""
        return sum(b - a for a, b in self.intervals)

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __contains__(self, k: int) -> bool:
        i = bisect.bisect_right(self.intervals, (k, float("inf"))) - 1
        return i >= 0 and self.intervals[i][0] <= k < self.intervals[i][1]

    def floors(self) -> Iterator[int]:
        for a, b in self.intervals:
            yield from range(a, b)

    @property
    def lo(self) -> int:
        return self.intervals[0][0]

    @property
    def hi(self) -> int:
        """One past the top floor."""
        return self.intervals[-1][1]

    def _check(self, other: FloorSet) -> None:
        if other.stage != self.stage:
            raise StageMismatch(f"floor sets live at stages {self.stage} and {other.stage}")

    def translate(self, n: int) -> FloorSet:
        return FloorSet(tuple((a + n, b + n) for a, b in self.intervals), self.stage)

    def union(self, other: FloorSet) -> FloorSet:
        self._check(other)
        return FloorSet(_merge_sorted(_merge_two(self.intervals, other.intervals)), self.stage)

    def intersection(self, other: FloorSet) -> FloorSet:
        self._check(other)
        return FloorSet(_intersect(self.intervals, other.intervals), self.stage)

    def difference(self, other: FloorSet) -> FloorSet:
        self._check(other)
        return FloorSet(_difference(self.intervals, other.intervals), self.stage)

    def clip(self, lo: int, hi: int) -> FloorSet:
        return FloorSet(_intersect(self.intervals, ((lo, hi),)), self.stage)

    __or__ = union
    __and__ = intersection
    __sub__ = difference

    def count_at_or_above(self, t: int) -> int:
        """Number of floors with index >= t."""
        total = 0
        for a, b in reversed(self.intervals):
            if b <= t:
                break
            total += b - max(a, t)
        return total

    def count_below(self, t: int) -> int:
        total = 0
        for a, b in self.intervals:
            if a >= t:
                break
            total += min(b, t) - a
        return total

    def to_text(self) -> str:
        return " ".join(f"[{a},{b})" for a, b in self.intervals) or "{}"


def _merge_two(x: Sequence[Interval], y: Sequence[Interval]) -> Iterator[Interval]:
    i = j = 0
    while i < len(x) and j < len(y):
        if x[i] <= y[j]:
            yield x[i]
            i += 1
        else:
            yield y[j]
            j += 1
    yield from x[i:]
    yield from y[j:]


def _intersect(x: Sequence[Interval], y: Sequence[Interval]) -> tuple[Interval, ...]:
    out = []
    i = j = 0
    while i < len(x) and j < len(y):
        a = max(x[i][0], y[j][0])
        b = min(x[i][1], y[j][1])
        if a < b:
            out.append((a, b))
        if x[i][1] < y[j][1]:
            i += 1
        else:
            j += 1
    return tuple(out)


def _difference(x: Sequence[Interval], y: Sequence[Interval]) -> tuple[Interval, ...]:
    out = []
    j = 0
    for a, b in x:
        while j < len(y) and y[j][1] <= a:
            j += 1
        k = j
        cur = a
        while k < len(y) and y[k][0] < b:
            if y[k][0] > cur:
                out.append((cur, y[k][0]))
            cur = max(cur, y[k][1])
            k += 1
        if cur < b:
            out.append((cur, b))
    return tuple(out)


def intersect_all(sets: Sequence[FloorSet]) -> FloorSet:
    result = sets[0]
    for s in sets[1:]:
        result = result & s
        if not result:
            break
    return result


def union_all(sets: Sequence[FloorSet]) -> FloorSet:
    stage = sets[0].stage
    for s in sets:
        if s.stage != stage:
            raise StageMismatch("union of floor sets from different stages")
    return FloorSet(canonical(iv for s in sets for iv in s.intervals), stage)


@dataclass(frozen=True)
class StageParams:
    """Cut count ``r`` and the spacer vector ``(s(1), ..., s(r))`` of one stage."""

    r: int
    spacers: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "spacers", tuple(int(s) for s in self.spacers))
        if self.r < 2:
            raise InvalidSpec(f"cut count must be >= 2, got {self.r}")
        if len(self.spacers) != self.r:
            raise InvalidSpec(f"expected {self.r} spacers, got {len(self.spacers)}")
        if any(s < 0 for s in self.spacers):
            raise InvalidSpec(f"negative spacer in {self.spacers}")

    @property
    def total_spacers(self) -> int:
        return sum(self.spacers)

    @property
    def min_spacer(self) -> int:
        return min(self.spacers)


StageRule = Callable[[int, int], StageParams]


@dataclass(frozen=True, eq=False)
class ConstructionSpec:
    """Parameter schedule of a rank-one construction.

    Either ``stages`` lists the parameters of stages ``1, 2, ...`` explicitly
    or ``rule(j, h_j)`` produces them on demand.  ``description`` is a plain
    dict echoed into manifests.
    """

    h1: int
    stages: tuple[StageParams, ...] = ()
    rule: StageRule | None = None
    name: str = ""
    description: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if int(self.h1) < 1:
            raise InvalidSpec(f"h1 must be >= 1, got {self.h1}")
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def finite(self) -> bool:
        return self.rule is None

    @property
    def n_stages(self) -> int | None:
        return len(self.stages) if self.rule is None else None

    def raw_params(self, j: int, h: int) -> StageParams | None:
        if self.rule is not None:
            p = self.rule(j, h)
            if not isinstance(p, StageParams):
                raise InvalidSpec(f"rule returned {type(p).__name__} at stage {j}")
            return p
        if 1 <= j <= len(self.stages):
            return self.stages[j - 1]
        return None


@dataclass(frozen=True)
class StageState:
    """The stage-``j`` tower: height, floor measure, X_1 floors, column offsets."""

    j: int
    h: int
    floor_measure: Fraction
    x1_floors: FloorSet
    q_offsets: tuple[int, ...] | None = None


def q_offsets(state: StageState, params: StageParams) -> tuple[int, ...]:
    """Floor index at which each column of ``state`` starts in the next tower."""
    out = [0]
    for i in range(1, params.r):
        out.append(out[-1] + state.h + params.spacers[i - 1])
    return tuple(out)


def new_construction(spec: ConstructionSpec) -> StageState:
    h1 = int(spec.h1)
    if h1 < 1:
        raise InvalidSpec(f"h1 must be >= 1, got {h1}")
    return StageState(1, h1, Fraction(1, h1), FloorSet(((0, h1),), 1))


def _lift_intervals(intervals: Sequence[Interval], offsets: Sequence[int]) -> tuple[Interval, ...]:
    # column copies occupy disjoint increasing zones, so concatenation is sorted
    return _merge_sorted((a + q, b + q) for q in offsets for a, b in intervals)


def extend_stage(state: StageState, params: StageParams) -> StageState:
    q = q_offsets(state, params)
    ivs = _lift_intervals(state.x1_floors.intervals, q)
    x1 = FloorSet(ivs, state.j + 1)
    if x1.size != state.x1_floors.size * params.r:
        raise InternalInvariant(f"column images overlap while building stage {state.j + 1}")
    h = state.h * params.r + params.total_spacers
    return StageState(state.j + 1, h, state.floor_measure / params.r, x1)


def floorset_measure(fs: FloorSet, state: StageState) -> Fraction:
    if fs.stage != state.j:
        raise StageMismatch(f"set at stage {fs.stage}, state at stage {state.j}")
    return fs.size * state.floor_measure


class Construction:
    """Lazily built, memoised sequence of stages of one :class:`ConstructionSpec`.

    Stages and generated parameters are computed once and never change, so a
    construction can be shared freely between callers.
    """

    def __init__(self, spec: ConstructionSpec, max_stage: int = 64, max_intervals: int = DEFAULT_MAX_INTERVALS):
        self.spec = spec
        self.max_stage = max_stage
        self.max_intervals = max_intervals
        first = new_construction(spec)
        self._heights = [None, first.h]
        self._x1: dict[int, FloorSet] = {1: first.x1_floors}
        self._params: dict[int, StageParams | None] = {}

    def __repr__(self) -> str:
        return f"Construction({self.spec.name or 'unnamed'}, built={len(self._heights) - 1})"

    # -- schedule -----------------------------------------------------------

    def has_params(self, j: int) -> bool:
        if j > self.max_stage:
            return False
        if self.spec.finite:
            return 1 <= j <= len(self.spec.stages)
        return True

    def params(self, j: int) -> StageParams:
        if j not in self._params:
            if not self.has_params(j):
                raise StageUnavailable(f"stage {j} parameters are not available")
            self._params[j] = self.spec.raw_params(j, self.height(j))
        p = self._params[j]
        if p is None:
            raise StageUnavailable(f"stage {j} parameters are not available")
        return p

    def height(self, j: int) -> int:
        if j < 1:
            raise StageUnavailable(f"no stage {j}")
        while len(self._heights) <= j:
            k = len(self._heights) - 1
            p = self.params(k)
            self._heights.append(self._heights[k] * p.r + p.total_spacers)
        return self._heights[j]

    def floor_measure(self, j: int) -> Fraction:
        m = Fraction(1, self.spec.h1)
        for l in range(1, j):
            m /= self.params(l).r
        return m

    def q(self, j: int) -> tuple[int, ...]:
        p = self.params(j)
        h = self.height(j)
        out = [0]
        for i in range(1, p.r):
            out.append(out[-1] + h + p.spacers[i - 1])
        return tuple(out)

    def window(self, j: int) -> int:
        """Upper end of the extended index window of stage ``j``."""
        if self.has_params(j):
            return self.height(j) + self.params(j).min_spacer
        return self.height(j)

    def stage(self, j: int) -> StageState:
        q = self.q(j) if self.has_params(j) else None
        return StageState(j, self.height(j), self.floor_measure(j), self.x1(j), q)

    # -- sets ---------------------------------------------------------------

    def x1(self, j: int) -> FloorSet:
        if j not in self._x1:
            self._x1[j] = self.lift(self.x1(j - 1), j)
        return self._x1[j]

    def tower(self, j: int) -> FloorSet:
        return FloorSet(((0, self.height(j)),), j)

    def measure(self, fs: FloorSet) -> Fraction:
        return fs.size * self.floor_measure(fs.stage)

    def lift(self, fs: FloorSet, to_stage: int) -> FloorSet:
        """Re-express ``fs`` as a floor set of the later stage ``to_stage``."""
        if to_stage < fs.stage:
            raise StageMismatch(f"cannot lift from stage {fs.stage} down to {to_stage}")
        if fs and (fs.lo < 0 or fs.hi > self.window(fs.stage)):
            raise InvalidInput(f"floor set leaves the stage-{fs.stage} window")
        ivs = fs.intervals
        for l in range(fs.stage, to_stage):
            q = self.q(l)
            if len(ivs) * len(q) > self.max_intervals:
                raise TooLarge(f"lifting to stage {to_stage} needs more than {self.max_intervals} intervals")
            ivs = _lift_intervals(ivs, q)
        return FloorSet(ivs, to_stage)

    def copy_offsets(self, j: int, to_stage: int) -> list[tuple[int, int]]:
        """Positions of the copies of tower ``j`` inside tower ``to_stage``.

        Returns ``(offset, column)`` pairs sorted by offset, where ``column`` is
        the 1-based stage-``j`` column the copy belongs to.
        """
        if to_stage == j:
            return [(0, 0)]
        cur = [(qv, i + 1) for i, qv in enumerate(self.q(j))]
        for l in range(j + 1, to_stage):
            q = self.q(l)
            if len(cur) * len(q) > self.max_intervals:
                raise TooLarge("too many tower copies")
            cur = [(c + qv, col) for qv in q for c, col in cur]
        return cur


def floors_positions(fs: FloorSet) -> list[int]:
    return list(fs.floors())
