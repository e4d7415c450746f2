"""Two joint-dynamics experiments built on rank-one towers.

*Oscillating averages.*  ``sigma`` cuts every tower in two with no spacer on
the first column and a huge spacer block on the second.  A second map
``T = P sigma P^{-1}`` is obtained by permuting floors inside those spacer
blocks: on stage ``j`` the pieces ``[q(n), q(n) + 2h_j)`` are moved onto
``[p(n), p(n) + 2h_j)`` (even ``j``) or onto ``[p(n) + 2h_j, p(n) + 4h_j)``
(odd ``j``).  Then ``T^{q(n)} A`` equals ``sigma^{p(n)} A`` or misses it,
and the averages of ``mu(sigma^{p(n)} A ∩ T^{q(n)} A)`` swing between
``mu(A)`` and ``0`` from block to block.

*Repulsion.*  An involution ``R`` swapping two floors ``E`` and ``RE`` of a
Sidon tower gives the cylinder ``D = C(E,0) ∩ C(RE,1)`` whose images under
``S^n = R T^n R`` and ``T^n`` meet only through ``T^n U ∩ U``.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .correlation import IntersectionQuery, as_construction, certification_stage, multi_intersection
from .errors import CombinatorialBudget, InfeasibleWindow, InvalidInput, OrbitExit, PieceCollision
from .poisson import CylinderConjunction, ExactExp, Swap, cylinder_measure, shift_image, swap_image
from .spectral import lag_family, product_rhs
from .tower import Construction, ConstructionSpec, FloorSet, StageParams, canonical

INT64_SAFE = 2**62


# -- sequences ------------------------------------------------------------------------


@dataclass(frozen=True)
class Poly:
    """Integer polynomial ``sum_k coeffs[k] n^k`` with non-negative coefficients."""

    coeffs: tuple[int, ...]

    def __post_init__(self) -> None:
        cs = tuple(int(c) for c in self.coeffs)
        while len(cs) > 1 and cs[-1] == 0:
            cs = cs[:-1]
        if any(c < 0 for c in cs) or not any(cs[1:]):
            raise InvalidInput("sequence polynomials need non-negative coefficients and positive degree")
        object.__setattr__(self, "coeffs", cs)

    def __call__(self, n: int) -> int:
        v = 0
        for c in reversed(self.coeffs):
            v = v * n + c
        return v

    def eval_np(self, n: np.ndarray) -> np.ndarray:
        v = np.zeros_like(n, dtype=np.int64)
        for c in reversed(self.coeffs):
            v = v * n + c
        return v

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def gap(self, n: int) -> int:
        return self(n + 1) - self(n)

    def describe(self) -> str:
        terms = []
        for k, c in reversed(list(enumerate(self.coeffs))):
            if c == 0:
                continue
            terms.append(str(c) if k == 0 else f"{'' if c == 1 else c}n" + ("" if k == 1 else f"^{k}"))
        return "+".join(terms)

    @classmethod
    def parse(cls, text: str) -> Poly:
        """Parse sums of terms like ``3n^2``, ``n``, ``5``."""
        coeffs: dict[int, int] = {}
        for raw in text.replace(" ", "").replace("*", "").split("+"):
            if not raw:
                raise InvalidInput(f"bad polynomial {text!r}")
            if "n" in raw:
                c, _, e = raw.partition("n")
                k = int(e[1:]) if e.startswith("^") else 1
                if e and not e.startswith("^"):
                    raise InvalidInput(f"bad term {raw!r}")
                cv = int(c) if c else 1
            else:
                k, cv = 0, int(raw)
            coeffs[k] = coeffs.get(k, 0) + cv
        top = max(coeffs)
        return cls(tuple(coeffs.get(k, 0) for k in range(top + 1)))


@dataclass(frozen=True)
class SequencePair:
    p: Poly
    q: Poly

    def describe(self) -> dict:
        return {"p": self.p.describe(), "q": self.q.describe()}


def _first_true(pred: Callable[[int], bool], lo: int = 1, limit: int = 2**80) -> int | None:
    """Least ``n >= lo`` with ``pred(n)`` for a monotone predicate, or None."""
    hi = lo
    while not pred(hi):
        if hi > limit:
            return None
        hi = hi * 2
    a, b = lo, hi
    while a < b:
        m = (a + b) // 2
        if pred(m):
            b = m
        else:
            a = m + 1
    return a


def _last_true(pred: Callable[[int], bool], lo: int, hi: int) -> int:
    """Largest ``n`` in ``[lo, hi]`` with ``pred(n)`` (monotone decreasing truth), else ``lo - 1``."""
    a, b = lo - 1, hi
    while a < b:
        m = (a + b + 1) // 2
        if pred(m):
            a = m
        else:
            b = m - 1
    return a


def window_start(seqs: SequencePair, h: int) -> int | None:
    """First ``n`` from which ``p, q > 2h`` and both gaps are at least ``2h``.

    Gaps of polynomials with non-negative coefficients never shrink, so the
    condition stays true afterwards.  ``None`` when the gaps never get there.
    """
    w = 2 * h

    def ok(n: int) -> bool:
        return seqs.p(n) > w and seqs.q(n) > w and seqs.p.gap(n) >= w and seqs.q.gap(n) >= w

    if seqs.p.degree == 1 and seqs.p.gap(1) < w or seqs.q.degree == 1 and seqs.q.gap(1) < w:
        return None
    return _first_true(ok)


def block_bound(seqs: SequencePair, h: int, h_next: int) -> int:
    """``N = max{n : p(n), q(n) < h_next - 4h}`` (0 when no ``n >= 1`` qualifies)."""
    top = h_next - 4 * h

    def ok(n: int) -> bool:
        return seqs.p(n) < top and seqs.q(n) < top

    if not ok(1):
        return 0
    hi = 1
    while ok(hi * 2):
        hi *= 2
    return _last_true(ok, 1, hi * 2)


# -- the piecewise permutation -----------------------------------------------------------


@dataclass
class IntervalPermutation:
    """Permutation of the floors ``[zone_lo, zone_hi)`` of tower ``j + 1``.

    Pieces ``[src(n), src(n) + width)`` for ``n`` in ``[start, N]`` go to
    ``[tgt(n), tgt(n) + width)`` by translation; the remaining floors are
    matched in increasing order.  Pieces are evaluated lazily from the
    sequence polynomials, so windows with millions of pieces cost nothing to
    build.
    """

    j: int
    zone_lo: int
    zone_hi: int
    width: int
    start: int
    N: int
    src_poly: Poly
    tgt_poly: Poly
    tgt_shift: int

    def src(self, n: int) -> int:
        return self.src_poly(n)

    def tgt(self, n: int) -> int:
        return self.tgt_poly(n) + self.tgt_shift

    @property
    def n_pieces(self) -> int:
        return self.N - self.start + 1

    def validate(self) -> None:
        """Raise :class:`PieceCollision` unless pieces fit the zone and never overlap."""
        w = self.width
        if self.N < self.start:
            raise InfeasibleWindow(f"stage {self.j}: empty window")
        for f, name in ((self.src, "source"), (self.tgt, "image")):
            if f(self.start) < self.zone_lo or f(self.N) + w > self.zone_hi:
                raise PieceCollision(f"stage {self.j}: {name} pieces leave the spacer zone")
            # gaps never shrink, so the first pair is the tightest
            if self.N > self.start and f(self.start + 1) - f(self.start) < w:
                raise PieceCollision(f"stage {self.j}: {name} pieces n={self.start} and n={self.start + 1} overlap")

    def _fns(self, inverse: bool):
        return (self.tgt, self.src) if inverse else (self.src, self.tgt)

    def _last_piece_le(self, f, x: int) -> int:
        return _last_true(lambda n: f(n) <= x, self.start, self.N)

    def map_point(self, x: int, inverse: bool = False) -> int:
        if not self.zone_lo <= x < self.zone_hi:
            return x
        F, G = self._fns(inverse)
        w = self.width
        k = self._last_piece_le(F, x)
        if k >= self.start and x < F(k) + w:
            return G(k) + x - F(k)
        covered = (k - self.start + 1) * w if k >= self.start else 0
        rank = x - self.zone_lo - covered
        # free floors before image piece m: G(m) - zone_lo - (m - start) * w, non-decreasing
        m = _last_true(lambda n: G(n) - self.zone_lo - (n - self.start) * w <= rank, self.start, self.N)
        return self.zone_lo + rank + (m - self.start + 1) * w

    def map_interval(self, a: int, b: int, inverse: bool = False) -> list[tuple[int, int]]:
        F, G = self._fns(inverse)
        w = self.width
        out = []
        x = a
        while x < b:
            k = self._last_piece_le(F, x)
            if k >= self.start and x < F(k) + w:
                end = min(b, F(k) + w)
                out.append((G(k) + x - F(k), G(k) + end - F(k)))
                x = end
                continue
            nf = F(k + 1) if k + 1 <= self.N else self.zone_hi
            y = self.map_point(x, inverse)
            kg = self._last_piece_le(G, y)
            ng = G(kg + 1) if kg + 1 <= self.N else self.zone_hi
            run = min(b, nf) - x
            run = min(run, ng - y)
            out.append((y, y + run))
            x += run
        return out

    def map_points(self, xs: np.ndarray, n_lo: int, n_hi: int, inverse: bool = False) -> np.ndarray:
        """Vectorised :meth:`map_point` for points in pieces ``n_lo..n_hi`` (others fall back)."""
        F, G = self._fns(inverse)
        polyF = self.tgt_poly if inverse else self.src_poly
        polyG = self.src_poly if inverse else self.tgt_poly
        if max(abs(F(n_hi)), abs(G(n_hi))) + self.width + abs(self.tgt_shift) > INT64_SAFE:
            raise OrbitExit("piece positions overflow 64-bit arithmetic")
        ns = np.arange(n_lo, n_hi + 1, dtype=np.int64)
        fa = polyF.eval_np(ns) + (self.tgt_shift if inverse else 0)
        ga = polyG.eval_np(ns) + (0 if inverse else self.tgt_shift)
        idx = np.searchsorted(fa, xs, side="right") - 1
        safe = np.clip(idx, 0, len(fa) - 1)
        inside = (idx >= 0) & (xs < fa[safe] + self.width)
        out = np.where(inside, ga[safe] + xs - fa[safe], 0)
        for i in np.nonzero(~inside)[0]:
            out[i] = self.map_point(int(xs[i]), inverse)
        return out


# -- the divergence scenario ------------------------------------------------------------


@dataclass
class StageWindow:
    j: int
    h: int
    h_next: int
    start: int | None
    N: int
    katok: bool = False

    @property
    def active(self) -> bool:
        return not self.katok and self.start is not None and self.N >= self.start

    @property
    def parity(self) -> str:
        return "even" if self.j % 2 == 0 else "odd"

    @property
    def size(self) -> int:
        return self.N - self.start + 1 if self.active else 0

    def as_dict(self) -> dict:
        return {"j": self.j, "h": self.h, "h_next": self.h_next, "start": self.start, "N": self.N,
                "active": self.active, "katok": self.katok, "parity": self.parity}


def katok_params(j: int) -> StageParams:
    return StageParams(2 * j, tuple([0] * j + [1] * j))


def sigma_spacer(seqs: SequencePair, j: int, h: int, spread: int = 1,
                 occupancy: Fraction | None = None) -> tuple[int, int | None]:
    """Second spacer of a two-column stage and the window start it was sized for."""
    m = spread * j * h
    s = max(seqs.p(m), seqs.q(m)) + 1
    start = window_start(seqs, h)
    if start is not None:
        need = start
        if occupancy is not None:
            occ = Fraction(occupancy)
            if not 0 <= occ < 1:
                raise InvalidInput("occupancy must lie in [0, 1)")
            need = max(need, math.ceil((start - 1) / (1 - occ)))
        # p(n), q(n) < h_next - 4h = s - 2h for every n <= need
        s = max(s, max(seqs.p(need), seqs.q(need)) + 2 * h + 1)
    return s, start


@dataclass
class DivergenceScenario:
    seqs: SequencePair
    spec: ConstructionSpec
    windows: dict[int, StageWindow]
    perms: dict[int, IntervalPermutation]
    katok: frozenset[int] = frozenset()
    settings: dict = field(default_factory=dict)

    @property
    def construction(self) -> Construction:
        return as_construction(self.spec)

    @property
    def n_stages(self) -> int:
        return len(self.spec.stages)

    @property
    def A(self) -> FloorSet:
        return self.construction.x1(1)

    def active_stages(self) -> list[int]:
        return [j for j, w in sorted(self.windows.items()) if w.active]

    def manifest(self) -> dict:
        return {
            "sequences": self.seqs.describe(),
            "h1": self.spec.h1,
            "spacers": [list(p.spacers) if len(p.spacers) <= 8 else {"r": p.r, "spacers": list(p.spacers)}
                        for p in self.spec.stages],
            "windows": [w.as_dict() for _, w in sorted(self.windows.items())],
            "katok": sorted(self.katok),
            "settings": self.settings,
            "pieces": {str(j): {"source": f"[q(n), q(n)+{p.width})",
                                "image": f"[p(n)+{p.tgt_shift}, p(n)+{p.tgt_shift + p.width})",
                                "n": [p.start, p.N]} for j, p in sorted(self.perms.items())},
        }


def build_sigma(seqs: SequencePair, stages: int, katok: Iterable[int] = (), h1: int = 1, spread: int = 1,
                occupancy: Fraction | None = None) -> DivergenceScenario:
    """Two-column schedule with spacer blocks sized for the window rule.

    ``s_j(2)`` is the least value with ``s_j(2) > max(p(m), q(m))`` for
    ``m = spread * j * h_j`` that also makes the stage window non-empty and,
    when ``occupancy`` is given, makes the window cover at least that share
    of ``1..N_j``.  Stages in ``katok`` use ``2j`` columns with spacers
    ``(0,...,0,1,...,1)`` and carry no window.
    """
    katok = frozenset(katok)
    if h1 < 1 or stages < 1:
        raise InvalidInput("need h1 >= 1 and at least one stage")
    params = []
    windows = {}
    h = h1
    for j in range(1, stages + 1):
        if j in katok:
            p = katok_params(j)
            params.append(p)
            h_next = h * p.r + p.total_spacers
            windows[j] = StageWindow(j, h, h_next, None, 0, katok=True)
        else:
            s, start = sigma_spacer(seqs, j, h, spread, occupancy)
            params.append(StageParams(2, (0, s)))
            h_next = 2 * h + s
            windows[j] = StageWindow(j, h, h_next, start, block_bound(seqs, h, h_next))
        h = h_next
    desc = {"kind": "sigma", "p": seqs.p.describe(), "q": seqs.q.describe(), "h1": h1, "stages": stages,
            "spread": spread, "occupancy": None if occupancy is None else str(Fraction(occupancy)),
            "katok": sorted(katok)}
    spec = ConstructionSpec(h1, tuple(params), name="sigma", description=desc)
    sc = DivergenceScenario(seqs, spec, windows, {}, katok, desc)
    for j, w in windows.items():
        if w.active:
            sc.perms[j] = build_pi(sc, j)
    return sc


def build_pi(scenario: DivergenceScenario, j: int, start: int | None = None,
             N: int | None = None) -> IntervalPermutation:
    """Stage-``j`` permutation; ``start``/``N`` override the computed window."""
    w = scenario.windows[j]
    if w.katok:
        raise InfeasibleWindow(f"stage {j} uses Katok spacers and carries no permutation")
    st = w.start if start is None else start
    nn = w.N if N is None else N
    if st is None or nn < st:
        raise InfeasibleWindow(f"stage {j}: no index satisfies the window conditions")
    shift = 2 * w.h if j % 2 == 1 else 0
    perm = IntervalPermutation(j, 2 * w.h, w.h_next, 2 * w.h, st, nn, scenario.seqs.q, scenario.seqs.p, shift)
    perm.validate()
    return perm


def _apply_P(sc: DivergenceScenario, a: int, b: int, J: int, inverse: bool) -> list[tuple[int, int]]:
    """Image of tower-``J`` floors ``[a, b)`` under ``P`` (or ``P^{-1}``)."""
    if J == 1 or a >= b:
        return [(a, b)]
    j = J - 1
    c = sc.construction
    h = c.height(j)
    params = c.params(j)
    out = []
    o = 0
    last = params.r - 1
    for i, s in enumerate(params.spacers):
        lo, hi = max(a, o), min(b, o + h)
        if lo < hi:
            out.extend((x + o, y + o) for x, y in _apply_P(sc, lo - o, hi - o, j, inverse))
        o += h
        lo, hi = max(a, o), min(b, o + s)
        if lo < hi:
            perm = sc.perms.get(j)
            if perm is not None and i == last:
                out.extend(perm.map_interval(lo, hi, inverse))
            else:
                out.append((lo, hi))
        o += s
        if o >= b:
            break
    return out


def apply_P(sc: DivergenceScenario, fs: FloorSet, inverse: bool = False) -> FloorSet:
    J = fs.stage
    if fs and fs.hi > sc.construction.height(J):
        raise InvalidInput("P acts on floors inside the tower")
    pieces = []
    for a, b in fs.intervals:
        pieces.extend(_apply_P(sc, a, b, J, inverse))
    return FloorSet(canonical(pieces), J)


def conjugated_image(sc: DivergenceScenario, A: FloorSet, t: int, stage: int) -> FloorSet:
    """``T^t A = P sigma^t P^{-1} A`` as floors of tower ``stage``."""
    c = sc.construction
    if t < 0:
        raise InvalidInput("only non-negative powers are supported")
    AJ = c.lift(A, stage)
    pre = apply_P(sc, AJ, inverse=True)
    moved = pre.translate(t)
    if moved and moved.hi > c.height(stage):
        raise OrbitExit(f"T^{t} leaves tower {stage}")
    return apply_P(sc, moved)


def resolution_stage(sc: DivergenceScenario, A: FloorSet, t: int) -> int:
    """First stage whose tower contains every ``sigma^s A``, ``0 <= s <= t``."""
    c = sc.construction
    last = sc.n_stages + 1
    for J in range(A.stage, last + 1):
        AJ = c.lift(A, J)
        if not AJ or AJ.hi + t <= c.height(J):
            return J
    raise OrbitExit(f"shift {t} leaves the tower of stage {last}; build more stages")


def base_term(sc: DivergenceScenario, n: int, A: FloorSet | None = None) -> Fraction:
    """``mu(sigma^{p(n)} A ∩ T^{q(n)} A)``, exact."""
    A = sc.A if A is None else A
    c = sc.construction
    pn, qn = sc.seqs.p(n), sc.seqs.q(n)
    J = resolution_stage(sc, A, max(pn, qn))
    left = c.lift(A, J).translate(pn)
    right = conjugated_image(sc, A, qn, J)
    return (left & right).size * c.floor_measure(J)


def poisson_term(sc: DivergenceScenario, n: int, A: FloorSet | None = None) -> ExactExp:
    """``mu_o(C(sigma^p A, 0) ∩ C(T^q A, 0)) = exp(-mu(sigma^p A ∪ T^q A))``."""
    A = sc.A if A is None else A
    mA = sc.construction.measure(A)
    return ExactExp(1, 2 * mA - base_term(sc, n, A))


@dataclass
class SeriesRow:
    n: int
    p_n: int
    q_n: int
    term: Fraction | ExactExp
    running_avg: Fraction | float


def average_series(sc: DivergenceScenario, N: int, level: str = "base") -> list[SeriesRow]:
    """Terms and running averages for ``n = 1..N``, every term by direct evaluation."""
    if level not in ("base", "poisson"):
        raise InvalidInput(f"unknown level {level!r}")
    rows = []
    total_f = Fraction(0)
    total_x = 0.0
    mA = sc.construction.measure(sc.A)
    for n in range(1, N + 1):
        t = base_term(sc, n)
        if level == "base":
            total_f += t
            rows.append(SeriesRow(n, sc.seqs.p(n), sc.seqs.q(n), t, total_f / n))
        else:
            e = ExactExp(1, 2 * mA - t)
            total_x += float(e)
            rows.append(SeriesRow(n, sc.seqs.p(n), sc.seqs.q(n), e, total_x / n))
    return rows


def block_bounds(sc: DivergenceScenario, j: int) -> dict:
    w = sc.windows[j]
    prev = sc.windows.get(j - 1)
    ratio = Fraction(prev.N, w.N) if prev is not None and w.N else None
    return {"j": j, "N": w.N, "ratio_prev": ratio}


def expected_image(sc: DivergenceScenario, j: int, n: int) -> FloorSet:
    """Where the window rule sends ``A`` at index ``n`` of stage ``j``."""
    w = sc.windows[j]
    A = sc.construction.lift(sc.A, j + 1)
    shift = sc.seqs.p(n) + (2 * w.h if j % 2 == 1 else 0)
    return A.translate(shift)


def check_window_exact(sc: DivergenceScenario, j: int, ns: Iterable[int] | None = None) -> dict:
    """Interval-exact check of the window identities at stage ``j``.

    Even ``j``: ``T^{q(n)} A == sigma^{p(n)} A``.  Odd ``j``:
    ``T^{q(n)} A == sigma^{p(n) + 2h_j} A`` and hence misses ``sigma^{p(n)} A``.
    """
    w = sc.windows[j]
    if not w.active:
        raise InfeasibleWindow(f"stage {j} has no window")
    c = sc.construction
    ns = range(w.start, w.N + 1) if ns is None else ns
    checked = ok = 0
    for n in ns:
        img = conjugated_image(sc, sc.A, sc.seqs.q(n), j + 1)
        target = c.lift(sc.A, j + 1).translate(sc.seqs.p(n))
        if j % 2 == 0:
            good = img == target
        else:
            good = img == expected_image(sc, j, n) and not (img & target)
        checked += 1
        ok += bool(good)
    return {"j": j, "checked": checked, "ok": ok}


def check_window_vectorized(sc: DivergenceScenario, j: int, chunk: int = 1 << 20) -> dict:
    """Chunked numpy check that every window piece carries ``A`` where the rule says.

    Inside tower ``j + 1`` the set ``A`` is fixed by ``P`` and ``A + q(n)``
    lies in the zone where only the stage-``j`` permutation acts, so the
    identity reduces to the images of the lowest and highest floor of
    ``A + q(n)``: the permutation is a translation on each piece, so both
    landing in place means the whole piece containing ``A + q(n)`` does.
    """
    w = sc.windows[j]
    perm = sc.perms[j]
    c = sc.construction
    A = c.lift(sc.A, j + 1)
    ends = np.array([A.lo, A.hi - 1], dtype=np.int64)
    shift = 2 * w.h if j % 2 == 1 else 0
    checked = ok = 0
    for n0 in range(w.start, w.N + 1, chunk):
        n1 = min(w.N, n0 + chunk - 1)
        ns = np.arange(n0, n1 + 1, dtype=np.int64)
        qn = sc.seqs.q.eval_np(ns)
        pn = sc.seqs.p.eval_np(ns)
        pts = (qn[:, None] + ends[None, :]).ravel()
        got = perm.map_points(pts, n0, n1).reshape(len(ns), len(ends))
        want = pn[:, None] + shift + ends[None, :]
        good = np.all(got == want, axis=1)
        checked += len(ns)
        ok += int(good.sum())
    return {"j": j, "checked": checked, "ok": ok}


# -- repulsion ---------------------------------------------------------------------------


@dataclass
class RepulsionScenario:
    spec: ConstructionSpec
    E: FloorSet
    RE: FloorSet
    tensor_exponent: int = 4

    def __post_init__(self) -> None:
        if self.E & self.RE:
            raise InvalidInput("E and RE must be disjoint")
        c = as_construction(self.spec)
        if c.measure(self.E) != c.measure(self.RE):
            raise InvalidInput("E and RE must have equal measure")

    @property
    def construction(self) -> Construction:
        return as_construction(self.spec)

    @property
    def R(self) -> Swap:
        return Swap(self.E, self.RE)

    @property
    def U(self) -> FloorSet:
        return self.E | self.RE


def repulsion_conjunction(sc: RepulsionScenario, n: int) -> CylinderConjunction:
    """``S^n D ∩ T^n D`` for ``S = R T R`` and ``D = C(E,0) ∩ C(RE,1)``."""
    c = sc.construction
    R = sc.R
    tE = shift_image(c, sc.E, n)
    tRE = shift_image(c, sc.RE, n)
    return CylinderConjunction.of(
        (swap_image(c, tRE, R), 0),
        (swap_image(c, tE, R), 1),
        (tE, 0),
        (tRE, 1),
    )


def repulsion_measure(sc: RepulsionScenario, n: int) -> ExactExp:
    if n < 0:
        raise InvalidInput("n must be non-negative")
    return cylinder_measure(sc.construction, repulsion_conjunction(sc, n))


def overlap_table(sc: RepulsionScenario, upto_stage: int, lo: int = 0) -> dict[int, Fraction]:
    """Exact ``mu(T^n U ∩ U)`` for every ``lo < n < h_{upto_stage}`` where it is non-zero."""
    c = sc.construction
    hm = c.height(upto_stage)
    L = certification_stage(c, hm - 1, upto_stage)
    pos = list(c.lift(sc.U, L).floors())
    if len(pos) ** 2 > 4 * EXHAUSTIVE_PAIRS:
        raise CombinatorialBudget(f"{len(pos)} floors of U are too many to pair up")
    fm = c.floor_measure(L)
    D: Counter = Counter()
    for i, a in enumerate(pos):
        k = bisect.bisect_left(pos, a + hm, lo=i)
        for b in pos[i + 1:k]:
            if b - a > lo:
                D[b - a] += 1
    return {n: v * fm for n, v in sorted(D.items())}


def overlap(sc: RepulsionScenario, n: int) -> Fraction:
    U = sc.U
    return multi_intersection(sc.construction, IntersectionQuery(((n, U), (0, U)))).value


def stage_of_lag(c: Construction, n: int) -> int:
    """``j`` with ``h_j < n <= h_{j+1}``."""
    j = 1
    while c.height(j + 1) < n:
        j += 1
    return j


def floor_autocorrelation_sum(h1: int, d: int) -> Fraction:
    """``sum_{|k| < h1} ((h1 - |k|) / h1)^(2d)``: the factor a first tower of height ``h1`` contributes."""
    return sum((Fraction(h1 - abs(k), h1) ** (2 * d) for k in range(-(h1 - 1), h1)), Fraction(0))


def power_sum_bound(sc: RepulsionScenario, m: int, d: int = 2) -> Fraction:
    """Bound for ``sum_{0 < n < h_m} mu(T^n U ∩ U)^(2d)`` from the product over stages ``< m``.

    The product counts each column-offset lag once; a first tower with
    ``h1`` floors spreads every lag over ``2 h1 - 1`` neighbours, which the
    autocorrelation factor accounts for.  Equality holds for ``U = X1``.
    """
    c = sc.construction
    scale = c.measure(sc.U) / c.measure(c.x1(1))
    total = floor_autocorrelation_sum(c.spec.h1, d) * product_rhs(c, m, d)
    return (total * scale ** (2 * d) - scale ** (2 * d)) / 2


@dataclass
class RepulsionReport:
    rows: list[dict]
    C: Fraction
    fit_window: int
    bound_holds: bool
    window_max: dict[int, float]
    strictly_decreasing: bool
    exhaustive: dict[int, bool]
    overlap_pow_sum: Fraction
    rep_pow_sum: float
    sum_stage: int
    product_bound: Fraction
    summable_ok: bool
    zero_checks: int
    zero_ok: bool

    def as_dict(self) -> dict:
        return {
            "C": self.C, "fit_window": self.fit_window, "bound_holds": self.bound_holds,
            "window_max": {str(k): v for k, v in self.window_max.items()},
            "strictly_decreasing": self.strictly_decreasing,
            "exhaustive": {str(k): v for k, v in self.exhaustive.items()},
            "overlap_pow_sum": self.overlap_pow_sum, "rep_pow_sum": self.rep_pow_sum, "sum_stage": self.sum_stage,
            "product_bound": self.product_bound, "summable_ok": self.summable_ok,
            "zero_checks": self.zero_checks, "zero_ok": self.zero_ok, "rows": len(self.rows),
        }


EXHAUSTIVE_PAIRS = 2_000_000


def _window_lags(sc: RepulsionScenario, j: int, sample: int, rng: np.random.Generator) -> tuple[dict[int, Fraction], bool]:
    """Non-zero overlaps in ``(h_j, h_{j+1}]``: all of them, or a seeded sample around stage-``j`` lags."""
    c = sc.construction
    floors = c.lift(sc.U, j + 1).size
    if floors ** 2 <= EXHAUSTIVE_PAIRS:
        lo, hi = c.height(j), c.height(j + 1)
        tab = overlap_table(sc, j + 1, lo)
        top = overlap(sc, hi)
        if top:
            tab[hi] = top
        return tab, True
    lags = sorted({lam for lam in lag_family(c, j) if lam > 0})
    pick = rng.choice(len(lags), size=min(sample, len(lags)), replace=False)
    out = {}
    for i in sorted(int(x) for x in pick):
        for n in (lags[i] - 1, lags[i], lags[i] + 1):
            v = overlap(sc, n)
            if v:
                out[n] = v
    return out, False


def repulsion_summability(sc: RepulsionScenario, windows: Sequence[int] = (1, 2, 3), zero_samples: int = 20,
                          sample: int = 64, seed: int = 0) -> RepulsionReport:
    """Fit ``C`` on the first window, verify it on the rest, and compare power sums.

    Windows are the lag ranges ``(h_j, h_{j+1}]``.  A window is enumerated in
    full when ``U`` is small enough there, otherwise ``sample`` seeded lags of
    the stage plus their neighbours stand in for it.  ``zero_samples`` lags
    with empty overlap per window must give exactly zero.  Power sums run
    over the windows enumerated in full.
    """
    c = sc.construction
    rng = np.random.Generator(np.random.Philox(seed))
    rows = []
    exhaustive = {}
    found: dict[int, Fraction] = {}
    for j in windows:
        tab, full = _window_lags(sc, j, sample, rng)
        exhaustive[j] = full
        found.update(tab)
        for n, ov in tab.items():
            rows.append({"n": n, "window": j, "overlap": ov, "rep": repulsion_measure(sc, n), "exhaustive": full})
    fit = min(windows)
    C = max((_upper_ratio(r["rep"], r["overlap"]) for r in rows if r["window"] == fit), default=Fraction(0))
    bound = all(_exp_le(r["rep"], C * r["overlap"]) for r in rows)
    wmax = {j: max((float(r["rep"]) for r in rows if r["window"] == j), default=0.0) for j in windows}
    seq = [wmax[j] for j in sorted(windows)]
    decreasing = all(a > b for a, b in zip(seq, seq[1:]))
    zero_checks = 0
    zero_ok = True
    for j in windows:
        lo, hi = c.height(j) + 1, c.height(j + 1)
        got = tries = 0
        while got < zero_samples and tries < 50 * zero_samples:
            tries += 1
            n = lo + int(rng.integers(0, min(hi - lo + 1, 2**62)))
            if n in found or overlap(sc, n) != 0:
                continue
            got += 1
            zero_checks += 1
            if repulsion_measure(sc, n).coeff != 0:
                zero_ok = False
    full = [j for j in sorted(windows) if exhaustive[j]]
    m = max((j + 1 for j in full if all(k in full for k in range(1, j + 1))), default=1)
    if m > 1:
        head = overlap_table(sc, m)
        pow_sum = sum((ov**4 for ov in head.values()), Fraction(0))
        rep_sum = sum(float(r["rep"]) ** 4 for r in rows if r["n"] < c.height(m))
    else:
        pow_sum, rep_sum = Fraction(0), 0.0
    prod = power_sum_bound(sc, m, 2)
    return RepulsionReport(rows, C, fit, bound, wmax, decreasing, exhaustive, pow_sum, rep_sum, m, prod,
                           pow_sum <= prod, zero_checks, zero_ok)


def _upper_ratio(x: ExactExp, ov: Fraction) -> Fraction:
    """A rational at least ``x / ov``, tight to about 30 digits."""
    if x.coeff == 0:
        return Fraction(0)
    return Fraction(x.approx(40)) / ov + Fraction(1, 10**30)


def _exp_le(x: ExactExp, bound: Fraction) -> bool:
    """Exact ``coeff * exp(-s) <= bound`` using rational bounds on ``exp(-s)``."""
    if x.coeff == 0:
        return bound >= 0
    # exp(-s) <= sum of the alternating series truncated after an even number of terms
    s = x.exponent
    upper = Fraction(0)
    term = Fraction(1)
    for k in range(0, 40):
        upper += term
        term = -term * s / (k + 1)
        if k % 2 == 0 and abs(term) < Fraction(1, 10**30):
            break
    if x.coeff * upper <= bound:
        return True
    lower = upper + term  # next partial sum is a lower bound
    return not (x.coeff * lower > bound) and float(x) <= float(bound)
