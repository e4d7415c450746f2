"""Sidon tests, generated C(nu) schedules and the tensor-power phase table."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .correlation import Source, as_construction
from .errors import InvalidDescriptor, StageUnavailable, TooLarge
from .tower import ConstructionSpec, StageParams


def iroot(x: int, k: int) -> int:
    """Largest integer ``y`` with ``y**k <= x``."""
    if x < 0 or k < 1:
        raise ValueError("iroot needs x >= 0 and k >= 1")
    if x < 2 or k == 1:
        return x
    y = int(round(x ** (1.0 / k))) if x < 2**1000 else 1 << (x.bit_length() // k + 1)
    # Newton from above, then fix up by one
    y = max(y, 1)
    while y**k > x:
        y = ((k - 1) * y + x // y ** (k - 1)) // k
    while (y + 1) ** k <= x:
        y += 1
    return y


def floor_power(r: int, nu: Fraction) -> int:
    """``floor(r ** nu)`` for a non-negative rational ``nu``, exactly."""
    nu = Fraction(nu)
    return iroot(r**nu.numerator, nu.denominator)


@dataclass(frozen=True)
class AffinePsi:
    """Growth witness ``psi(j) = a*j + b``."""

    a: int = 1
    b: int = 1

    def __call__(self, j: int) -> int:
        return self.a * j + self.b

    def describe(self) -> str:
        return f"{self.a}*j+{self.b}"


def fast_spacers(r: int, h: int, psi_j: int) -> tuple[int, ...]:
    """``s(i) = 32 r h rho^i`` with ``rho = psi(j) + 4``.

    The ratio between neighbours is ``rho > psi(j)`` and ``s(1) > psi(j) h``,
    and the factor ``32 r`` keeps every pairwise offset difference and every
    wrap-around translate well separated.
    """
    rho = psi_j + 4
    base = 32 * r * h
    return tuple(base * rho**i for i in range(1, r + 1))


def sidon_schedule(profile: Sequence[int] | Callable[[int], int], stages: int | None = None, h1: int = 1,
                   psi: AffinePsi = AffinePsi(), name: str = "") -> ConstructionSpec:
    """Fast-spacer Sidon construction with an arbitrary cut-count profile.

    ``profile`` is a list ``(r_1, r_2, ...)`` or a function ``j -> r_j``.
    """
    if callable(profile):
        rfun = profile
        n = stages
    else:
        prof = list(profile)
        rfun = lambda j: prof[j - 1]  # noqa: E731
        n = len(prof) if stages is None else min(stages, len(prof))

    def rule(j: int, h: int) -> StageParams:
        r = rfun(j)
        return StageParams(r, fast_spacers(r, h, psi(j)))

    desc = {"kind": "sidon", "h1": h1, "psi": psi.describe()}
    if not callable(profile):
        desc["profile"] = list(profile)[: n]
    if n is None:
        return ConstructionSpec(h1, rule=rule, name=name or "sidon", description=desc)
    stages_list = []
    h = h1
    for j in range(1, n + 1):
        p = rule(j, h)
        stages_list.append(p)
        h = h * p.r + p.total_spacers
    return ConstructionSpec(h1, tuple(stages_list), name=name or "sidon", description=desc)


@dataclass(frozen=True)
class GeometricBlocks:
    """Block cut counts ``base**k``; ``sum_k r_k^-delta`` still converges for every ``delta > 0``."""

    base: int = 2

    def __call__(self, k: int) -> int:
        return self.base**k

    def describe(self) -> str:
        return f"{self.base}^k"


@dataclass(frozen=True)
class CnuDescriptor:
    """Class C(nu) recipe: block cut counts ``base**(k*k)`` held for ``floor(r**nu)`` stages."""

    nu: Fraction
    base: int = 2
    psi: AffinePsi = field(default_factory=AffinePsi)
    h1: int = 1
    block_rule: Callable[[int], int] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "nu", Fraction(self.nu))
        if self.nu < 0:
            raise InvalidDescriptor(f"nu must be >= 0, got {self.nu}")
        if self.base < 2:
            raise InvalidDescriptor(f"base must be >= 2, got {self.base}")
        if self.h1 < 1:
            raise InvalidDescriptor("h1 must be >= 1")
        if self.psi.a < 1 or self.psi(1) < 1:
            raise InvalidDescriptor("psi must be increasing and positive")

    def block_r(self, k: int) -> int:
        if self.block_rule is not None:
            r = self.block_rule(k)
            if k > 1 and r <= self.block_rule(k - 1):
                raise InvalidDescriptor("block cut counts must increase strictly")
            if r < 2:
                raise InvalidDescriptor("block cut counts must be >= 2")
            return r
        return self.base ** (k * k)

    def block_length(self, k: int) -> int:
        return floor_power(self.block_r(k), self.nu)

    def blocks(self, stages: int) -> list[tuple[int, int, int]]:
        """``(k, j(k), r_{j(k)})`` for every block that starts at or before ``stages``."""
        out = []
        j, k = 1, 1
        while j <= stages:
            out.append((k, j, self.block_r(k)))
            j += self.block_length(k)
            k += 1
        return out

    def r_at(self, j: int) -> int:
        start, k = 1, 1
        while True:
            n = self.block_length(k)
            if j < start + n:
                return self.block_r(k)
            start += n
            k += 1

    def describe(self) -> dict:
        rule = f"{self.base}^(k^2)" if self.block_rule is None else getattr(self.block_rule, "describe", lambda: "custom")()
        return {"kind": "cnu", "nu": _frac_text(self.nu), "base": self.base, "blocks": rule, "psi": self.psi.describe(),
                "h1": self.h1}


def generate_cnu(desc: CnuDescriptor, stages: int) -> ConstructionSpec:
    """Explicit ``stages``-stage C(nu) schedule with fast spacers."""
    if stages < 1:
        raise InvalidDescriptor("need at least one stage")
    rs = [desc.r_at(j) for j in range(1, stages + 1)]
    spec = sidon_schedule(rs, h1=desc.h1, psi=desc.psi, name=f"cnu(nu={_frac_text(desc.nu)})")
    d = dict(desc.describe())
    d["stages"] = stages
    object.__setattr__(spec, "description", d)
    return spec


def cnu_rule_spec(desc: CnuDescriptor) -> ConstructionSpec:
    """Unbounded rule-generated version of :func:`generate_cnu`."""
    return sidon_schedule(desc.r_at, stages=None, h1=desc.h1, psi=desc.psi, name=f"cnu(nu={_frac_text(desc.nu)})")


def _frac_text(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


# -- checks --------------------------------------------------------------------


def check_growth(source: Source, psi: Callable[[int], int], upto: int) -> tuple[bool, int | None]:
    """Check ``h_j << s_j(1) << ... << s_j(r_j)`` for ``j <= upto``.

    Returns ``(True, None)`` or ``(False, first failing stage)``.
    """
    c = as_construction(source)
    for j in range(1, upto + 1):
        p = c.params(j)
        g = psi(j)
        prev = c.height(j)
        for s in p.spacers:
            if not s > g * prev:
                return False, j
            prev = s
    return True, None


@dataclass(frozen=True)
class SidonVerdict:
    j: int
    coincidence_free: bool
    wrap_stage: int | None
    clash: tuple[int, int] | None = None

    @property
    def sidon(self) -> bool:
        return self.coincidence_free and self.wrap_stage is not None


def _wrap_stage(c, j: int) -> int | None:
    target = c.height(j + 1)
    L = j + 1
    while c.has_params(L):
        if c.params(L).min_spacer >= target:
            return L
        L += 1
    return None


def check_sidon_stage(source: Source, j: int) -> SidonVerdict:
    """Decide whether ``T^m X_j ∩ X_j`` sits in one stage-``j`` column for ``h_j < m <= h_{j+1}``.

    The tower copies of stage ``j`` are placed inside a stage ``L`` whose
    spacers all exceed ``h_{j+1}``; there every translate by ``m <= h_{j+1}``
    is exact.  Each ordered pair of copies at distance ``D`` meets for
    ``m`` in ``[D - h_j + 1, D + h_j - 1]`` inside the copy of the upper one,
    so the test is that overlapping pair windows always point at the same
    column.  Without such an ``L`` the verdict is negative.
    """
    c = as_construction(source)
    if not c.has_params(j):
        raise StageUnavailable(f"stage {j} parameters are not available")
    hj, hn = c.height(j), c.height(j + 1)
    L = _wrap_stage(c, j)
    at = L if L is not None else j + 1
    copies = c.copy_offsets(j, at)
    windows = []
    for a in range(len(copies)):
        oa, _ = copies[a]
        for b in range(a + 1, len(copies)):
            ob, col = copies[b]
            d = ob - oa
            lo = max(d - hj + 1, hj + 1)
            hi = min(d + hj - 1, hn)
            if d - hj + 1 > hn:
                break
            if lo <= hi:
                windows.append((lo, hi, col))
        if len(windows) > 5_000_000:
            raise TooLarge("too many tower-copy pairs")
    windows.sort()
    clash = None
    reach = None  # (hi, col) of the window reaching furthest so far
    for lo, hi, col in windows:
        if reach is not None and lo <= reach[0] and col != reach[1]:
            clash = (lo, min(hi, reach[0]))
            break
        if reach is None or hi > reach[0]:
            reach = (hi, col)
    return SidonVerdict(j, clash is None, L, clash)


def check_sidon(source: Source, upto: int) -> list[SidonVerdict]:
    return [check_sidon_stage(source, j) for j in range(1, upto + 1)]


# -- phase table ---------------------------------------------------------------


@dataclass(frozen=True)
class PowerPhase:
    d: int
    recurrence: str
    spectrum: str

    def as_dict(self) -> dict:
        return {"d": self.d, "recurrence": self.recurrence, "spectrum": self.spectrum}


@dataclass(frozen=True)
class PhaseReport:
    nu: Fraction
    powers: tuple[PowerPhase, ...]

    def as_dict(self) -> dict:
        return {"nu": _frac_text(self.nu), "powers": [p.as_dict() for p in self.powers]}

    def by_d(self, d: int) -> PowerPhase:
        return self.powers[d - 1]


def classify_tensor_powers(nu: Fraction | int | str, d_max: int) -> PhaseReport:
    """Recurrence and spectral type of the tensor powers ``T^{⊗d}``, ``d <= d_max``.

    Conservative iff ``nu >= d - 1``; singular iff ``nu >= 2d - 2``.  A
    dissipative power is reported with its spectral verdict anyway (it is
    absolutely continuous whenever ``nu < 2d - 2``).
    """
    nu = Fraction(nu)
    if nu < 0:
        raise InvalidDescriptor("nu must be >= 0")
    out = []
    for d in range(1, d_max + 1):
        rec = "conservative" if nu >= d - 1 else "dissipative"
        spec = "singular" if nu >= 2 * d - 2 else "absolutely-continuous"
        out.append(PowerPhase(d, rec, spec))
    return PhaseReport(nu, tuple(out))
