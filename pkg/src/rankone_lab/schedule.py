"""Text formats: construction schedules, floor sets and experiment configs.

Schedule grammar (one item per line, ``#`` starts a comment)::

    h1 = 2
    stage 1: r=3 s=0,1,0
    stage 2: r=2 s=5,7

or a generated family::

    h1 = 1
    rule = cnu(nu=2, base=2)            # blocks base^(k^2)
    rule = cnu(nu=0, base=2, blocks=geometric)   # blocks base^k
    rule = sidon(profile=3;3;3)         # fast spacers, explicit cut counts
    rule = repeat(r=3, s=0;1;0)         # the same stage forever (e.g. Chacon)
    stages = 4                          # materialise this many stages
    psi = 1,1                           # growth witness a*j+b (optional)

An experiment config is the same text followed by ``[section]`` blocks of
``key = value`` pairs, one per subcommand (``[correlate]``, ``[diverge]``...).
Floor sets are written ``s<stage>: a..b c ...`` with half-open ranges
``a..b`` and single floors ``c``; ``x1`` means the base of the first tower.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import InvalidInput, InvalidSpec
from .sidon import AffinePsi, CnuDescriptor, GeometricBlocks, generate_cnu, sidon_schedule
from .tower import ConstructionSpec, FloorSet, StageParams

CONSTRUCTION = "construction"

_STAGE_KEY = re.compile(r"^stage\s+(\d+)$")
_RULE = re.compile(r"^(\w+)\((.*)\)$")


def _int(text: str, what: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise InvalidSpec(f"{what}: expected an integer, got {text!r}") from None


def _rational(text: str, what: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise InvalidSpec(f"{what}: expected a rational, got {text!r}") from None


def _stage_line(j: int, value: str) -> StageParams:
    fields = dict(part.split("=", 1) for part in value.split() if "=" in part)
    if set(fields) != {"r", "s"}:
        raise InvalidSpec(f"stage {j}: expected 'r=<int> s=<int,...>', got {value!r}")
    r = _int(fields["r"], f"stage {j} r")
    spacers = tuple(_int(x, f"stage {j} spacer") for x in fields["s"].split(","))
    return StageParams(r, spacers)


def parse_rule(text: str) -> tuple[str, dict[str, str]]:
    m = _RULE.match(text.strip())
    if not m:
        raise InvalidSpec(f"bad rule {text!r}")
    args = {}
    for part in m.group(2).split(","):
        if not part.strip():
            continue
        k, sep, v = part.partition("=")
        if not sep:
            raise InvalidSpec(f"bad rule argument {part!r}")
        args[k.strip()] = v.strip()
    return m.group(1), args


def descriptor_from(args: dict[str, str], h1: int, psi: AffinePsi) -> CnuDescriptor:
    unknown = set(args) - {"nu", "base", "blocks"}
    if unknown:
        raise InvalidSpec(f"unknown cnu arguments {sorted(unknown)}")
    blocks = args.get("blocks", "square")
    base = _int(args.get("base", "2"), "base")
    if blocks not in ("square", "geometric"):
        raise InvalidSpec(f"blocks must be 'square' or 'geometric', got {blocks!r}")
    rule = GeometricBlocks(base) if blocks == "geometric" else None
    return CnuDescriptor(_rational(args.get("nu", "0"), "nu"), base=base, psi=psi, h1=h1, block_rule=rule)


def spec_from_section(sec: dict[str, str]) -> ConstructionSpec:
    """Build a spec from the key/value pairs of the construction section."""
    if "h1" not in sec:
        raise InvalidSpec("missing 'h1 = <int>'")
    h1 = _int(sec["h1"], "h1")
    psi = AffinePsi(*(_int(x, "psi") for x in sec["psi"].split(","))) if "psi" in sec else AffinePsi()
    stage_items = {}
    for key, value in sec.items():
        m = _STAGE_KEY.match(key)
        if m:
            stage_items[int(m.group(1))] = _stage_line(int(m.group(1)), value)
        elif key not in ("h1", "rule", "stages", "psi"):
            raise InvalidSpec(f"unknown schedule key {key!r}")
    if "rule" in sec:
        if stage_items:
            raise InvalidSpec("use either explicit stages or a rule, not both")
        name, args = parse_rule(sec["rule"])
        n = _int(sec.get("stages", "4"), "stages")
        if name == "cnu":
            return generate_cnu(descriptor_from(args, h1, psi), n)
        if name == "sidon":
            prof = [_int(x, "profile") for x in args.get("profile", "").split(";") if x.strip()]
            if not prof:
                raise InvalidSpec("sidon rule needs profile=r1;r2;...")
            return sidon_schedule(prof, stages=min(n, len(prof)), h1=h1, psi=psi)
        if name == "repeat":
            params = StageParams(_int(args.get("r", "0"), "r"),
                                 tuple(_int(x, "spacer") for x in args.get("s", "").split(";") if x.strip()))
            desc = {"kind": "repeat", "h1": h1, "r": params.r, "s": list(params.spacers)}
            return ConstructionSpec(h1, rule=lambda j, h: params, name="repeat", description=desc)
        raise InvalidSpec(f"unknown rule {name!r}")
    if not stage_items:
        raise InvalidSpec("no stages given")
    if sorted(stage_items) != list(range(1, len(stage_items) + 1)):
        raise InvalidSpec(f"stages must be numbered 1..n, got {sorted(stage_items)}")
    stages = tuple(stage_items[j] for j in sorted(stage_items))
    desc = {"kind": "explicit", "h1": h1, "stages": [{"r": p.r, "s": list(p.spacers)} for p in stages]}
    return ConstructionSpec(h1, stages, name="explicit", description=desc)


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(delimiters=("=", ":"), comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                   interpolation=None)
    cp.optionxform = lambda s: " ".join(s.split())  # keep case, normalise inner spaces
    return cp


@dataclass
class ExperimentConfig:
    """Parsed config text: the construction section plus one dict per experiment section."""

    sections: dict[str, dict[str, str]] = field(default_factory=dict)
    source_text: str = ""

    @classmethod
    def parse(cls, text: str) -> ExperimentConfig:
        body = text if text.lstrip().startswith("[") else f"[{CONSTRUCTION}]\n{text}"
        cp = _parser()
        try:
            cp.read_string(body)
        except configparser.Error as exc:
            raise InvalidInput(f"config: {exc}") from None
        return cls({s: dict(cp[s]) for s in cp.sections()}, text)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        p = Path(path)
        if not p.is_file():
            raise InvalidInput(f"config file {p} does not exist")
        return cls.parse(p.read_text())

    def section(self, name: str) -> dict[str, str]:
        return dict(self.sections.get(name, {}))

    def has_construction(self) -> bool:
        return bool(self.sections.get(CONSTRUCTION))

    def spec(self) -> ConstructionSpec:
        if not self.has_construction():
            raise InvalidInput("config has no construction section")
        return spec_from_section(self.sections[CONSTRUCTION])


def parse_schedule(text: str) -> ConstructionSpec:
    return ExperimentConfig.parse(text).spec()


def parse_floorset(text: str, x1: FloorSet | None = None) -> FloorSet:
    """``s2: 0..3 7`` -> floors {0,1,2,7} of stage 2; ``x1`` -> the given base set."""
    t = text.strip()
    if t == "x1":
        if x1 is None:
            raise InvalidInput("'x1' needs a construction")
        return x1
    head, sep, rest = t.partition(":")
    if not sep or not head.strip().startswith("s"):
        raise InvalidInput(f"floor set {text!r} must look like 's<stage>: a..b c'")
    stage = _int(head.strip()[1:], "floor set stage")
    ivs = []
    for tok in rest.split():
        if ".." in tok:
            a, b = tok.split("..", 1)
            ivs.append((_int(a, "floor"), _int(b, "floor")))
        else:
            k = _int(tok, "floor")
            ivs.append((k, k + 1))
    if any(a < 0 or b <= a for a, b in ivs):
        raise InvalidInput(f"bad floor range in {text!r}")
    return FloorSet.of_intervals(ivs, stage)


def parse_int_list(text: str) -> list[int]:
    """``-3..4`` (half-open), ``1,5,9`` or a mix separated by commas."""
    out: list[int] = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ".." in tok[1:]:
            i = tok.index("..", 1)
            out.extend(range(_int(tok[:i], "range"), _int(tok[i + 2:], "range")))
        else:
            out.append(_int(tok, "integer"))
    return out


def spec_to_text(spec: ConstructionSpec) -> str:
    """Explicit schedule text for a finite spec (round-trips through :func:`parse_schedule`)."""
    if not spec.finite:
        raise InvalidInput("only finite specs can be written out")
    lines = [f"h1 = {spec.h1}"]
    for j, p in enumerate(spec.stages, 1):
        lines.append(f"stage {j}: r={p.r} s={','.join(map(str, p.spacers))}")
    return "\n".join(lines) + "\n"
