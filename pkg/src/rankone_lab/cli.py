"""Command line front end: ``rankone-lab <subcommand> [--config FILE] [--out DIR] ...``.

Each subcommand writes ``result.json`` (plus a CSV when there is a series)
and ``manifest.json`` echoing the resolved configuration, into ``--out``.
JSON keys are sorted and rationals are written as ``"p/q"`` strings, so
identical inputs give byte-identical files.

Exit statuses: 0 success, 1 invalid input, 2 budget exhausted, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, is_dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .correlation import IntersectionQuery, as_construction, multi_intersection
from .dynamics import (Poly, RepulsionScenario, SequencePair, average_series, block_bounds, build_sigma,
                       check_window_exact, check_window_vectorized, repulsion_summability)
from .errors import BudgetExceeded, InternalInvariant, InvalidInput, LabError
from .poisson import CylinderConjunction, ExactExp, cylinder_measure, mc_estimate
from .schedule import ExperimentConfig, descriptor_from, parse_floorset, parse_int_list, parse_rule
from .sidon import AffinePsi, check_growth, check_sidon, classify_tensor_powers, generate_cnu
from .spectral import pk_norm, verify_41
from .tower import FloorSet

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_INTERNAL = 0, 1, 2, 3


# -- serialisation -------------------------------------------------------------------


def to_jsonable(x: Any) -> Any:
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, int):
        return x if abs(x) < 2**53 else str(x)
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, Decimal):
        return str(x)
    if isinstance(x, ExactExp):
        return x.as_dict()
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if is_dataclass(x):
        return to_jsonable(asdict(x))
    return str(x)


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def csv_text(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v: Any) -> str:
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, ExactExp):
        return str(v.approx(30))
    if isinstance(v, float):
        return repr(v)
    return str(v)


# -- helpers -------------------------------------------------------------------------


class Outputs:
    def __init__(self) -> None:
        self.files: dict[str, str] = {}

    def json(self, name: str, obj: Any) -> None:
        self.files[name] = dumps(obj)

    def csv(self, name: str, header: list[str], rows: list[list[Any]]) -> None:
        self.files[name] = csv_text(header, rows)


def _get(sec: dict[str, str], key: str, default: Any, cast: Callable = str) -> Any:
    if key not in sec:
        return default
    try:
        return cast(sec[key])
    except (ValueError, ZeroDivisionError):
        raise InvalidInput(f"bad value for {key!r}: {sec[key]!r}") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _default_stages(cfg: ExperimentConfig, args) -> int:
    spec = cfg.spec()
    n = spec.n_stages or 4
    return min(n, args.max_stage) if args.max_stage else n


# -- subcommands ---------------------------------------------------------------------


def cmd_build(cfg: ExperimentConfig, args, out: Outputs) -> dict:
    spec = cfg.spec()
    c = as_construction(spec)
    n = _default_stages(cfg, args)
    rows = []
    for j in range(1, n + 1):
        p = c.params(j)
        rows.append([j, p.r, c.height(j), ";".join(map(str, p.spacers)), c.floor_measure(j)])
    out.csv("stages.csv", ["j", "r", "h", "spacers", "floor_measure"], rows)
    return {"stages": n, "h_next": c.height(n + 1), "description": spec.description}


def cmd_correlate(cfg: ExperimentConfig, args, out: Outputs) -> dict:
    spec = cfg.spec()
    c = as_construction(spec)
    sec = cfg.section("correlate")
    x1 = c.x1(1)
    A = parse_floorset(sec.get("A", "x1"), x1)
    B = parse_floorset(sec.get("B", "x1"), x1)
    lags = parse_int_list(sec.get("lags", "0..10"))
    eps = _get(sec, "eps", Fraction(0), Fraction)
    max_stage = args.max_stage
    rows = []
    for n in lags:
        v = multi_intersection(c, IntersectionQuery(((n, A), (0, B))), eps, max_stage=max_stage,
                               best_effort=_get(sec, "best_effort", False, _bool))
        rows.append([n, v.lo, v.hi, v.exact, v.stage])
    out.csv("correlations.csv", ["n", "lo", "hi", "exact", "stage"], rows)
    return {"A": A.to_text(), "B": B.to_text(), "A_stage": A.stage, "B_stage": B.stage, "lags": len(lags),
            "all_exact": all(r[3] for r in rows)}


def cmd_sidon(cfg: ExperimentConfig, args, out: Outputs) -> dict:
    spec = cfg.spec()
    sec = cfg.section("sidon")
    upto = _get(sec, "upto", max(1, _default_stages(cfg, args) - 1), int)
    verdicts = check_sidon(spec, upto)
    psi = AffinePsi(*(int(x) for x in sec["psi"].split(","))) if "psi" in sec else AffinePsi()
    ok, bad = check_growth(spec, psi, min(upto, spec.n_stages or upto))
    out.csv("sidon.csv", ["j", "sidon", "coincidence_free", "wrap_stage", "clash"],
            [[v.j, v.sidon, v.coincidence_free, v.wrap_stage, v.clash] for v in verdicts])
    return {"upto": upto, "all_sidon": all(v.sidon for v in verdicts), "growth_ok": ok, "growth_fails_at": bad}


def cmd_classify(cfg: ExperimentConfig, args, out: Outputs) -> dict:
    sec = cfg.section("classify")
    nu = args.nu if args.nu is not None else sec.get("nu", "0")
    dmax = args.dmax if args.dmax is not None else _get(sec, "dmax", 5, int)
    rep = classify_tensor_powers(Fraction(nu), int(dmax))
    out.csv("phases.csv", ["d", "recurrence", "spectrum"],
            [[p.d, p.recurrence, p.spectrum] for p in rep.powers])
    return rep.as_dict()


def cmd_verify41(cfg: ExperimentConfig, args, out: Outputs) -> dict:
    spec = cfg.spec()
    sec = cfg.section("verify")
    m = _get(sec, "m", 3, int)
    ds = parse_int_list(sec.get("d", "1,2"))
    res = [verify_41(spec, m, d) for d in ds]
    out.csv("identity.csv", ["m", "d", "lhs", "rhs", "equal"], [[r["m"], r["d"], r["lhs"], r["rhs"], r["equal"]]
                                                               for r in res])
    return {"m": m, "results": res, "equal": all(r["equal"] for r in res)}


def cmd_pk(cfg: ExperimentConfig, args, out: Outputs) -> dict:
    sec = cfg.section("pk")
    rule = sec.get("rule", "cnu(nu=2, base=2)")
    _, rargs = parse_rule(rule)
    desc = descriptor_from(rargs, _get(sec, "h1", 1, int), AffinePsi())
    k = _get(sec, "k", 1, int)
    n_eff = _get(sec, "n_eff", None, int)
    d = _get(sec, "d", 2, int)
    ps = parse_int_list(sec.get("p", "1,2"))
    stages = _get(sec, "stages", None, int)
    if stages is None:
        blocks = desc.blocks(10_000)
        j0 = next(j for kk, j, _ in blocks if kk == k)
        stages = j0 + (n_eff or desc.block_length(k)) + 1
    spec = generate_cnu(desc, stages)
    reports = [pk_norm(spec, desc, k, d, p, n_eff, decompose=_get(sec, "decompose", False, _bool)) for p in ps]
    rows = [[r.k, r.d, r.p, r.r, r.N_k, r.N_eff, r.dist_lo, r.dist_hi, r.closed_form, r.disjoint_support]
            for r in reports]
    out.csv("pk.csv", ["k", "d", "p", "r", "N_k", "N_eff", "dist_lo", "dist_hi", "closed_form", "disjoint_support"],
            rows)
    return {"descriptor": desc.describe(), "stages": stages,
            "reports": [{"p": r.p, "dist": r.dist_lo, "exact": r.exact, "closed_form": r.closed_form,
                         "disjoint_support": r.disjoint_support, "variance": r.variance, "outside": r.outside,
                         "stages": r.stages} for r in reports]}


def cmd_poisson(cfg: ExperimentConfig, args, out: Outputs) -> dict:
    spec = cfg.spec()
    c = as_construction(spec)
    sec = cfg.section("poisson")
    x1 = c.x1(1)
    pairs = []
    for key in sorted(k for k in sec if k.startswith("event")):
        text, sep, cnt = sec[key].rpartition("|")
        if not sep:
            raise InvalidInput(f"{key}: expected '<floor set> | <count>'")
        pairs.append((parse_floorset(text, x1), int(cnt)))
    if not pairs:
        raise InvalidInput("[poisson] needs at least one 'eventN = <set> | <count>'")
    conj = CylinderConjunction.of(*pairs)
    exact = cylinder_measure(c, conj)
    result = {"exact": exact, "events": [{"set": s.to_text(), "stage": s.stage, "count": k} for s, k in pairs]}
    samples = args.samples if args.samples is not None else _get(sec, "samples", 0, int)
    if samples:
        region = parse_floorset(sec.get("region", "x1"), x1)
        mc = mc_estimate(c, conj, region, samples, args.seed, jobs=args.jobs)
        sigma = mc.stderr
        result["mc"] = mc.as_dict()
        result["mc"]["z"] = (mc.estimate - float(exact)) / sigma if sigma > 0 else 0.0
        result["region"] = region.to_text()
    return result


def _sequence_pair(sec: dict[str, str]) -> SequencePair:
    return SequencePair(Poly.parse(sec.get("p", "3n^2")), Poly.parse(sec.get("q", "3n^2+n")))


def cmd_diverge(cfg: ExperimentConfig, args, out: Outputs) -> dict:
    sec = cfg.section("diverge")
    seqs = _sequence_pair(sec)
    stages = _get(sec, "stages", 4, int)
    if args.max_stage:
        stages = min(stages, args.max_stage)
    katok = parse_int_list(sec.get("katok", ""))
    occ = _get(sec, "occupancy", None, Fraction)
    sc = build_sigma(seqs, stages, katok, h1=_get(sec, "h1", 1, int), spread=_get(sec, "spread", 1, int),
                     occupancy=occ)
    level = sec.get("level", "poisson")
    active = sc.active_stages()
    default_N = max((sc.windows[j].N for j in active if sc.windows[j].N <= 10_000), default=20)
    N = _get(sec, "N", default_N, int)
    cap = _get(sec, "exact_cap", 100_000, int)
    checks = []
    for j in active:
        w = sc.windows[j]
        if w.size <= cap:
            checks.append(dict(check_window_exact(sc, j), method="exact"))
        elif _get(sec, "verify_large", False, _bool):
            checks.append(dict(check_window_vectorized(sc, j), method="vectorized"))
        else:
            checks.append({"j": j, "checked": 0, "ok": 0, "method": "skipped"})
    rows = average_series(sc, N, level)
    out.csv("series.csv", ["n", "p_n", "q_n", "term_lo", "term_hi", "running_avg"],
            [[r.n, r.p_n, r.q_n, r.term, r.term, r.running_avg] for r in rows])
    out.json("scenario.json", sc.manifest())
    return {"active_stages": active, "level": level, "N": N, "window_checks": checks,
            "block_bounds": [block_bounds(sc, j) for j in sorted(sc.windows)],
            "averages_at_N_j": {str(j): rows[sc.windows[j].N - 1].running_avg for j in active
                                if 1 <= sc.windows[j].N <= N}}


def cmd_repulse(cfg: ExperimentConfig, args, out: Outputs) -> dict:
    sec = cfg.section("repulse")
    _, rargs = parse_rule(sec.get("rule", "cnu(nu=0, base=2, blocks=geometric)"))
    h1 = _get(sec, "h1", 2, int)
    desc = descriptor_from(rargs, h1, AffinePsi())
    windows = parse_int_list(sec.get("windows", "1,2,3"))
    stages = _get(sec, "stages", max(windows) + 1, int)
    spec = generate_cnu(desc, stages)
    E = FloorSet.of_floors([_get(sec, "E", 0, int)], 1)
    RE = FloorSet.of_floors([_get(sec, "RE", 1, int)], 1)
    sc = RepulsionScenario(spec, E, RE)
    rep = repulsion_summability(sc, windows, zero_samples=_get(sec, "zero_samples", 20, int),
                                sample=args.samples or _get(sec, "sample", 64, int), seed=args.seed)
    out.csv("repulsion.csv", ["n", "window", "overlap", "rep_coeff", "rep_exponent", "rep_approx"],
            [[r["n"], r["window"], r["overlap"], r["rep"].coeff, r["rep"].exponent, r["rep"].approx(30)]
             for r in rep.rows])
    return dict(rep.as_dict(), descriptor=desc.describe())


COMMANDS: dict[str, Callable] = {
    "build": cmd_build,
    "correlate": cmd_correlate,
    "sidon-check": cmd_sidon,
    "classify": cmd_classify,
    "verify-41": cmd_verify41,
    "pk-diagnose": cmd_pk,
    "poisson": cmd_poisson,
    "diverge": cmd_diverge,
    "repulse": cmd_repulse,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors are invalid input, not budget exhaustion
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rankone-lab", description="Exact experiments on rank-one constructions.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="schedule / experiment config file")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--max-stage", type=int, default=None)
        s.add_argument("--samples", type=int, default=None)
        if name == "classify":
            s.add_argument("--nu", default=None)
            s.add_argument("--dmax", type=int, default=None)
    return p


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed < 0 or args.seed >= 2**64:
            raise InvalidInput("seed must be an unsigned 64-bit integer")
        if args.jobs < 1 or (args.max_stage is not None and args.max_stage < 1) or (
                args.samples is not None and args.samples < 0):
            raise InvalidInput("budgets must be positive")
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        out = Outputs()
        result = COMMANDS[args.command](cfg, args, out)
        manifest = {
            "command": args.command,
            "version": __version__,
            "seed": args.seed,
            "jobs": args.jobs,
            "max_stage": args.max_stage,
            "samples": args.samples,
            "config": cfg.sections,
            "config_text": cfg.source_text,
            "outputs": sorted(["result.json", *out.files]),
        }
        if args.command == "classify":
            manifest["nu"], manifest["dmax"] = args.nu, args.dmax
        out.json("result.json", dict(result, seed=args.seed))
        out.json("manifest.json", manifest)
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(out.files.items()):
            (dest / name).write_text(text)
        return EXIT_OK
    except InvalidInput as exc:
        return _fail(exc, EXIT_INVALID)
    except BudgetExceeded as exc:
        return _fail(exc, EXIT_BUDGET)
    except (InternalInvariant, LabError) as exc:
        return _fail(exc, EXIT_INTERNAL)
    except (AssertionError, ArithmeticError, KeyError, IndexError, TypeError, ValueError) as exc:
        return _fail(exc, EXIT_INTERNAL)


def _fail(exc: Exception, status: int) -> int:
    code = getattr(exc, "code", "internal_error")
    sys.stderr.write(json.dumps({"error": code, "message": str(exc), "status": status}, sort_keys=True) + "\n")
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
