from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import pytest

from rankone_lab.cli import COMMANDS, csv_text, dumps, run, to_jsonable
from rankone_lab.poisson import ExactExp

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def invoke(tmp_path, *argv) -> tuple[int, Path]:
    out = tmp_path / "out"
    return run([*argv, "--out", str(out)]), out


def load(out: Path, name: str = "result.json") -> dict:
    return json.loads((out / name).read_text())


def test_every_subcommand_registered():
    assert sorted(COMMANDS) == sorted(["build", "correlate", "sidon-check", "classify", "verify-41", "pk-diagnose",
                                       "poisson", "diverge", "repulse"])


def test_classify_flags(tmp_path):
    rc, out = invoke(tmp_path, "classify", "--nu", "2", "--dmax", "5")
    assert rc == 0
    rows = (out / "phases.csv").read_text().splitlines()
    assert rows[1:] == ["1,conservative,singular", "2,conservative,singular",
                        "3,conservative,absolutely-continuous", "4,dissipative,absolutely-continuous",
                        "5,dissipative,absolutely-continuous"]
    assert load(out, "manifest.json")["nu"] == "2"


def test_verify_on_c2(tmp_path):
    rc, out = invoke(tmp_path, "verify-41", "--config", str(CONFIGS / "c2.ini"))
    assert rc == 0
    res = load(out)
    assert res["equal"] is True
    assert res["results"][0]["lhs"] == res["results"][0]["rhs"] == "27/8"


def test_build_writes_stage_table(tmp_path):
    rc, out = invoke(tmp_path, "build", "--config", str(CONFIGS / "chacon.ini"), "--max-stage", "3")
    assert rc == 0
    lines = (out / "stages.csv").read_text().splitlines()
    assert lines[0] == "j,r,h,spacers,floor_measure"
    assert lines[1:] == ["1,3,1,0;1;0,1/1", "2,3,4,0;1;0,1/3", "3,3,13,0;1;0,1/9"]


def test_manifest_echoes_config(tmp_path):
    rc, out = invoke(tmp_path, "sidon-check", "--config", str(CONFIGS / "sidon3.ini"), "--seed", "9")
    assert rc == 0
    man = load(out, "manifest.json")
    assert man["seed"] == 9 and load(out)["seed"] == 9
    assert man["config_text"] == (CONFIGS / "sidon3.ini").read_text()
    assert man["outputs"] == ["result.json", "sidon.csv"]
    assert load(out)["all_sidon"] is True


def test_poisson_exact_and_mc(tmp_path):
    rc, out = invoke(tmp_path, "poisson", "--config", str(CONFIGS / "poisson.ini"), "--seed", "3")
    assert rc == 0
    res = load(out)
    assert (res["exact"]["coeff"], res["exact"]["exponent"]) == ("1/2", "3/2")
    assert abs(float(res["mc"]["z"])) < 4


def test_missing_config_is_invalid(tmp_path, capsys):
    rc, _ = invoke(tmp_path, "build", "--config", str(tmp_path / "nope.ini"))
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["status"] == 1 and err["error"]


def test_bad_schedule_is_invalid(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("h1 = 1\nstage 1: r=1 s=0\n")
    assert invoke(tmp_path, "build", "--config", str(cfg))[0] == 1


@pytest.mark.parametrize("argv", [["build", "--jobs", "0"], ["classify", "--seed", "-1"], ["nonsense"],
                                  ["build", "--max-stage", "x"]])
def test_usage_errors_exit_one(tmp_path, argv):
    with pytest.raises(SystemExit) as exc:
        rc = run(argv + ["--out", str(tmp_path)])
        raise SystemExit(rc)
    assert exc.value.code == 1


def test_budget_exhaustion_exits_two(tmp_path):
    cfg = tmp_path / "chacon.ini"
    cfg.write_text("h1 = 1\nrule = repeat(r=3, s=0;1;0)\nstages = 6\n[correlate]\nlags = 1\n")
    assert invoke(tmp_path, "correlate", "--config", str(cfg), "--max-stage", "4")[0] == 2


def test_rational_formatting():
    assert to_jsonable(Fraction(6, 4)) == "3/2"
    assert to_jsonable(Fraction(3)) == "3/1"
    assert to_jsonable(2**60) == str(2**60)
    assert to_jsonable(ExactExp(1, 2))["exponent"] == "2/1"
    assert dumps({"b": 1, "a": Fraction(1, 3)}) == '{\n  "a": "1/3",\n  "b": 1\n}\n'
    assert csv_text(["x"], [[Fraction(1, 2)], [0.5]]) == "x\n1/2\n0.5\n"


def test_repeat_runs_identical(tmp_path):
    args = ["correlate", "--config", str(CONFIGS / "sidon3.ini"), "--seed", "4"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    for f in ("result.json", "manifest.json", "correlations.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
