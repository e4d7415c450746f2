from __future__ import annotations

import pytest

from rankone_lab import ConstructionSpec, StageParams, sidon_schedule

# criterion -> (passed, detail); filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (passed, detail)
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (len(k.rstrip("abcdefgh")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


def _chacon_rule(j: int, h: int) -> StageParams:
    return StageParams(3, (0, 1, 0))


@pytest.fixture
def chacon() -> ConstructionSpec:
    return ConstructionSpec(1, rule=_chacon_rule, name="chacon")


def _quad_rule(j: int, h: int) -> StageParams:
    return StageParams(3, (2 * 4 ** (j - 1), 4 * 4 ** (j - 1), 8 * 4 ** (j - 1)))


@pytest.fixture
def small_sidon() -> ConstructionSpec:
    """Stage ``j`` spacers ``(2, 4, 8) * 4^(j-1)``: offsets ``(0, 3, 8)`` on the first stage."""
    return ConstructionSpec(1, rule=_quad_rule, name="quad")


@pytest.fixture
def fast3() -> ConstructionSpec:
    return sidon_schedule([3, 3, 3, 3, 3])
