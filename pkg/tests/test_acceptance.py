"""Acceptance gate: one PASS/FAIL line per criterion, at the stated tolerances."""
import pytest

from glauberlab.acceptance import CRITERIA, run_criterion

RUNTIME_LIMITS = {1: 10, 2: 60, 3: 60, 4: 5, 5: 10, 6: 30, 7: 1, 8: 120, 9: 180, 10: 30}


@pytest.mark.parametrize("func", CRITERIA, ids=[f.__name__.removeprefix("criterion_") for f in CRITERIA])
def test_criterion(func, capsys):
    res = run_criterion(func)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
    assert res.runtime < RUNTIME_LIMITS[res.number], f"runtime {res.runtime:.1f}s"
